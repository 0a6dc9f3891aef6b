//! Rough integration of controlled paths by compensated Riemann sums.
//!
//! The local model on a cell is `J_{s,t} = Y_s X^1_{s,t} + Y^dagger_s <X^2_{s,t}>`.
//! The grid itself is the partition, so the integral between two grid
//! points is the sum of the cell summands between them.

use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra::{GridControlledPath, GridRoughPath};
use crate::error::{Error, Result};
use crate::linalg::{self, CompensatedSum};

/// Above this many cells the accumulation switches to compensated summation.
pub const COMPENSATED_THRESHOLD: usize = 100_000;

const PARALLEL_THRESHOLD: usize = 4096;

fn same_reference(cp: &GridControlledPath, rp: &Arc<GridRoughPath>) -> bool {
    Arc::ptr_eq(cp.reference(), rp) || **cp.reference() == **rp
}

/// Output dimension of a matrix-valued integrand, checking its shape.
fn integrand_output_dim(cp: &GridControlledPath, rp: &GridRoughPath) -> Result<usize> {
    let d = rp.dim();
    if cp.ref_dim() != d {
        return Err(Error::DimensionMismatch {
            what: "integrand reference dimension",
            expected: d,
            got: cp.ref_dim(),
        });
    }
    if !cp.target_dim().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            what: "integrand must be L(V, W)-valued",
            expected: d,
            got: cp.target_dim(),
        });
    }
    Ok(cp.target_dim() / d)
}

fn summand_into(cp: &GridControlledPath, rp: &GridRoughPath, i: usize, w: usize, dx: &mut [f64], out: &mut [f64]) {
    let d = rp.dim();
    let local = i - cp.start();
    rp.increment_into(i, i + 1, dx);
    out.iter_mut().for_each(|v| *v = 0.0);
    linalg::gemv_add(cp.value(local), w, d, dx, out);
    linalg::bilinear_add(cp.gubinelli_at(local), w, d, rp.cell(i), out);
}

/// `J_{t_i,t_{i+1}} = Y_{t_i} X^1_{t_i,t_{i+1}} + Y^dagger_{t_i} <X^2_{t_i,t_{i+1}}>`.
pub fn local_summand(cp: &GridControlledPath, rp: &Arc<GridRoughPath>, i: usize) -> Result<Vec<f64>> {
    let w = integrand_output_dim(cp, rp)?;
    if !same_reference(cp, rp) {
        return Err(Error::GridMismatch(
            "integrand is controlled by a different rough path".into(),
        ));
    }
    if i < cp.start() || i + 1 > cp.end() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: cp.end() + 1,
        });
    }
    let mut dx = vec![0.0; rp.dim()];
    let mut out = vec![0.0; w];
    summand_into(cp, rp, i, w, &mut dx, &mut out);
    Ok(out)
}

/// The integral together with its controlled-path structure.
#[derive(Debug, Clone)]
pub struct RoughIntegral {
    /// `int_{t_i}^{t_k} Y dX`.
    pub value: Vec<f64>,
    /// `(int_{t_i}^{.} Y dX, Y)` on the grid points `i..=k`.
    pub as_cp: GridControlledPath,
}

/// `int_{t_i}^{t_k} Y dX` as the sum of cell summands.
pub fn rough_integral(cp: &GridControlledPath, rp: &Arc<GridRoughPath>, i: usize, k: usize) -> Result<RoughIntegral> {
    let w = integrand_output_dim(cp, rp)?;
    if !same_reference(cp, rp) {
        return Err(Error::GridMismatch(
            "integrand is controlled by a different rough path".into(),
        ));
    }
    if i > k {
        return Err(Error::InvalidRange { start: i, end: k });
    }
    if i < cp.start() || k > cp.end() {
        return Err(Error::IndexOutOfRange {
            index: if i < cp.start() { i } else { k },
            len: cp.end() + 1,
        });
    }
    let d = rp.dim();
    let n_cells = k - i;

    let summands: Vec<f64> = if n_cells >= PARALLEL_THRESHOLD {
        (i..k)
            .into_par_iter()
            .flat_map_iter(|j| {
                let mut dx = vec![0.0; d];
                let mut out = vec![0.0; w];
                summand_into(cp, rp, j, w, &mut dx, &mut out);
                out
            })
            .collect()
    } else {
        let mut dx = vec![0.0; d];
        let mut out = vec![0.0; w];
        let mut all = Vec::with_capacity(n_cells * w);
        for j in i..k {
            summand_into(cp, rp, j, w, &mut dx, &mut out);
            all.extend_from_slice(&out);
        }
        all
    };

    // reduction in index order
    let mut values = Vec::with_capacity((n_cells + 1) * w);
    values.extend(std::iter::repeat_n(0.0, w));
    if n_cells >= COMPENSATED_THRESHOLD {
        let mut acc = vec![CompensatedSum::new(); w];
        for j in 0..n_cells {
            for (a, s) in acc.iter_mut().zip(&summands[j * w..(j + 1) * w]) {
                a.add(*s);
            }
            values.extend(acc.iter().map(CompensatedSum::value));
        }
    } else {
        let mut acc = vec![0.0; w];
        for j in 0..n_cells {
            linalg::add_assign(&mut acc, &summands[j * w..(j + 1) * w]);
            values.extend_from_slice(&acc);
        }
    }
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i + p / w });
    }
    let value = values[n_cells * w..].to_vec();
    let gub: Vec<f64> = (i..=k).flat_map(|j| cp.value(j - cp.start()).iter().copied()).collect();
    let as_cp = GridControlledPath::new(rp.clone(), i, w, values, gub)?;
    Ok(RoughIntegral { value, as_cp })
}

// B_{2k} / (2k)! for k = 1..=8
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
    -3617.0 / 510.0 / 20922789888000.0,
];

/// Riemann zeta for real `s > 1` by Euler-Maclaurin summation.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("zeta(s) needs s > 1, got {s}")));
    }
    const N: usize = 16;
    let nf = N as f64;
    let mut sum = 0.0;
    for n in (1..N).rev() {
        sum += (n as f64).powf(-s);
    }
    sum += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    // rising factorial s (s+1) ... (s+2k-2)
    let mut rising = s;
    let mut power = nf.powf(-s - 1.0);
    for (k, c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        if k > 0 {
            let j = 2.0 * k as f64;
            rising *= (s + j - 1.0) * (s + j);
            power /= nf * nf;
        }
        sum += c * rising * power;
    }
    Ok(sum)
}

/// The sewing constant `kappa_alpha = 2^{3 alpha} zeta(3 alpha)`.
pub fn kappa(alpha: f64) -> Result<f64> {
    if !(3.0 * alpha > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa needs 3 alpha > 1, got alpha = {alpha}"
        )));
    }
    Ok(2f64.powf(3.0 * alpha) * zeta(3.0 * alpha)?)
}

/// Seminorms entering the local integration error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrandNorms {
    /// `||Y^sharp||_{2 alpha}`
    pub remainder: f64,
    /// `||Y^dagger||_alpha`
    pub gubinelli: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverNorms {
    /// `||X^1||_alpha`
    pub level1: f64,
    /// `||X^2||_{2 alpha}`
    pub level2: f64,
}

/// `kappa_alpha (t-s)^{3 alpha} (||Y^sharp|| ||X^1|| + ||Y^dagger|| ||X^2||)`.
pub fn integral_error_bound(cp: IntegrandNorms, rp: DriverNorms, alpha: f64, s: f64, t: f64) -> Result<f64> {
    if t < s {
        return Err(Error::InvalidParameter(format!("interval [{s}, {t}] is reversed")));
    }
    let bracket = cp.remainder * rp.level1 + cp.gubinelli * rp.level2;
    if bracket == 0.0 || t == s {
        return Ok(0.0);
    }
    Ok(kappa(alpha)? * (t - s).powf(3.0 * alpha) * bracket)
}
