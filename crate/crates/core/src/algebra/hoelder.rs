//! Discrete Hoelder seminorms of two-parameter fields.
//!
//! On a grid the seminorm `sup |F(s,t)| / (t-s)^gamma` can only be evaluated
//! on grid pairs, so every value here is a lower bound of the continuum
//! seminorm. When the number of pairs exceeds the budget, only pairs whose
//! span is a power of two (which includes all adjacent pairs) plus the full
//! span are scanned; the result is then a cruder lower bound.

use rayon::prelude::*;

use super::grid::HoelderExponent;
use super::rough_path::GridRoughPath;
use crate::error::{Error, Result};
use crate::linalg;

/// Every pair up to `N = 2000` grid steps.
pub const DEFAULT_PAIR_BUDGET: usize = 4_000_000;

/// A field `F(i, k)` on grid pairs `i < k`, reported by magnitude.
pub trait TwoParameterField: Sync {
    /// Number of grid points the field lives on.
    fn n_points(&self) -> usize;

    fn magnitude(&self, i: usize, k: usize) -> f64;

    /// Visits `(k, |F(i,k)|)` for `k = i+1..=last` in order. Fields with a
    /// cheap incremental structure override this.
    fn scan_row(&self, i: usize, last: usize, visit: &mut dyn FnMut(usize, f64)) {
        for k in i + 1..=last {
            visit(k, self.magnitude(i, k));
        }
    }
}

/// Which pairs a scan evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSet {
    All,
    DyadicAndAdjacent,
}

impl PairSet {
    pub fn for_budget(n_points: usize, pair_budget: usize) -> PairSet {
        let n = n_points as u128;
        let pairs = n * n.saturating_sub(1) / 2;
        if pairs <= pair_budget as u128 {
            PairSet::All
        } else {
            PairSet::DyadicAndAdjacent
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoelderEstimate {
    pub value: f64,
    /// Maximizing pair (local indices).
    pub argmax: (usize, usize),
    pub pairs: PairSet,
}

/// `max |F(i,k)| / (t_k - t_i)^gamma` over the pair set chosen by `pair_budget`.
pub fn hoelder_scan<F: TwoParameterField + ?Sized>(
    field: &F,
    step: f64,
    gamma: f64,
    pair_budget: usize,
) -> Result<HoelderEstimate> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Hoelder exponent gamma must lie in (0, 1], got {gamma}"
        )));
    }
    let n_points = field.n_points();
    if n_points < 2 {
        return Err(Error::EmptyGrid);
    }
    let last = n_points - 1;
    // span^gamma, indexed by span in steps
    let denom: Vec<f64> = (0..n_points).map(|s| (s as f64 * step).powf(gamma)).collect();
    let pairs = PairSet::for_budget(n_points, pair_budget);
    let best = |a: (f64, usize, usize), b: (f64, usize, usize)| {
        if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
            b
        } else {
            a
        }
    };
    let (value, i, k) = match pairs {
        PairSet::All => (0..last)
            .into_par_iter()
            .map(|i| {
                let mut row_best = (0.0_f64, i, i + 1);
                field.scan_row(i, last, &mut |k, m| {
                    row_best = best(row_best, (m / denom[k - i], i, k));
                });
                row_best
            })
            .reduce(|| (0.0, 0, 1), best),
        PairSet::DyadicAndAdjacent => {
            let mut spans = Vec::new();
            let mut s = 1;
            while s <= last {
                spans.push(s);
                s *= 2;
            }
            let mut acc = (field.magnitude(0, last) / denom[last], 0, last);
            for &s in &spans {
                let row = (0..=last - s)
                    .into_par_iter()
                    .map(|i| (field.magnitude(i, i + s) / denom[s], i, i + s))
                    .reduce(|| (0.0, 0, 1), best);
                acc = best(acc, row);
            }
            acc
        }
    };
    Ok(HoelderEstimate {
        value,
        argmax: (i, k),
        pairs,
    })
}

pub fn hoelder_seminorm<F: TwoParameterField + ?Sized>(
    field: &F,
    step: f64,
    gamma: f64,
    pair_budget: usize,
) -> Result<f64> {
    hoelder_scan(field, step, gamma, pair_budget).map(|e| e.value)
}

/// Increments `Y_k - Y_i` of a vector-valued path stored row by row.
pub struct PathField<'a> {
    values: &'a [f64],
    dim: usize,
}

impl<'a> PathField<'a> {
    pub fn new(values: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && values.len().is_multiple_of(dim));
        Self { values, dim }
    }
}

impl TwoParameterField for PathField<'_> {
    fn n_points(&self) -> usize {
        self.values.len() / self.dim
    }

    fn magnitude(&self, i: usize, k: usize) -> f64 {
        let d = self.dim;
        let a = &self.values[i * d..(i + 1) * d];
        let b = &self.values[k * d..(k + 1) * d];
        a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
    }
}

/// Level-2 blocks `X^2_{t_i,t_k}` of a rough path.
pub struct Level2Field<'a> {
    rp: &'a GridRoughPath,
}

impl<'a> Level2Field<'a> {
    pub fn new(rp: &'a GridRoughPath) -> Self {
        Self { rp }
    }
}

impl TwoParameterField for Level2Field<'_> {
    fn n_points(&self) -> usize {
        self.rp.n_steps() + 1
    }

    fn magnitude(&self, i: usize, k: usize) -> f64 {
        linalg::norm(&self.rp.chen_block(i, k).expect("indices checked by caller"))
    }

    fn scan_row(&self, i: usize, last: usize, visit: &mut dyn FnMut(usize, f64)) {
        self.rp
            .scan_level2_row(i, last, &mut |k, block| visit(k, linalg::norm(block)));
    }
}

/// Adapter for an arbitrary closure `(i, k) -> |F(i,k)|`.
pub struct FnField<F> {
    n_points: usize,
    f: F,
}

impl<F: Fn(usize, usize) -> f64 + Sync> FnField<F> {
    pub fn new(n_points: usize, f: F) -> Self {
        Self { n_points, f }
    }
}

impl<F: Fn(usize, usize) -> f64 + Sync> TwoParameterField for FnField<F> {
    fn n_points(&self) -> usize {
        self.n_points
    }

    fn magnitude(&self, i: usize, k: usize) -> f64 {
        (self.f)(i, k)
    }
}

/// Level-1 and level-2 seminorms `(||X^1||_alpha, ||X^2||_{2 alpha})` over the
/// same pair set.
pub fn rough_path_seminorms(rp: &GridRoughPath, alpha: HoelderExponent, pair_budget: usize) -> Result<(f64, f64)> {
    let h = rp.grid().step();
    let a = alpha.value();
    let l1 = hoelder_seminorm(&PathField::new(rp.level1(), rp.dim()), h, a, pair_budget)?;
    let l2 = hoelder_seminorm(&Level2Field::new(rp), h, 2.0 * a, pair_budget)?;
    Ok((l1, l2))
}

/// Homogeneous norm `||X^1||_alpha + ||X^2||_{2 alpha}^{1/2}`.
pub fn homogeneous_norm(rp: &GridRoughPath, alpha: HoelderExponent, pair_budget: usize) -> Result<f64> {
    let (l1, l2) = rough_path_seminorms(rp, alpha, pair_budget)?;
    Ok(l1 + l2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Grid;

    fn linear_path(slope: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| slope * k as f64 / n as f64).collect()
    }

    #[test]
    fn identity_path_half() {
        let v = linear_path(1.0, 50);
        let est = hoelder_seminorm(&PathField::new(&v, 1), 1.0 / 50.0, 0.5, DEFAULT_PAIR_BUDGET).unwrap();
        assert!((est - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubled_path() {
        let v = linear_path(2.0, 64);
        let scan = hoelder_scan(&PathField::new(&v, 1), 1.0 / 64.0, 0.4, DEFAULT_PAIR_BUDGET).unwrap();
        assert!((scan.value - 2.0).abs() < 1e-12);
        assert_eq!(scan.argmax, (0, 64));
        assert_eq!(scan.pairs, PairSet::All);
    }

    #[test]
    fn constant_path_is_zero() {
        let v = vec![3.0; 20];
        assert_eq!(hoelder_seminorm(&PathField::new(&v, 1), 0.1, 0.5, 10).unwrap(), 0.0);
    }

    #[test]
    fn dyadic_fallback_is_lower_bound() {
        let v: Vec<f64> = (0..=100).map(|k| ((k * 37 % 11) as f64).sin()).collect();
        let f = PathField::new(&v, 1);
        let full = hoelder_scan(&f, 0.01, 0.45, DEFAULT_PAIR_BUDGET).unwrap();
        let cheap = hoelder_scan(&f, 0.01, 0.45, 10).unwrap();
        assert_eq!(cheap.pairs, PairSet::DyadicAndAdjacent);
        assert!(cheap.value <= full.value);
        assert!(cheap.value > 0.0);
    }

    #[test]
    fn errors() {
        let v = vec![0.0];
        assert!(matches!(
            hoelder_seminorm(&PathField::new(&v, 1), 0.1, 0.5, 10),
            Err(Error::EmptyGrid)
        ));
        let v = vec![0.0, 1.0];
        assert!(hoelder_seminorm(&PathField::new(&v, 1), 0.1, 0.0, 10).is_err());
        assert!(hoelder_seminorm(&PathField::new(&v, 1), 0.1, 1.5, 10).is_err());
    }

    #[test]
    fn homogeneous_norm_of_geometric_linear_path() {
        let n = 40;
        let grid = Grid::new(1.0, n).unwrap();
        let alpha = HoelderExponent::new(0.5).unwrap();
        let rp = GridRoughPath::piecewise_linear(1, grid, &linear_path(1.0, n), alpha).unwrap();
        let norm = homogeneous_norm(&rp, alpha, DEFAULT_PAIR_BUDGET).unwrap();
        // brute-force scan: both suprema at the full span
        let mut l1 = 0.0_f64;
        let mut l2 = 0.0_f64;
        for i in 0..n {
            for k in i + 1..=n {
                let dt = (k - i) as f64 / n as f64;
                l1 = l1.max(dt / dt.powf(0.5));
                l2 = l2.max(0.5 * dt * dt / dt);
            }
        }
        assert!((norm - (l1 + l2.sqrt())).abs() < 1e-12);
        assert!((norm - (1.0 + 0.5_f64.sqrt())).abs() < 1e-12);
    }
}
