use std::sync::Arc;

use super::hoelder::{hoelder_seminorm, PathField, TwoParameterField};
use super::rough_path::GridRoughPath;
use super::smooth::SmoothMap;
use crate::error::{Error, Result};
use crate::linalg;

/// A controlled path `(Y, Y^dagger)` on the grid points `start..=end` of a
/// reference rough path. The remainder `Y^sharp_{s,t} = Y_{s,t} - Y^dagger_s X^1_{s,t}`
/// is derived, never stored.
///
/// Gubinelli derivatives are `target_dim x ref_dim` matrices, row-major.
#[derive(Debug, Clone)]
pub struct GridControlledPath {
    reference: Arc<GridRoughPath>,
    start: usize,
    target_dim: usize,
    values: Vec<f64>,
    gubinelli: Vec<f64>,
}

impl GridControlledPath {
    pub fn new(
        reference: Arc<GridRoughPath>,
        start: usize,
        target_dim: usize,
        values: Vec<f64>,
        gubinelli: Vec<f64>,
    ) -> Result<Self> {
        if target_dim == 0 {
            return Err(Error::InvalidParameter("target dimension must be positive".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(target_dim) {
            return Err(Error::DimensionMismatch {
                what: "controlled path values",
                expected: target_dim,
                got: values.len(),
            });
        }
        let len = values.len() / target_dim;
        let end = start + len - 1;
        reference.grid().check_index(end)?;
        let d = reference.dim();
        if gubinelli.len() != len * target_dim * d {
            return Err(Error::DimensionMismatch {
                what: "Gubinelli derivative",
                expected: len * target_dim * d,
                got: gubinelli.len(),
            });
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: start + p / target_dim,
            });
        }
        if let Some(p) = gubinelli.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: start + p / (target_dim * d),
            });
        }
        Ok(Self {
            reference,
            start,
            target_dim,
            values,
            gubinelli,
        })
    }

    /// `t -> (xi + A X^1_{0,t}, A)` on the whole grid; its remainder vanishes.
    pub fn affine(reference: Arc<GridRoughPath>, xi: &[f64], a: &[f64]) -> Result<Self> {
        let p = xi.len();
        let d = reference.dim();
        if a.len() != p * d {
            return Err(Error::DimensionMismatch {
                what: "affine coefficient",
                expected: p * d,
                got: a.len(),
            });
        }
        let n = reference.n_steps();
        let mut values = Vec::with_capacity((n + 1) * p);
        let mut gub = Vec::with_capacity((n + 1) * p * d);
        for k in 0..=n {
            let mut v = xi.to_vec();
            linalg::gemv_add(a, p, d, reference.level1_at(k), &mut v);
            values.extend(v);
            gub.extend_from_slice(a);
        }
        Self::new(reference, 0, p, values, gub)
    }

    /// The integrand `t -> (X^1_{0,t} (x) .)` with derivative the identity of
    /// `V (x) V`; its rough integral over `[0, t]` is `X^2_{0,t}`.
    pub fn tensor_integrand(reference: Arc<GridRoughPath>) -> Result<Self> {
        let d = reference.dim();
        let n = reference.n_steps();
        let p = d * d * d; // L(V, V (x) V) flattened as ((a, b), c)
        let mut values = Vec::with_capacity((n + 1) * p);
        for k in 0..=n {
            let x = reference.level1_at(k);
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        values.push(if b == c { x[a] } else { 0.0 });
                    }
                }
            }
        }
        // gubinelli[((a, b), c), a'] = delta_{a a'} delta_{b c}
        let mut g = vec![0.0; p * d];
        for a in 0..d {
            for b in 0..d {
                let row = ((a * d + b) * d + b) * d + a;
                g[row] = 1.0;
            }
        }
        let gub = g.repeat(n + 1);
        Self::new(reference, 0, p, values, gub)
    }

    pub fn reference(&self) -> &Arc<GridRoughPath> {
        &self.reference
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Last grid index covered (inclusive).
    pub fn end(&self) -> usize {
        self.start + self.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.target_dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn ref_dim(&self) -> usize {
        self.reference.dim()
    }

    pub fn step(&self) -> f64 {
        self.reference.grid().step()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gubinelli(&self) -> &[f64] {
        &self.gubinelli
    }

    /// Value at local index `k` (global index `start + k`).
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.target_dim..(k + 1) * self.target_dim]
    }

    pub fn gubinelli_at(&self, k: usize) -> &[f64] {
        let w = self.target_dim * self.ref_dim();
        &self.gubinelli[k * w..(k + 1) * w]
    }

    pub fn last_value(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// `Y^sharp` over local indices `(i, k)`.
    pub fn remainder_into(&self, i: usize, k: usize, dx: &mut [f64], out: &mut [f64]) {
        self.reference.increment_into(self.start + i, self.start + k, dx);
        let yi = self.value(i);
        let yk = self.value(k);
        for q in 0..self.target_dim {
            out[q] = yk[q] - yi[q];
        }
        let g = self.gubinelli_at(i);
        let d = self.ref_dim();
        for q in 0..self.target_dim {
            let row = &g[q * d..(q + 1) * d];
            out[q] -= row.iter().zip(dx.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn remainder(&self, i: usize, k: usize) -> Vec<f64> {
        let mut dx = vec![0.0; self.ref_dim()];
        let mut out = vec![0.0; self.target_dim];
        self.remainder_into(i, k, &mut dx, &mut out);
        out
    }

    pub fn value_field(&self) -> PathField<'_> {
        PathField::new(&self.values, self.target_dim)
    }

    pub fn gubinelli_field(&self) -> PathField<'_> {
        PathField::new(&self.gubinelli, self.target_dim * self.ref_dim())
    }

    pub fn remainder_field(&self) -> RemainderField<'_> {
        RemainderField { cp: self }
    }

    /// `(||Y^dagger||_gamma, ||Y^sharp||_{2 gamma})`, the controlled-path seminorm pair.
    pub fn seminorms(&self, gamma: f64, pair_budget: usize) -> Result<(f64, f64)> {
        let h = self.step();
        let g = hoelder_seminorm(&self.gubinelli_field(), h, gamma, pair_budget)?;
        let r = hoelder_seminorm(&self.remainder_field(), h, 2.0 * gamma, pair_budget)?;
        Ok((g, r))
    }

    pub fn path_seminorm(&self, gamma: f64, pair_budget: usize) -> Result<f64> {
        hoelder_seminorm(&self.value_field(), self.step(), gamma, pair_budget)
    }

    /// Restriction to a grid `factor` times coarser; `coarse` must be the
    /// reference coarsened by the same factor.
    pub fn restrict(&self, coarse: Arc<GridRoughPath>, factor: usize) -> Result<Self> {
        if factor == 0 || !self.start.is_multiple_of(factor) || !(self.len() - 1).is_multiple_of(factor) {
            return Err(Error::InvalidParameter(format!(
                "controlled path on [{}, {}] cannot be restricted by factor {factor}",
                self.start,
                self.end()
            )));
        }
        if coarse.n_steps() * factor != self.reference.n_steps() || coarse.dim() != self.ref_dim() {
            return Err(Error::GridMismatch("coarse reference does not match".into()));
        }
        let mut values = Vec::new();
        let mut gub = Vec::new();
        for k in (0..self.len()).step_by(factor) {
            values.extend_from_slice(self.value(k));
            gub.extend_from_slice(self.gubinelli_at(k));
        }
        Self::new(coarse, self.start / factor, self.target_dim, values, gub)
    }
}

pub struct RemainderField<'a> {
    cp: &'a GridControlledPath,
}

impl TwoParameterField for RemainderField<'_> {
    fn n_points(&self) -> usize {
        self.cp.len()
    }

    fn magnitude(&self, i: usize, k: usize) -> f64 {
        linalg::norm(&self.cp.remainder(i, k))
    }

    fn scan_row(&self, i: usize, last: usize, visit: &mut dyn FnMut(usize, f64)) {
        let mut dx = vec![0.0; self.cp.ref_dim()];
        let mut out = vec![0.0; self.cp.target_dim()];
        for k in i + 1..=last {
            self.cp.remainder_into(i, k, &mut dx, &mut out);
            visit(k, linalg::norm(&out));
        }
    }
}

/// `(g(Y), grad g(Y) Y^dagger)`.
pub fn compose_smooth<G: SmoothMap + ?Sized>(g: &G, cp: &GridControlledPath) -> Result<GridControlledPath> {
    let p = cp.target_dim();
    if g.in_dim() != p {
        return Err(Error::DimensionMismatch {
            what: "smooth map input",
            expected: p,
            got: g.in_dim(),
        });
    }
    let q = g.out_dim();
    let d = cp.ref_dim();
    let mut values = vec![0.0; cp.len() * q];
    let mut gub = vec![0.0; cp.len() * q * d];
    let mut grad = vec![0.0; q * p];
    for k in 0..cp.len() {
        let y = cp.value(k);
        g.value(y, &mut values[k * q..(k + 1) * q]);
        g.gradient(y, &mut grad);
        linalg::matmul(&grad, cp.gubinelli_at(k), q, p, d, &mut gub[k * q * d..(k + 1) * q * d]);
        if values[k * q..(k + 1) * q].iter().any(|v| !v.is_finite())
            || gub[k * q * d..(k + 1) * q * d].iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { index: cp.start() + k });
        }
    }
    GridControlledPath::new(cp.reference().clone(), cp.start(), q, values, gub)
}

/// Upper bound on `||g(Y)^sharp||_{2 beta}` from the Taylor expansion of `g`:
/// `|grad g|_inf ||Y^sharp||_{2 beta} + 1/2 |grad^2 g|_inf ||Y||_beta^2`.
pub fn composition_remainder_bound(grad_sup: f64, hess_sup: f64, path_beta: f64, remainder_2beta: f64) -> f64 {
    grad_sup * remainder_2beta + 0.5 * hess_sup * path_beta * path_beta
}

/// Concatenation `(Y * Y', Y^dagger * Y'^dagger)` of two controlled paths
/// sharing their junction point exactly.
pub fn concat_cp(left: &GridControlledPath, right: &GridControlledPath) -> Result<GridControlledPath> {
    if !(Arc::ptr_eq(left.reference(), right.reference()) || left.reference() == right.reference()) {
        return Err(Error::GridMismatch("controlled paths have different references".into()));
    }
    if left.target_dim() != right.target_dim() {
        return Err(Error::DimensionMismatch {
            what: "concatenated target",
            expected: left.target_dim(),
            got: right.target_dim(),
        });
    }
    if left.end() != right.start() {
        return Err(Error::GridMismatch(format!(
            "left ends at {}, right starts at {}",
            left.end(),
            right.start()
        )));
    }
    if left.last_value() != right.value(0) || left.gubinelli_at(left.len() - 1) != right.gubinelli_at(0) {
        return Err(Error::JunctionMismatch);
    }
    let p = left.target_dim();
    let w = p * left.ref_dim();
    let mut values = left.values().to_vec();
    values.extend_from_slice(&right.values()[p..]);
    let mut gub = left.gubinelli().to_vec();
    gub.extend_from_slice(&right.gubinelli()[w..]);
    GridControlledPath::new(left.reference().clone(), left.start(), p, values, gub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::hoelder::DEFAULT_PAIR_BUDGET;
    use crate::algebra::smooth::{ClosureMap, Constant, Identity};
    use crate::algebra::{Grid, HoelderExponent};

    fn time_path(n: usize) -> Arc<GridRoughPath> {
        let grid = Grid::new(1.0, n).unwrap();
        let v: Vec<f64> = grid.times();
        Arc::new(GridRoughPath::piecewise_linear(1, grid, &v, HoelderExponent::new(0.5).unwrap()).unwrap())
    }

    #[test]
    fn compose_identity_and_constant() {
        let rp = time_path(10);
        let cp = GridControlledPath::affine(rp.clone(), &[0.3], &[1.0]).unwrap();
        let id = compose_smooth(&Identity(1), &cp).unwrap();
        assert_eq!(id.values(), cp.values());
        assert_eq!(id.gubinelli(), cp.gubinelli());
        let c = compose_smooth(
            &Constant {
                in_dim: 1,
                value: vec![2.0, -1.0],
            },
            &cp,
        )
        .unwrap();
        assert!(c.values().chunks(2).all(|v| v == [2.0, -1.0]));
        assert!(c.gubinelli().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn compose_square_remainder_is_quadratic() {
        let rp = time_path(64);
        let cp = GridControlledPath::affine(rp.clone(), &[0.0], &[1.0]).unwrap();
        let sq = compose_smooth(&ClosureMap::scalar(|y| y * y, |y| 2.0 * y, |_| 2.0), &cp).unwrap();
        let times = rp.grid().times();
        for (k, t) in times.iter().enumerate() {
            assert!((sq.value(k)[0] - t * t).abs() < 1e-15);
            assert!((sq.gubinelli_at(k)[0] - 2.0 * t).abs() < 1e-15);
        }
        // (t^2 - s^2) - 2s(t - s) = (t - s)^2
        for (i, k) in [(0, 1), (3, 10), (5, 64)] {
            let dt = times[k] - times[i];
            assert!((sq.remainder(i, k)[0] - dt * dt).abs() < 1e-14);
        }
        let (_, rem) = sq.seminorms(0.5, DEFAULT_PAIR_BUDGET).unwrap();
        let y_beta = cp.path_seminorm(0.5, DEFAULT_PAIR_BUDGET).unwrap();
        let bound = composition_remainder_bound(2.0, 2.0, y_beta, 0.0);
        assert!(rem <= bound + 1e-12, "{rem} > {bound}");
    }

    #[test]
    fn concat_junction_identity() {
        let grid = Grid::new(1.0, 6).unwrap();
        let a = HoelderExponent::new(0.45).unwrap();
        let rp =
            Arc::new(GridRoughPath::new(1, grid, vec![0.0, 0.3, -0.1, 0.4, 0.2, 0.9, 0.5], vec![0.01; 6], a).unwrap());
        let left =
            GridControlledPath::new(rp.clone(), 0, 1, vec![1.0, 1.2, 0.7, 1.5], vec![0.5, -0.3, 0.8, 0.2]).unwrap();
        let right =
            GridControlledPath::new(rp.clone(), 3, 1, vec![1.5, 1.1, 2.0, 1.9], vec![0.2, 1.0, -0.4, 0.6]).unwrap();
        let z = concat_cp(&left, &right).unwrap();
        assert_eq!(z.len(), 7);
        let b = 3;
        for s in 0..b {
            for t in b + 1..=6 {
                let lhs = z.remainder(s, t)[0];
                let rhs = left.remainder(s, b)[0]
                    + right.remainder(0, t - b)[0]
                    + (left.gubinelli_at(b)[0] - left.gubinelli_at(s)[0]) * rp.increment(b, t)[0];
                assert!((lhs - rhs).abs() < 1e-14);
            }
        }
        let single = GridControlledPath::new(rp.clone(), 3, 1, vec![1.5], vec![0.2]).unwrap();
        let same = concat_cp(&left, &single).unwrap();
        assert_eq!(same.values(), left.values());
        let bad = GridControlledPath::new(rp, 3, 1, vec![1.6], vec![0.2]).unwrap();
        assert!(matches!(concat_cp(&left, &bad), Err(Error::JunctionMismatch)));
    }

    #[test]
    fn tensor_integrand_has_zero_remainder() {
        let grid = Grid::new(1.0, 5).unwrap();
        let a = HoelderExponent::new(0.45).unwrap();
        let rp = Arc::new(
            GridRoughPath::new(
                2,
                grid,
                vec![0.0, 0.0, 0.3, 0.1, -0.1, 0.5, 0.4, 0.2, 0.2, 0.9, 0.5, 0.3],
                vec![0.01; 20],
                a,
            )
            .unwrap(),
        );
        let cp = GridControlledPath::tensor_integrand(rp).unwrap();
        for i in 0..5 {
            for k in i + 1..=5 {
                assert!(cp.remainder(i, k).iter().all(|v| v.abs() < 1e-15));
            }
        }
    }
}
