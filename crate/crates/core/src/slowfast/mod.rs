//! The slow-fast system
//!
//! `dX = f(X, Y) dt + sigma(X) dB`,
//! `dY = eps^{-1} g(X, Y) dt + eps^{-1/2} h(X, Y) dW`,
//!
//! read as a single RDE on `R^{m+n}` driven by the mixed lift of `(B, W)`.

mod models;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use models::{
    spot_check_assumptions, AssumptionMeta, AssumptionReport, ClosedForm, Cubic, CubicParams, ModelSpec, OuSine,
    OuSineParams, SlowFastModel,
};

use crate::algebra::hoelder_seminorm;
use crate::algebra::{GridControlledPath, GridRoughPath, HoelderExponent, PathField, SmoothMap, DEFAULT_PAIR_BUDGET};
use crate::error::{Error, Result};
use crate::lifts::MicroIncrements;
use crate::linalg;
use crate::rde::{check_state, eval_sigma, step_kernel, Drift, ParamPath, StepWork, VectorFieldSet};

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1], got {eps}"
        )));
    }
    Ok(())
}

/// `F_eps(z) = (f, g / eps)` and the block-diagonal
/// `Sigma_eps(z) = diag(sigma(x), h(x, y) / sqrt(eps))`, the latter
/// row-major `(m + n) x (d + e)`.
pub fn assemble_blocks(model: &dyn SlowFastModel, eps: f64, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_epsilon(eps)?;
    let (m, n, d, e) = dims(model);
    if z.len() != m + n {
        return Err(Error::DimensionMismatch {
            what: "state (x, y)",
            expected: m + n,
            got: z.len(),
        });
    }
    let (x, y) = z.split_at(m);
    let mut drift = vec![0.0; m + n];
    model.f(x, y, &mut drift[..m]);
    model.g(x, y, &mut drift[m..]);
    drift[m..].iter_mut().for_each(|v| *v /= eps);
    let mut sig = vec![0.0; m * d];
    model.sigma().value(x, &mut sig);
    let mut h = vec![0.0; n * e];
    model.h(x, y, &mut h);
    let width = d + e;
    let mut block = vec![0.0; (m + n) * width];
    for i in 0..m {
        block[i * width..i * width + d].copy_from_slice(&sig[i * d..(i + 1) * d]);
    }
    let s = eps.sqrt();
    for i in 0..n {
        for b in 0..e {
            block[(m + i) * width + d + b] = h[i * e + b] / s;
        }
    }
    Ok((drift, block))
}

pub(crate) fn dims(model: &dyn SlowFastModel) -> (usize, usize, usize, usize) {
    (
        model.slow_dim(),
        model.fast_dim(),
        model.slow_noise_dim(),
        model.fast_noise_dim(),
    )
}

/// Grid step policy `h <= c_micro * eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroStepPolicy {
    pub c_micro: f64,
    /// Upper bound on the step independent of `eps`.
    pub h_base: f64,
}

impl Default for MicroStepPolicy {
    fn default() -> Self {
        Self {
            c_micro: 0.1,
            h_base: 0.01,
        }
    }
}

impl MicroStepPolicy {
    pub fn max_step(&self, eps: f64) -> f64 {
        self.h_base.min(self.c_micro * eps)
    }

    /// Number of grid steps on `[0, horizon]` complying with the policy.
    pub fn steps_for(&self, horizon: f64, eps: f64) -> usize {
        let n = (horizon / self.max_step(eps)).ceil() as usize;
        // guard against ceil landing one short through rounding
        if horizon / n as f64 > self.max_step(eps) {
            n + 1
        } else {
            n.max(1)
        }
    }

    pub fn check(&self, step: f64, eps: f64) -> Result<()> {
        let limit = self.c_micro * eps;
        if step > limit * (1.0 + 1e-12) {
            return Err(Error::PolicyViolation { step, limit });
        }
        Ok(())
    }
}

/// Switches for the rough terms of the fast update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeOptions {
    /// Include `eps^{-1/2} grad_x h . sigma <I[B,W]>`.
    pub cross_term: bool,
    /// Include `eps^{-1} grad_y h . h <W^2>`.
    pub fast_level2: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            cross_term: true,
            fast_level2: true,
        }
    }
}

/// Grid solution of the slow-fast system.
#[derive(Debug, Clone)]
pub struct SlowFastSolution {
    pub epsilon: f64,
    pub step: f64,
    m: usize,
    n: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    max_abs_y: f64,
}

impl SlowFastSolution {
    pub fn n_points(&self) -> usize {
        self.x.len() / self.m
    }

    pub fn slow_dim(&self) -> usize {
        self.m
    }

    pub fn fast_dim(&self) -> usize {
        self.n
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.m..(k + 1) * self.m]
    }

    pub fn y_at(&self, k: usize) -> &[f64] {
        &self.y[k * self.n..(k + 1) * self.n]
    }

    /// Slow values, row-major `(n_points, m)`.
    pub fn slow_path(&self) -> &[f64] {
        &self.x
    }

    /// Fast values, row-major `(n_points, n)`.
    pub fn fast_path(&self) -> &[f64] {
        &self.y
    }

    pub fn max_abs_y(&self) -> f64 {
        self.max_abs_y
    }

    /// Hoelder seminorm of the slow path.
    pub fn slow_seminorm(&self, beta: HoelderExponent) -> Result<f64> {
        hoelder_seminorm(
            &PathField::new(&self.x, self.m),
            self.step,
            beta.value(),
            DEFAULT_PAIR_BUDGET,
        )
    }

    /// `(X, sigma(X))` as a path controlled by the slow driver.
    pub fn slow_controlled(&self, b: Arc<GridRoughPath>, sigma: &dyn SmoothMap) -> Result<GridControlledPath> {
        let gub: Vec<f64> = self.x.chunks(self.m).flat_map(|x| sigma.value_vec(x)).collect();
        GridControlledPath::new(b, 0, self.m, self.x.clone(), gub)
    }
}

/// Buffers for the fast update.
pub(crate) struct FastWork {
    g: Vec<f64>,
    h: Vec<f64>,
    scaled_h: Vec<f64>,
    jx: Vec<f64>,
    jy: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl FastWork {
    pub(crate) fn new(model: &dyn SlowFastModel) -> Self {
        let (m, n, d, e) = dims(model);
        Self {
            g: vec![0.0; n],
            h: vec![0.0; n * e],
            scaled_h: vec![0.0; n * e],
            jx: vec![0.0; n * e * m],
            jy: vec![0.0; n * e * n],
            gx: vec![0.0; n * e * d],
            gy: vec![0.0; n * e * e],
        }
    }

    /// `out = y + eps^{-1} g dt + eps^{-1/2} h W^1`, then the optional
    /// `eps^{-1/2} grad_x h . sigma <I[B,W]>` (when `cross` carries
    /// `sigma(x)`) and `eps^{-1} grad_y h . h <W^2>`.
    pub(crate) fn step(
        &mut self,
        model: &dyn SlowFastModel,
        x: &[f64],
        y: &[f64],
        eps: f64,
        dt: f64,
        blk: &Blocks,
        cross: Option<&[f64]>,
        fast_level2: bool,
        out: &mut [f64],
    ) {
        let (m, n, d, e) = dims(model);
        let inv_eps = 1.0 / eps;
        let inv_sqrt = 1.0 / eps.sqrt();
        model.g(x, y, &mut self.g);
        model.h(x, y, &mut self.h);
        for i in 0..n {
            out[i] = y[i] + inv_eps * self.g[i] * dt;
        }
        for (s, v) in self.scaled_h.iter_mut().zip(&self.h) {
            *s = inv_sqrt * v;
        }
        linalg::gemv_add(&self.scaled_h, n, e, &blk.w1, out);
        if let Some(sigma) = cross {
            model.h_jac_x(x, y, &mut self.jx);
            linalg::matmul(&self.jx, sigma, n * e, m, d, &mut self.gx);
            self.gx.iter_mut().for_each(|v| *v *= inv_sqrt);
            linalg::bilinear_rect_add(&self.gx, n, d, e, &blk.bw, out);
        }
        if fast_level2 {
            model.h_jac_y(x, y, &mut self.jy);
            linalg::matmul(&self.jy, &self.h, n * e, n, e, &mut self.gy);
            self.gy.iter_mut().for_each(|v| *v *= inv_eps);
            linalg::bilinear_add(&self.gy, n, e, &blk.w2, out);
        }
    }
}

/// Cell blocks `B^1, B^2, W^1, I[B,W], W^2` of the mixed lift.
pub(crate) struct Blocks {
    b1: Vec<f64>,
    b2: Vec<f64>,
    w1: Vec<f64>,
    bw: Vec<f64>,
    w2: Vec<f64>,
}

impl Blocks {
    pub(crate) fn new(d: usize, e: usize) -> Self {
        Self {
            b1: vec![0.0; d],
            b2: vec![0.0; d * d],
            w1: vec![0.0; e],
            bw: vec![0.0; d * e],
            w2: vec![0.0; e * e],
        }
    }

    pub(crate) fn load(&mut self, xi: &GridRoughPath, k: usize, d: usize, e: usize) {
        let de = d + e;
        let l0 = xi.level1_at(k);
        let l1 = xi.level1_at(k + 1);
        for a in 0..d {
            self.b1[a] = l1[a] - l0[a];
        }
        for a in 0..e {
            self.w1[a] = l1[d + a] - l0[d + a];
        }
        let c = xi.cell(k);
        for a in 0..d {
            for b in 0..d {
                self.b2[a * d + b] = c[a * de + b];
            }
            for b in 0..e {
                self.bw[a * e + b] = c[a * de + d + b];
            }
        }
        for a in 0..e {
            for b in 0..e {
                self.w2[a * e + b] = c[(d + a) * de + d + b];
            }
        }
    }
}

/// Steps the slow-fast one-step scheme over every cell of `xi`.
pub fn solve_slow_fast(
    model: &dyn SlowFastModel,
    xi: &GridRoughPath,
    eps: f64,
    z0: &[f64],
    policy: &MicroStepPolicy,
    opts: SchemeOptions,
) -> Result<SlowFastSolution> {
    check_epsilon(eps)?;
    let (m, n, d, e) = dims(model);
    if xi.dim() != d + e {
        return Err(Error::DimensionMismatch {
            what: "mixed lift dimension",
            expected: d + e,
            got: xi.dim(),
        });
    }
    if z0.len() != m + n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: m + n,
            got: z0.len(),
        });
    }
    let dt = xi.grid().step();
    policy.check(dt, eps)?;
    check_state(z0, 0)?;
    let n_steps = xi.n_steps();
    let sigma = model.sigma();
    let mut xs = Vec::with_capacity((n_steps + 1) * m);
    let mut ys = Vec::with_capacity((n_steps + 1) * n);
    xs.extend_from_slice(&z0[..m]);
    ys.extend_from_slice(&z0[m..]);
    let mut slow = StepWork::new(m, d);
    let mut fw = FastWork::new(model);
    let mut blk = Blocks::new(d, e);
    let mut x_next = vec![0.0; m];
    let mut y_next = vec![0.0; n];
    let mut max_abs_y = z0[m..].iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    for k in 0..n_steps {
        let x = &xs[k * m..(k + 1) * m];
        let y = &ys[k * n..(k + 1) * n];
        blk.load(xi, k, d, e);

        // slow block: identical to one rough step with psi = Y
        model.f(x, y, &mut slow.drift);
        eval_sigma(sigma.as_ref(), x, d, &mut slow);
        step_kernel(
            x,
            &slow.drift,
            dt,
            &slow.sigma,
            &slow.second,
            d,
            &blk.b1,
            &blk.b2,
            &mut x_next,
        );

        // fast block
        let cross = opts.cross_term.then_some(&slow.sigma[..]);
        fw.step(model, x, y, eps, dt, &blk, cross, opts.fast_level2, &mut y_next);
        check_state(&x_next, k + 1)?;
        check_state(&y_next, k + 1)?;
        max_abs_y = y_next.iter().fold(max_abs_y, |a, v| a.max(v.abs()));
        xs.extend_from_slice(&x_next);
        ys.extend_from_slice(&y_next);
    }
    Ok(SlowFastSolution {
        epsilon: eps,
        step: dt,
        m,
        n,
        x: xs,
        y: ys,
        max_abs_y,
    })
}

/// Coefficients with the fast drift replaced by
/// `g~ = g - lambda grad_y h . h <Id_e>`.
pub struct SwitchedModel {
    inner: Arc<dyn SlowFastModel>,
    lambda: f64,
}

/// Pairs with [`crate::lifts::shift_block_diagonal`] on the fast block of
/// the mixed lift.
pub fn ito_strat_switch(model: Arc<dyn SlowFastModel>, lambda: f64) -> SwitchedModel {
    SwitchedModel { inner: model, lambda }
}

impl SlowFastModel for SwitchedModel {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn slow_dim(&self) -> usize {
        self.inner.slow_dim()
    }
    fn fast_dim(&self) -> usize {
        self.inner.fast_dim()
    }
    fn slow_noise_dim(&self) -> usize {
        self.inner.slow_noise_dim()
    }
    fn fast_noise_dim(&self) -> usize {
        self.inner.fast_noise_dim()
    }
    fn f(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.inner.f(x, y, out)
    }
    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.inner.g(x, y, out);
        if self.lambda == 0.0 {
            return;
        }
        let (n, e) = (self.fast_dim(), self.fast_noise_dim());
        let mut h = vec![0.0; n * e];
        let mut jy = vec![0.0; n * e * n];
        self.inner.h(x, y, &mut h);
        self.inner.h_jac_y(x, y, &mut jy);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..e {
                for l in 0..n {
                    acc += jy[(i * e + a) * n + l] * h[l * e + a];
                }
            }
            *o -= self.lambda * acc;
        }
    }
    fn h(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.inner.h(x, y, out)
    }
    fn h_jac_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.inner.h_jac_x(x, y, out)
    }
    fn h_jac_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.inner.h_jac_y(x, y, out)
    }
    fn sigma(&self) -> Arc<dyn SmoothMap> {
        self.inner.sigma()
    }
    fn meta(&self) -> AssumptionMeta {
        self.inner.meta()
    }
    fn closed_form(&self, x: &[f64]) -> Option<ClosedForm> {
        if self.lambda == 0.0 {
            self.inner.closed_form(x)
        } else {
            None
        }
    }
}

/// Drift `(x, psi) -> f(x, psi)` for solving the slow equation alone with
/// the fast path as parameter.
pub struct SlowDrift(pub Arc<dyn SlowFastModel>);

impl Drift for SlowDrift {
    fn dim(&self) -> usize {
        self.0.slow_dim()
    }
    fn value(&self, x: &[f64], psi: Option<&[f64]>, out: &mut [f64]) {
        let y = psi.expect("slow drift needs the fast path as parameter");
        self.0.f(x, y, out)
    }
}

/// The slow equation as an RDE driven by `B` with `psi = Y`.
pub fn slow_vector_fields(model: Arc<dyn SlowFastModel>, sol: &SlowFastSolution) -> Result<VectorFieldSet> {
    let psi = Arc::new(ParamPath::new(sol.fast_dim(), sol.fast_path().to_vec())?);
    let d = model.slow_noise_dim();
    Ok(VectorFieldSet::new(model.sigma(), Arc::new(SlowDrift(model)), d)?.with_psi(psi))
}

struct StackedSigma {
    model: Arc<dyn SlowFastModel>,
    eps: f64,
}

impl SmoothMap for StackedSigma {
    fn in_dim(&self) -> usize {
        self.model.slow_dim() + self.model.fast_dim()
    }
    fn out_dim(&self) -> usize {
        self.in_dim() * (self.model.slow_noise_dim() + self.model.fast_noise_dim())
    }
    fn value(&self, z: &[f64], out: &mut [f64]) {
        let (_, block) = assemble_blocks(self.model.as_ref(), self.eps, z).expect("validated dimensions");
        out.copy_from_slice(&block);
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let (m, n, d, e) = dims(self.model.as_ref());
        let mn = m + n;
        let de = d + e;
        out.iter_mut().for_each(|v| *v = 0.0);
        let (x, y) = z.split_at(m);
        let sg = self.model.sigma().gradient_vec(x);
        for i in 0..m {
            for a in 0..d {
                for l in 0..m {
                    out[(i * de + a) * mn + l] = sg[(i * d + a) * m + l];
                }
            }
        }
        let mut jx = vec![0.0; n * e * m];
        let mut jy = vec![0.0; n * e * n];
        self.model.h_jac_x(x, y, &mut jx);
        self.model.h_jac_y(x, y, &mut jy);
        let s = 1.0 / self.eps.sqrt();
        for i in 0..n {
            for b in 0..e {
                let row = ((m + i) * de + d + b) * mn;
                for l in 0..m {
                    out[row + l] = s * jx[(i * e + b) * m + l];
                }
                for l in 0..n {
                    out[row + m + l] = s * jy[(i * e + b) * n + l];
                }
            }
        }
    }
    fn hessian(&self, _z: &[f64], out: &mut [f64]) {
        // not needed by the one-step scheme
        out.iter_mut().for_each(|v| *v = f64::NAN);
    }
}

struct StackedDrift {
    model: Arc<dyn SlowFastModel>,
    eps: f64,
}

impl Drift for StackedDrift {
    fn dim(&self) -> usize {
        self.model.slow_dim() + self.model.fast_dim()
    }
    fn value(&self, z: &[f64], _psi: Option<&[f64]>, out: &mut [f64]) {
        let (drift, _) = assemble_blocks(self.model.as_ref(), self.eps, z).expect("validated dimensions");
        out.copy_from_slice(&drift);
    }
}

/// `(F_eps, Sigma_eps)` as an RDE on `R^{m+n}` driven by the mixed lift.
pub fn stacked_vector_fields(model: Arc<dyn SlowFastModel>, eps: f64) -> Result<VectorFieldSet> {
    check_epsilon(eps)?;
    let de = model.slow_noise_dim() + model.fast_noise_dim();
    VectorFieldSet::new(
        Arc::new(StackedSigma {
            model: model.clone(),
            eps,
        }),
        Arc::new(StackedDrift { model, eps }),
        de,
    )
}

/// Euler-Maruyama re-integration of the fast equation on the micro grid
/// with the same Brownian increments and `X` frozen per grid cell.
/// Returns the gap `|Y_{t_k} - Y^EM_{t_k}|` at every grid point.
pub fn fast_sde_gaps(model: &dyn SlowFastModel, sol: &SlowFastSolution, w_micro: &MicroIncrements) -> Result<Vec<f64>> {
    let (_, n, _, e) = dims(model);
    let cells = sol.n_points() - 1;
    if w_micro.dim() != e || w_micro.n_cells() != cells {
        return Err(Error::GridMismatch(
            "micro increments do not match the solution grid".into(),
        ));
    }
    let eps = sol.epsilon;
    let dt = w_micro.dt();
    let inv_eps = 1.0 / eps;
    let inv_sqrt = 1.0 / eps.sqrt();
    let mut y = sol.y_at(0).to_vec();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * e];
    let mut gaps = Vec::with_capacity(cells + 1);
    gaps.push(0.0);
    for k in 0..cells {
        let x = sol.x_at(k);
        for dw in w_micro.cell(k).chunks(e) {
            model.g(x, &y, &mut g);
            model.h(x, &y, &mut h);
            let mut next = y.clone();
            for i in 0..n {
                next[i] += inv_eps * g[i] * dt;
                for b in 0..e {
                    next[i] += inv_sqrt * h[i * e + b] * dw[b];
                }
            }
            y = next;
        }
        check_state(&y, k + 1)?;
        gaps.push(linalg::norm(&linalg::sub(sol.y_at(k + 1), &y)));
    }
    Ok(gaps)
}

/// `max_k |Y_{t_k} - Y^EM_{t_k}|`.
pub fn fast_sde_consistency(
    model: &dyn SlowFastModel,
    sol: &SlowFastSolution,
    w_micro: &MicroIncrements,
) -> Result<f64> {
    Ok(fast_sde_gaps(model, sol, w_micro)?.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Grid;
    use crate::lifts::{brownian_ito_lift, fbm_lift, mixed_lift, shift_block_diagonal, NoiseSpec};
    use crate::rde::solve_rde;

    fn ou() -> Arc<dyn SlowFastModel> {
        ModelSpec::by_name("ou_sine").unwrap().build().unwrap()
    }

    fn modulated() -> Arc<dyn SlowFastModel> {
        ModelSpec::OuSine(OuSineParams {
            hmod: 0.5,
            ..Default::default()
        })
        .build()
        .unwrap()
    }

    fn xi(n: usize, seed: u64) -> (Arc<GridRoughPath>, crate::lifts::Lift, crate::lifts::Lift) {
        let g = Grid::new(1.0, n).unwrap();
        let b = fbm_lift(&NoiseSpec::fbm(1, 0.45, seed, 0), &g).unwrap();
        let w = brownian_ito_lift(&NoiseSpec::brownian_ito(1, seed, 1), &g).unwrap();
        (Arc::new(mixed_lift(&b, &w).unwrap()), b, w)
    }

    #[test]
    fn block_assembly() {
        let m = ou();
        let (f, s) = assemble_blocks(m.as_ref(), 1.0, &[0.3, 0.7]).unwrap();
        assert_eq!(f, vec![0.7f64.sin(), -(0.7 - 0.3)]);
        assert_eq!(s, vec![1.0 + 0.5 * 0.3f64.cos(), 0.0, 0.0, 1.0]);
        let (f, s) = assemble_blocks(m.as_ref(), 0.04, &[0.3, 0.7]).unwrap();
        assert!((f[1] - 25.0 * -(0.7 - 0.3)).abs() < 1e-14);
        assert!((s[3] - 5.0).abs() < 1e-14);
        assert_eq!((s[1], s[2]), (0.0, 0.0));
        assert!(assemble_blocks(m.as_ref(), 0.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn policy() {
        let p = MicroStepPolicy::default();
        assert!(p.check(0.01, 0.1).is_ok());
        assert!(matches!(p.check(0.02, 0.1), Err(Error::PolicyViolation { .. })));
        let n = p.steps_for(1.0, 0.02);
        assert!(1.0 / n as f64 <= 0.002 + 1e-15);
    }

    #[test]
    fn slow_block_is_the_rde_step_with_fast_parameter() {
        let (x, b, _) = xi(256, 5);
        let m = modulated();
        let sol = solve_slow_fast(
            m.as_ref(),
            &x,
            0.5,
            &[0.2, -0.4],
            &MicroStepPolicy::default(),
            SchemeOptions::default(),
        )
        .unwrap();
        let vfs = slow_vector_fields(m.clone(), &sol).unwrap();
        let slow = solve_rde(&vfs, &b.rp, &[0.2]).unwrap();
        assert_eq!(slow.values(), sol.slow_path());
    }

    #[test]
    fn stacked_solve_matches() {
        let (x, _, _) = xi(256, 8);
        let m = modulated();
        for eps in [1.0, 0.2] {
            let sol = solve_slow_fast(
                m.as_ref(),
                &x,
                eps,
                &[0.2, -0.4],
                &MicroStepPolicy::default(),
                SchemeOptions::default(),
            )
            .unwrap();
            let vfs = stacked_vector_fields(m.clone(), eps).unwrap();
            let z = solve_rde(&vfs, &x, &[0.2, -0.4]).unwrap();
            for k in 0..=256 {
                assert!((z.value(k)[0] - sol.x_at(k)[0]).abs() < 1e-12);
                assert!((z.value(k)[1] - sol.y_at(k)[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_fast_part_freezes_y() {
        let (x, _, _) = xi(64, 2);
        let m = ModelSpec::OuSine(OuSineParams {
            c0: 0.0,
            h0: 0.0,
            ..Default::default()
        })
        .build()
        .unwrap();
        // g = -y still moves y; use y0 = 0 so that it stays put
        let sol = solve_slow_fast(
            m.as_ref(),
            &x,
            0.5,
            &[0.1, 0.0],
            &MicroStepPolicy::default(),
            SchemeOptions::default(),
        )
        .unwrap();
        assert!(sol.fast_path().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ito_strat_switch_is_equivalent() {
        let (x, _, _) = xi(512, 13);
        let m = modulated();
        let eps = 0.2;
        let ito = solve_slow_fast(
            m.as_ref(),
            &x,
            eps,
            &[0.2, -0.4],
            &MicroStepPolicy::default(),
            SchemeOptions::default(),
        )
        .unwrap();
        let switched = ito_strat_switch(m.clone(), 0.5);
        let x_strat = shift_block_diagonal(&x, &[1], 0.5).unwrap();
        let strat = solve_slow_fast(
            &switched,
            &x_strat,
            eps,
            &[0.2, -0.4],
            &MicroStepPolicy::default(),
            SchemeOptions::default(),
        )
        .unwrap();
        for (a, b) in ito.fast_path().iter().zip(strat.fast_path()) {
            assert!((a - b).abs() < 1e-10);
        }
        let same = ito_strat_switch(m.clone(), 0.0);
        let mut a = [0.0];
        let mut b = [0.0];
        same.g(&[0.3], &[0.1], &mut a);
        m.g(&[0.3], &[0.1], &mut b);
        assert_eq!(a, b);
        let flat = ito_strat_switch(ou(), 0.5);
        ou().g(&[0.3], &[0.1], &mut a);
        flat.g(&[0.3], &[0.1], &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn fast_sde_gap_is_small_and_deterministic() {
        let (x, _, w) = xi(256, 21);
        let m = ou();
        let sol = solve_slow_fast(
            m.as_ref(),
            &x,
            0.2,
            &[0.0, 0.0],
            &MicroStepPolicy::default(),
            SchemeOptions::default(),
        )
        .unwrap();
        let again = solve_slow_fast(
            m.as_ref(),
            &x,
            0.2,
            &[0.0, 0.0],
            &MicroStepPolicy::default(),
            SchemeOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.fast_path(), again.fast_path());
        let gap = fast_sde_consistency(m.as_ref(), &sol, &w.micro).unwrap();
        assert!(gap < 10.0 * (1.0f64 / 256.0).sqrt(), "gap {gap}");
    }
}
