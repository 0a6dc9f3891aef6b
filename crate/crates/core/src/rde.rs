//! Rough differential equations `dY = f(Y, psi) dt + sigma(Y) dX`.
//!
//! The primary solver steps the local model
//! `y + f(y) dt + sigma(y) X^1 + (grad sigma . sigma)(y) <X^2>` cell by cell.
//! A Picard iteration on windows is provided as an independent reference.

use std::sync::Arc;

use crate::algebra::hoelder_seminorm;
use crate::algebra::{
    compose_smooth, concat_cp, homogeneous_norm, GridControlledPath, GridRoughPath, HoelderExponent, PathField,
    SmoothMap, DEFAULT_PAIR_BUDGET,
};
use crate::error::{Error, Result};
use crate::integral::{kappa, rough_integral};
use crate::linalg;

/// States with a coordinate beyond this magnitude count as exploded.
pub const EXPLOSION_THRESHOLD: f64 = 1e12;

/// Drift `f: W x S -> W`. The parameter is `None` when no path `psi` is
/// attached.
pub trait Drift: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, y: &[f64], psi: Option<&[f64]>, out: &mut [f64]);
}

/// The zero drift.
#[derive(Debug, Clone, Copy)]
pub struct ZeroDrift(pub usize);

impl Drift for ZeroDrift {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _y: &[f64], _psi: Option<&[f64]>, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

type DriftEval = Box<dyn Fn(&[f64], Option<&[f64]>, &mut [f64]) + Send + Sync>;

pub struct DriftFn {
    dim: usize,
    f: DriftEval,
}

impl DriftFn {
    pub fn new(dim: usize, f: impl Fn(&[f64], Option<&[f64]>, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Box::new(f) }
    }
}

impl Drift for DriftFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, y: &[f64], psi: Option<&[f64]>, out: &mut [f64]) {
        (self.f)(y, psi, out)
    }
}

impl std::fmt::Debug for DriftFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftFn")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// Norm metadata of the coefficients. `None` means unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VectorFieldMeta {
    /// `||sigma||_{C^2_b}`
    pub sigma_c2b: Option<f64>,
    /// `||sigma||_{C^3_b}`
    pub sigma_c3b: Option<f64>,
    /// `||f||_inf`
    pub f_sup: Option<f64>,
    /// Global Lipschitz constant of `f` in `y`.
    pub f_lip: Option<f64>,
}

impl VectorFieldMeta {
    /// `K = ||sigma||_{C^3_b} v ||f||_inf v L_f`, when all three are known.
    pub fn k_constant(&self) -> Result<f64> {
        let s = self.sigma_c3b.ok_or(Error::MissingMetadata("sigma C3b norm"))?;
        let b = self.f_sup.ok_or(Error::MissingMetadata("drift sup norm"))?;
        let l = self.f_lip.ok_or(Error::MissingMetadata("drift Lipschitz constant"))?;
        Ok(s.max(b).max(l))
    }
}

/// Grid-sampled parameter path `psi` with values row-major `(n_points, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPath {
    dim: usize,
    values: Vec<f64>,
}

impl ParamPath {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                what: "parameter path",
                expected: dim,
                got: values.len(),
            });
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// Coefficients of an RDE on `W = R^m` driven by a rough path over `V = R^d`.
#[derive(Clone)]
pub struct VectorFieldSet {
    /// `sigma: R^m -> L(R^d, R^m)`, flattened `m x d`.
    pub sigma: Arc<dyn SmoothMap>,
    pub drift: Arc<dyn Drift>,
    pub psi: Option<Arc<ParamPath>>,
    pub meta: VectorFieldMeta,
    m: usize,
    d: usize,
}

impl std::fmt::Debug for VectorFieldSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorFieldSet")
            .field("m", &self.m)
            .field("d", &self.d)
            .field("meta", &self.meta)
            .finish_non_exhaustive()
    }
}

impl VectorFieldSet {
    pub fn new(sigma: Arc<dyn SmoothMap>, drift: Arc<dyn Drift>, driver_dim: usize) -> Result<Self> {
        let m = sigma.in_dim();
        if driver_dim == 0 || sigma.out_dim() != m * driver_dim {
            return Err(Error::DimensionMismatch {
                what: "sigma must map R^m to m x d matrices",
                expected: m * driver_dim,
                got: sigma.out_dim(),
            });
        }
        if drift.dim() != m {
            return Err(Error::DimensionMismatch {
                what: "drift dimension",
                expected: m,
                got: drift.dim(),
            });
        }
        Ok(Self {
            sigma,
            drift,
            psi: None,
            meta: VectorFieldMeta::default(),
            m,
            d: driver_dim,
        })
    }

    pub fn with_psi(mut self, psi: Arc<ParamPath>) -> Self {
        self.psi = Some(psi);
        self
    }

    pub fn with_meta(mut self, meta: VectorFieldMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn with_drift(mut self, drift: Arc<dyn Drift>) -> Result<Self> {
        if drift.dim() != self.m {
            return Err(Error::DimensionMismatch {
                what: "drift dimension",
                expected: self.m,
                got: drift.dim(),
            });
        }
        self.drift = drift;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn driver_dim(&self) -> usize {
        self.d
    }

    fn psi_at(&self, k: usize) -> Option<&[f64]> {
        self.psi.as_deref().map(|p| p.at(k))
    }

    fn check_driver(&self, rp: &GridRoughPath) -> Result<()> {
        if rp.dim() != self.d {
            return Err(Error::DimensionMismatch {
                what: "driver dimension",
                expected: self.d,
                got: rp.dim(),
            });
        }
        if let Some(p) = &self.psi {
            if p.n_points() < rp.grid().n_points() {
                return Err(Error::GridMismatch("parameter path shorter than the grid".into()));
            }
        }
        Ok(())
    }
}

/// Scratch buffers for one step of the scheme.
#[derive(Debug, Clone)]
pub(crate) struct StepWork {
    pub sigma: Vec<f64>,
    pub grad: Vec<f64>,
    pub second: Vec<f64>,
    pub drift: Vec<f64>,
}

impl StepWork {
    pub fn new(m: usize, d: usize) -> Self {
        Self {
            sigma: vec![0.0; m * d],
            grad: vec![0.0; m * d * m],
            second: vec![0.0; m * d * d],
            drift: vec![0.0; m],
        }
    }
}

/// `out = y + drift dt + sigma x1 + G <x2>`, with `G = grad sigma . sigma`
/// laid out `(m d) x d`. Every solver in the crate funnels its rough
/// updates through this function, so identical inputs give identical bits.
pub(crate) fn step_kernel(
    y: &[f64],
    drift: &[f64],
    dt: f64,
    sigma: &[f64],
    second: &[f64],
    d: usize,
    x1: &[f64],
    x2: &[f64],
    out: &mut [f64],
) {
    let m = y.len();
    for i in 0..m {
        out[i] = y[i] + drift[i] * dt;
    }
    linalg::gemv_add(sigma, m, d, x1, out);
    linalg::bilinear_add(second, m, d, x2, out);
}

/// Evaluates `sigma(y)` and `grad sigma(y) . sigma(y)` into `work`.
pub(crate) fn eval_sigma(sigma: &dyn SmoothMap, y: &[f64], d: usize, work: &mut StepWork) {
    let m = y.len();
    sigma.value(y, &mut work.sigma);
    sigma.gradient(y, &mut work.grad);
    linalg::matmul(&work.grad, &work.sigma, m * d, m, d, &mut work.second);
}

/// Checks a freshly computed state for the explosion surrogate.
pub(crate) fn check_state(y: &[f64], index: usize) -> Result<()> {
    let mut worst = 0.0_f64;
    for v in y {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        worst = worst.max(v.abs());
    }
    if worst > EXPLOSION_THRESHOLD {
        return Err(Error::Explosion {
            index,
            magnitude: worst,
        });
    }
    Ok(())
}

fn step_at(
    vfs: &VectorFieldSet,
    y: &[f64],
    psi: Option<&[f64]>,
    x1: &[f64],
    x2: &[f64],
    dt: f64,
    work: &mut StepWork,
    out: &mut [f64],
) {
    vfs.drift.value(y, psi, &mut work.drift);
    eval_sigma(vfs.sigma.as_ref(), y, vfs.d, work);
    step_kernel(y, &work.drift, dt, &work.sigma, &work.second, vfs.d, x1, x2, out);
}

/// One step `y + f(y, psi) dt + sigma(y) x1 + (grad sigma . sigma)(y) <x2>`.
pub fn rough_euler_step(
    y: &[f64],
    vfs: &VectorFieldSet,
    x1: &[f64],
    x2: &[f64],
    dt: f64,
    psi: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let (m, d) = (vfs.m, vfs.d);
    if y.len() != m || x1.len() != d || x2.len() != d * d {
        return Err(Error::DimensionMismatch {
            what: "step inputs",
            expected: m,
            got: y.len(),
        });
    }
    let mut work = StepWork::new(m, d);
    let mut out = vec![0.0; m];
    step_at(vfs, y, psi, x1, x2, dt, &mut work, &mut out);
    if work
        .sigma
        .iter()
        .chain(&work.second)
        .chain(&work.drift)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite { index: 0 });
    }
    check_state(&out, 1)?;
    Ok(out)
}

/// Solves on the whole grid from `Y_0 = xi`.
pub fn solve_rde(vfs: &VectorFieldSet, rp: &Arc<GridRoughPath>, xi: &[f64]) -> Result<GridControlledPath> {
    solve_rde_range(vfs, rp, xi, 0, rp.n_steps())
}

/// Solves on the grid points `start..=end` from `Y_{t_start} = xi`.
pub fn solve_rde_range(
    vfs: &VectorFieldSet,
    rp: &Arc<GridRoughPath>,
    xi: &[f64],
    start: usize,
    end: usize,
) -> Result<GridControlledPath> {
    vfs.check_driver(rp)?;
    let (m, d) = (vfs.m, vfs.d);
    if xi.len() != m {
        return Err(Error::DimensionMismatch {
            what: "initial value",
            expected: m,
            got: xi.len(),
        });
    }
    if start > end {
        return Err(Error::InvalidRange { start, end });
    }
    rp.grid().check_index(end)?;
    check_state(xi, start)?;
    let dt = rp.grid().step();
    let n = end - start;
    let mut values = Vec::with_capacity((n + 1) * m);
    let mut gub = Vec::with_capacity((n + 1) * m * d);
    values.extend_from_slice(xi);
    let mut work = StepWork::new(m, d);
    let mut x1 = vec![0.0; d];
    let mut next = vec![0.0; m];
    for k in start..end {
        let y = &values[(k - start) * m..(k - start + 1) * m];
        rp.increment_into(k, k + 1, &mut x1);
        step_at(vfs, y, vfs.psi_at(k), &x1, rp.cell(k), dt, &mut work, &mut next);
        gub.extend_from_slice(&work.sigma);
        check_state(&next, k + 1)?;
        values.extend_from_slice(&next);
    }
    let mut last = vec![0.0; m * d];
    vfs.sigma.value(&values[n * m..], &mut last);
    gub.extend_from_slice(&last);
    GridControlledPath::new(rp.clone(), start, m, values, gub)
}

/// Output of the windowed Picard reference solver.
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub path: GridControlledPath,
    /// Window length in cells.
    pub window_cells: usize,
    /// Sup-distance between successive iterates, per window.
    pub gaps: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub beta: HoelderExponent,
    pub tol: f64,
    pub max_iter: usize,
    /// Replaces the theoretical window length when set.
    pub window_cells: Option<usize>,
}

/// Theoretical window length `{8 kappa_beta (K+1)^3 (|||X|||_alpha + 1)^3}^{-1/(alpha-beta)}`.
pub fn picard_window_length(k: f64, rp_norm: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(beta < alpha) {
        return Err(Error::InvalidParameter(format!(
            "need beta < alpha, got {beta} >= {alpha}"
        )));
    }
    let base = 8.0 * kappa(beta)? * (k + 1.0).powi(3) * (rp_norm + 1.0).powi(3);
    Ok(base.powf(-1.0 / (alpha - beta)))
}

/// Seed path `t -> (xi + sigma(xi) X^1_{a,t}, sigma(xi))` on `a..=b`.
fn picard_seed(
    vfs: &VectorFieldSet,
    rp: &Arc<GridRoughPath>,
    xi: &[f64],
    a: usize,
    b: usize,
) -> Result<GridControlledPath> {
    let (m, d) = (vfs.m, vfs.d);
    let s = vfs.sigma.value_vec(xi);
    let mut values = Vec::with_capacity((b - a + 1) * m);
    let mut gub = Vec::with_capacity((b - a + 1) * m * d);
    let mut x1 = vec![0.0; d];
    for k in a..=b {
        rp.increment_into(a, k, &mut x1);
        let mut y = xi.to_vec();
        linalg::gemv_add(&s, m, d, &x1, &mut y);
        values.extend_from_slice(&y);
        gub.extend_from_slice(&s);
    }
    GridControlledPath::new(rp.clone(), a, m, values, gub)
}

/// One application of `(Y, Y') -> (xi + int f(Y, psi) ds + int sigma(Y) dX, sigma(Y))`.
fn picard_map(vfs: &VectorFieldSet, rp: &Arc<GridRoughPath>, y: &GridControlledPath) -> Result<GridControlledPath> {
    let m = vfs.m;
    let a = y.start();
    let b = y.end();
    let integrand = compose_smooth(vfs.sigma.as_ref(), y)?;
    let rough = rough_integral(&integrand, rp, a, b)?;
    let dt = rp.grid().step();
    let xi = y.value(0);
    let mut values = Vec::with_capacity(y.len() * m);
    let mut drift_acc = vec![0.0; m];
    let mut f = vec![0.0; m];
    for k in a..=b {
        let local = k - a;
        for i in 0..m {
            values.push(xi[i] + drift_acc[i] + rough.as_cp.value(local)[i]);
        }
        if k < b {
            vfs.drift.value(y.value(local), vfs.psi_at(k), &mut f);
            for i in 0..m {
                drift_acc[i] += f[i] * dt;
            }
        }
    }
    let gub = integrand.values().to_vec();
    GridControlledPath::new(rp.clone(), a, m, values, gub)
}

fn sup_gap(a: &GridControlledPath, b: &GridControlledPath) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .chain(a.gubinelli().iter().zip(b.gubinelli()))
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Picard iteration on consecutive windows, concatenated at the junctions.
pub fn solve_rde_picard(
    vfs: &VectorFieldSet,
    rp: &Arc<GridRoughPath>,
    xi: &[f64],
    opts: PicardOptions,
) -> Result<PicardSolution> {
    vfs.check_driver(rp)?;
    let alpha = rp.alpha().value();
    let beta = opts.beta.value();
    let n = rp.n_steps();
    let window_cells = match opts.window_cells {
        Some(w) => w.max(1),
        None => {
            let k = vfs.meta.k_constant()?;
            let norm = homogeneous_norm(rp, rp.alpha(), DEFAULT_PAIR_BUDGET)?;
            let lambda = picard_window_length(k, norm, alpha, beta)?;
            ((lambda / rp.grid().step()).floor() as usize).max(1)
        }
    };
    let mut gaps = Vec::new();
    let mut whole: Option<GridControlledPath> = None;
    let mut start_value = xi.to_vec();
    let mut a = 0;
    while a < n {
        let b = (a + window_cells).min(n);
        let mut current = picard_seed(vfs, rp, &start_value, a, b)?;
        let mut window_gaps = Vec::new();
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let next = picard_map(vfs, rp, &current)?;
            let gap = sup_gap(&next, &current);
            window_gaps.push(gap);
            if !gap.is_finite() {
                return Err(Error::NonFinite { index: a });
            }
            current = next;
            if gap < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                window_start: a,
                iterations: opts.max_iter,
                gap: window_gaps.last().copied().unwrap_or(f64::NAN),
            });
        }
        // the Gubinelli derivative of a solution is exactly sigma(Y)
        let m = vfs.m;
        let gub: Vec<f64> = current
            .values()
            .chunks(m)
            .flat_map(|y| vfs.sigma.value_vec(y))
            .collect();
        let window = GridControlledPath::new(rp.clone(), a, m, current.values().to_vec(), gub)?;
        check_state(window.last_value(), b)?;
        start_value = window.last_value().to_vec();
        whole = Some(match whole {
            None => window,
            Some(left) => concat_cp(&left, &window)?,
        });
        gaps.push(window_gaps);
        a = b;
    }
    let path = match whole {
        Some(p) => p,
        None => solve_rde(vfs, rp, xi)?,
    };
    Ok(PicardSolution {
        path,
        window_cells,
        gaps,
    })
}

/// `(s N)^{1/beta} + s N + f_sup` for `s = ||sigma||_{C^2_b}`, `N = |||X|||_alpha`.
pub fn apriori_bracket_value(sigma_c2b: f64, rp_norm: f64, f_sup: f64, beta: f64) -> f64 {
    let a = sigma_c2b * rp_norm;
    a.powf(1.0 / beta) + a + f_sup
}

/// The a-priori bracket for `||Y||_beta`, from metadata and the driver norm.
pub fn apriori_bracket(vfs: &VectorFieldSet, rp: &GridRoughPath, beta: HoelderExponent) -> Result<f64> {
    let s = vfs.meta.sigma_c2b.ok_or(Error::MissingMetadata("sigma C2b norm"))?;
    let f = vfs.meta.f_sup.ok_or(Error::MissingMetadata("drift sup norm"))?;
    let norm = homogeneous_norm(rp, rp.alpha(), DEFAULT_PAIR_BUDGET)?;
    Ok(apriori_bracket_value(s, norm, f, beta.value()))
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// `M_t` on the grid, row-major `(n_points, m)`.
    pub m_path: Vec<f64>,
    /// `||Y - Y~||_beta`
    pub gap_norm: f64,
    /// `||M||_{2 beta}`
    pub m_norm: f64,
    /// `exp(|||X|||_alpha^nu)`
    pub exp_bracket: f64,
}

/// Solves both equations and evaluates
/// `M = (Y - Y~) - int (g(Y) - g(Y~)) ds - int (sigma(Y) - sigma(Y~)) dX`.
pub fn stability_gap(
    vfs: &VectorFieldSet,
    vfs_tilde: &VectorFieldSet,
    g: &dyn Drift,
    rp: &Arc<GridRoughPath>,
    xi: &[f64],
    beta: HoelderExponent,
    nu: f64,
) -> Result<StabilityReport> {
    let m = vfs.m;
    let y = solve_rde(vfs, rp, xi)?;
    let yt = solve_rde(vfs_tilde, rp, xi)?;
    let n = rp.n_steps();
    let int_y = rough_integral(&compose_smooth(vfs.sigma.as_ref(), &y)?, rp, 0, n)?;
    let int_yt = rough_integral(&compose_smooth(vfs_tilde.sigma.as_ref(), &yt)?, rp, 0, n)?;
    let dt = rp.grid().step();
    let mut m_path = Vec::with_capacity((n + 1) * m);
    let mut drift_acc = vec![0.0; m];
    let mut ga = vec![0.0; m];
    let mut gb = vec![0.0; m];
    let mut diff = Vec::with_capacity((n + 1) * m);
    for k in 0..=n {
        for i in 0..m {
            let d = y.value(k)[i] - yt.value(k)[i];
            diff.push(d);
            m_path.push(d - drift_acc[i] - (int_y.as_cp.value(k)[i] - int_yt.as_cp.value(k)[i]));
        }
        if k < n {
            g.value(y.value(k), None, &mut ga);
            g.value(yt.value(k), None, &mut gb);
            for i in 0..m {
                drift_acc[i] += (ga[i] - gb[i]) * dt;
            }
        }
    }
    let step = rp.grid().step();
    let b = beta.value();
    let gap_norm = hoelder_seminorm(&PathField::new(&diff, m), step, b, DEFAULT_PAIR_BUDGET)?;
    let m_norm = hoelder_seminorm(&PathField::new(&m_path, m), step, 2.0 * b, DEFAULT_PAIR_BUDGET)?;
    let rp_norm = homogeneous_norm(rp, rp.alpha(), DEFAULT_PAIR_BUDGET)?;
    Ok(StabilityReport {
        m_path,
        gap_norm,
        m_norm,
        exp_bracket: rp_norm.powf(nu).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ClosureMap, Constant, Grid, Linear};
    use crate::lifts::{smooth_lift, NoiseSpec};

    fn alpha() -> HoelderExponent {
        HoelderExponent::new(0.45).unwrap()
    }

    fn linear_vfs() -> VectorFieldSet {
        let sigma = Arc::new(Linear {
            in_dim: 1,
            matrix: vec![1.0],
        });
        VectorFieldSet::new(sigma, Arc::new(ZeroDrift(1)), 1).unwrap()
    }

    #[test]
    fn step_examples() {
        let vfs = linear_vfs();
        let y = rough_euler_step(&[1.0], &vfs, &[0.1], &[0.005], 0.01, None).unwrap();
        assert!((y[0] - 1.105).abs() < 1e-15);
        assert_eq!(
            rough_euler_step(&[0.7], &vfs, &[0.0], &[0.0], 0.01, None).unwrap(),
            vec![0.7]
        );

        let zero_sigma = Arc::new(Constant {
            in_dim: 1,
            value: vec![0.0],
        });
        let decay = Arc::new(DriftFn::new(1, |y, _, out| out[0] = -y[0]));
        let ode = VectorFieldSet::new(zero_sigma, decay, 1).unwrap();
        let y = rough_euler_step(&[2.0], &ode, &[0.3], &[0.1], 0.1, None).unwrap();
        assert_eq!(y, vec![2.0 - 0.2]);
        assert!(rough_euler_step(&[1.0, 2.0], &ode, &[0.0], &[0.0], 0.1, None).is_err());
    }

    #[test]
    fn zero_driver_gives_constant_path() {
        let grid = Grid::new(1.0, 16).unwrap();
        let rp = Arc::new(GridRoughPath::zero(1, grid, alpha()));
        let y = solve_rde(&linear_vfs(), &rp, &[3.0]).unwrap();
        assert!(y.values().iter().all(|&v| v == 3.0));
        assert!(y.gubinelli().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn ode_reduction_is_first_order() {
        let zero_sigma = Arc::new(Constant {
            in_dim: 1,
            value: vec![0.0],
        });
        let decay = Arc::new(DriftFn::new(1, |y, _, out| out[0] = -y[0]));
        let vfs = VectorFieldSet::new(zero_sigma, decay, 1).unwrap();
        let mut errs = Vec::new();
        for n in [100, 200, 400] {
            let rp = Arc::new(GridRoughPath::zero(1, Grid::new(1.0, n).unwrap(), alpha()));
            let y = solve_rde(&vfs, &rp, &[1.0]).unwrap();
            errs.push((y.last_value()[0] - (-1.0f64).exp()).abs());
        }
        assert!(errs[0] < 0.01);
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 1.9 && ratio < 2.1, "ratio {ratio}");
        }
    }

    #[test]
    fn linear_rde_converges_to_exponential() {
        let vfs = linear_vfs();
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let l = smooth_lift(&NoiseSpec::smooth(1).with_substeps(1), &Grid::new(1.0, n).unwrap()).unwrap();
            let y = solve_rde(&vfs, &l.rp, &[1.0]).unwrap();
            let xt = l.rp.level1_at(n)[0];
            errs.push((y.last_value()[0] - xt.exp()).abs());
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.0);
        }
    }

    #[test]
    fn restarting_at_midpoint_is_bit_exact() {
        let l =
            crate::lifts::brownian_ito_lift(&NoiseSpec::brownian_strat(2, 4, 0), &Grid::new(1.0, 64).unwrap()).unwrap();
        let sigma = Arc::new(ClosureMap::new(
            1,
            2,
            |y, out| {
                out[0] = y[0].sin();
                out[1] = 0.5 * y[0].cos();
            },
            |y, out| {
                out[0] = y[0].cos();
                out[1] = -0.5 * y[0].sin();
            },
            |y, out| {
                out[0] = -y[0].sin();
                out[1] = -0.5 * y[0].cos();
            },
        ));
        let drift = Arc::new(DriftFn::new(1, |y, _, out| out[0] = -y[0]));
        let vfs = VectorFieldSet::new(sigma, drift, 2).unwrap();
        let full = solve_rde(&vfs, &l.rp, &[0.3]).unwrap();
        let first = solve_rde_range(&vfs, &l.rp, &[0.3], 0, 32).unwrap();
        let second = solve_rde_range(&vfs, &l.rp, first.last_value(), 32, 64).unwrap();
        let joined = concat_cp(&first, &second).unwrap();
        assert_eq!(joined.values(), full.values());
        assert_eq!(joined.gubinelli(), full.gubinelli());
    }

    #[test]
    fn picard_agrees_with_one_step_scheme() {
        let l = smooth_lift(&NoiseSpec::smooth(1).with_substeps(1), &Grid::new(1.0, 64).unwrap()).unwrap();
        let vfs = linear_vfs();
        let opts = PicardOptions {
            beta: HoelderExponent::new(0.4).unwrap(),
            tol: 1e-14,
            max_iter: 100,
            window_cells: Some(8),
        };
        let p = solve_rde_picard(&vfs, &l.rp, &[1.0], opts).unwrap();
        let s = solve_rde(&vfs, &l.rp, &[1.0]).unwrap();
        for (a, b) in p.path.values().iter().zip(s.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(p.gaps.len(), 8);
        for g in &p.gaps {
            for w in g.windows(2) {
                assert!(w[1] <= 0.75 * w[0] || w[1] < 1e-14);
            }
        }
    }

    #[test]
    fn picard_on_zero_driver_converges_at_once() {
        let rp = Arc::new(GridRoughPath::zero(1, Grid::new(1.0, 8).unwrap(), alpha()));
        let opts = PicardOptions {
            beta: HoelderExponent::new(0.4).unwrap(),
            tol: 1e-14,
            max_iter: 5,
            window_cells: Some(8),
        };
        let p = solve_rde_picard(&linear_vfs(), &rp, &[2.0], opts).unwrap();
        assert_eq!(p.gaps, vec![vec![0.0]]);
        assert!(p.path.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn picard_needs_metadata_for_theoretical_window() {
        let rp = Arc::new(GridRoughPath::zero(1, Grid::new(1.0, 8).unwrap(), alpha()));
        let opts = PicardOptions {
            beta: HoelderExponent::new(0.4).unwrap(),
            tol: 1e-14,
            max_iter: 5,
            window_cells: None,
        };
        assert!(matches!(
            solve_rde_picard(&linear_vfs(), &rp, &[2.0], opts),
            Err(Error::MissingMetadata(_))
        ));
        let meta = VectorFieldMeta {
            sigma_c2b: Some(1.0),
            sigma_c3b: Some(1.0),
            f_sup: Some(0.0),
            f_lip: Some(0.0),
        };
        let p = solve_rde_picard(&linear_vfs().with_meta(meta), &rp, &[2.0], opts).unwrap();
        assert_eq!(p.window_cells, 1);
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(apriori_bracket_value(1.0, 0.0, 0.0, 0.5), 0.0);
        assert_eq!(apriori_bracket_value(1.0, 1.0, 0.0, 0.5), 2.0);
        let rp = GridRoughPath::zero(1, Grid::new(1.0, 4).unwrap(), alpha());
        let b = HoelderExponent::new(0.4).unwrap();
        assert!(matches!(
            apriori_bracket(&linear_vfs(), &rp, b),
            Err(Error::MissingMetadata(_))
        ));
    }

    #[test]
    fn identical_equations_have_no_stability_gap() {
        let l = crate::lifts::fbm_lift(&NoiseSpec::fbm(1, 0.4, 2, 0), &Grid::new(1.0, 64).unwrap()).unwrap();
        let drift = Arc::new(DriftFn::new(1, |y, _, out| out[0] = y[0].sin()));
        let vfs = VectorFieldSet::new(
            Arc::new(ClosureMap::scalar(|y| y.cos(), |y| -y.sin(), |y| -y.cos())),
            drift.clone(),
            1,
        )
        .unwrap();
        let r = stability_gap(
            &vfs,
            &vfs,
            drift.as_ref(),
            &l.rp,
            &[0.2],
            HoelderExponent::new(0.4).unwrap(),
            2.0,
        )
        .unwrap();
        assert_eq!(r.gap_norm, 0.0);
        assert_eq!(r.m_norm, 0.0);
    }
}
