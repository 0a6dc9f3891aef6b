//! The auxiliary fast process with block-frozen slow argument, the
//! decomposition of the slow error, and the Monte Carlo study of
//! `E ||X^eps - X-bar||_beta^p` as `eps` decreases.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{hoelder_seminorm, Grid, GridRoughPath, HoelderExponent, PathField, DEFAULT_PAIR_BUDGET};
use crate::error::{Error, Result};
use crate::frozen::{build_fbar_table, solve_averaged, AveragedDrift, AveragingMethod, FbarTable};
use crate::lifts::{brownian_ito_lift, mixed_lift, sample_lift, Lift, NoiseKind, NoiseSpec};
use crate::linalg;
use crate::slowfast::{
    dims, solve_slow_fast, Blocks, FastWork, MicroStepPolicy, ModelSpec, SchemeOptions, SlowFastModel, SlowFastSolution,
};
use crate::stats::{log_log_slope, Estimate, LineFit};

/// `floor(s / delta) * delta`.
pub fn floor_to_block(s: f64, delta: f64) -> f64 {
    (s / delta).floor() * delta
}

/// Index of the last grid point at or before `floor_to_block(k * step, delta)`.
pub fn block_start_index(k: usize, step: f64, delta: f64) -> usize {
    // the small slack keeps exact block boundaries from falling one block short
    let blocks = (k as f64 * step / delta + 1e-9).floor();
    let idx = (blocks * delta / step + 1e-9).floor() as usize;
    idx.min(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaMode {
    /// `delta = eps^{1/(4 beta)} log(1/eps)`.
    #[default]
    Schedule,
    Fixed {
        value: f64,
    },
}

/// The schedule before clamping.
pub fn schedule_delta(eps: f64, beta: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "the delta schedule needs eps in (0, 1), got {eps}"
        )));
    }
    Ok(eps.powf(1.0 / (4.0 * beta)) * (1.0 / eps).ln())
}

/// Block length for a run at `eps`, clamped into `[step, horizon / 2]` in
/// schedule mode.
pub fn delta_schedule(eps: f64, beta: f64, mode: DeltaMode, step: f64, horizon: f64) -> Result<f64> {
    match mode {
        DeltaMode::Fixed { value } => {
            if !(value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "fixed delta must be positive, got {value}"
                )));
            }
            Ok(value)
        }
        DeltaMode::Schedule => {
            let raw = schedule_delta(eps, beta)?;
            if raw > 0.5 * horizon {
                log::warn!(
                    "delta {raw:.4} for eps {eps} exceeds half the horizon; clamped to {}",
                    0.5 * horizon
                );
                Ok(0.5 * horizon)
            } else if raw < step {
                log::warn!("delta {raw:.4} for eps {eps} is below the grid step; clamped to {step}");
                Ok(step)
            } else {
                Ok(raw)
            }
        }
    }
}

/// Fast path of `dY^ = eps^{-1} g(X_{s(delta)}, Y^) dt + eps^{-1/2} h(X_{s(delta)}, Y^) dW`
/// on the grid of `sol`, stepped with the fast update of the slow-fast
/// scheme (without the cross term, since the slow argument is frozen) and
/// the Brownian blocks of `xi`. Row-major `(n_points, n)`.
pub fn khasminskii_aux(
    model: &dyn SlowFastModel,
    xi: &GridRoughPath,
    sol: &SlowFastSolution,
    delta: f64,
    opts: SchemeOptions,
) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let (_, n, d, e) = dims(model);
    if xi.dim() != d + e || xi.grid().n_points() != sol.n_points() {
        return Err(Error::GridMismatch("driver and solution grids differ".into()));
    }
    let dt = xi.grid().step();
    let mut fw = FastWork::new(model);
    let mut blk = Blocks::new(d, e);
    let mut ys = Vec::with_capacity(sol.n_points() * n);
    ys.extend_from_slice(sol.y_at(0));
    let mut next = vec![0.0; n];
    for k in 0..xi.n_steps() {
        blk.load(xi, k, d, e);
        let x = sol.x_at(block_start_index(k, dt, delta));
        fw.step(
            model,
            x,
            &ys[k * n..(k + 1) * n],
            sol.epsilon,
            dt,
            &blk,
            None,
            opts.fast_level2,
            &mut next,
        );
        crate::rde::check_state(&next, k + 1)?;
        ys.extend_from_slice(&next);
    }
    Ok(ys)
}

/// The four drift-difference integrals whose sum is
/// `int_0^t (f(X^eps, Y^eps) - f-bar(X^eps)) ds`:
///
/// 1. `f(X, Y) - f(X_{s(delta)}, Y)`
/// 2. `f(X_{s(delta)}, Y) - f(X_{s(delta)}, Y^)`
/// 3. `f(X_{s(delta)}, Y^) - f-bar(X_{s(delta)})`
/// 4. `f-bar(X_{s(delta)}) - f-bar(X)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MDecomposition {
    /// Each path row-major `(n_points, m)`, starting at zero.
    pub terms: [Vec<f64>; 4],
    /// Lipschitz seminorm of each term on the grid.
    pub lipschitz: [f64; 4],
    /// `gamma`-Hoelder seminorm of the third term.
    pub term3_hoelder: f64,
}

pub fn decompose_m(
    model: &dyn SlowFastModel,
    sol: &SlowFastSolution,
    y_hat: &[f64],
    fbar: &AveragedDrift,
    delta: f64,
    gamma: f64,
) -> Result<MDecomposition> {
    let (m, n, _, _) = dims(model);
    let np = sol.n_points();
    if y_hat.len() != np * n {
        return Err(Error::GridMismatch("auxiliary path and solution grids differ".into()));
    }
    if !(delta > 0.0) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need delta > 0 and gamma in (0, 1], got {delta}, {gamma}"
        )));
    }
    let dt = sol.step;
    let mut terms: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(np * m));
    for t in terms.iter_mut() {
        t.extend(std::iter::repeat_n(0.0, m));
    }
    let mut lipschitz = [0.0_f64; 4];
    let (mut a, mut b, mut c) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for k in 0..np - 1 {
        let x = sol.x_at(k);
        let xb = sol.x_at(block_start_index(k, dt, delta));
        let y = sol.y_at(k);
        let yh = &y_hat[k * n..(k + 1) * n];
        model.f(x, y, &mut a);
        model.f(xb, y, &mut b);
        model.f(xb, yh, &mut c);
        let fb_block = fbar.eval(xb)?;
        let fb_here = fbar.eval(x)?;
        let integrands = [
            linalg::sub(&a, &b),
            linalg::sub(&b, &c),
            linalg::sub(&c, &fb_block),
            linalg::sub(&fb_block, &fb_here),
        ];
        for (j, g) in integrands.iter().enumerate() {
            lipschitz[j] = lipschitz[j].max(linalg::norm(g));
            for i in 0..m {
                let prev = terms[j][k * m + i];
                terms[j].push(prev + g[i] * dt);
            }
        }
    }
    let term3_hoelder = hoelder_seminorm(&PathField::new(&terms[2], m), dt, gamma, DEFAULT_PAIR_BUDGET)?;
    Ok(MDecomposition {
        terms,
        lipschitz,
        term3_hoelder,
    })
}

/// Where the averaged drift of a study comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FbarSource {
    #[default]
    ClosedForm,
    /// Tabulated at `points` uniform nodes of `[lo, hi]` at the start of the study.
    Table {
        lo: f64,
        hi: f64,
        points: usize,
        method: AveragingMethod,
    },
    /// Read from a CSV table `x,fbar,stderr`.
    Csv { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

fn default_substeps() -> usize {
    8
}

fn default_macro_cells() -> usize {
    500
}

/// Configuration of [`convergence_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub model: ModelSpec,
    /// Strictly decreasing, in `(0, 1]`.
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub p: f64,
    pub beta: f64,
    pub m_mc: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Empty means the origin.
    #[serde(default)]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub y0: Vec<f64>,
    #[serde(default = "default_slow_noise")]
    pub slow_noise: NoiseKind,
    #[serde(default)]
    pub hurst: Option<f64>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: MicroStepPolicy,
    #[serde(default)]
    pub scheme: SchemeOptions,
    #[serde(default)]
    pub fbar: FbarSource,
    /// Cells of the coarse grid on which Hoelder norms are evaluated.
    #[serde(default = "default_macro_cells")]
    pub macro_cells: usize,
    #[serde(default)]
    pub delta: DeltaMode,
}

fn default_slow_noise() -> NoiseKind {
    NoiseKind::BrownianIto
}

impl StudySpec {
    /// Defaults around a model with the given `eps` list and budget.
    pub fn new(model: ModelSpec, epsilons: Vec<f64>, beta: f64, m_mc: usize) -> Self {
        Self {
            model,
            epsilons,
            p: 1.0,
            beta,
            m_mc,
            horizon: 1.0,
            x0: Vec::new(),
            y0: Vec::new(),
            slow_noise: NoiseKind::BrownianIto,
            hurst: None,
            substeps: default_substeps(),
            seed: 0,
            policy: MicroStepPolicy::default(),
            scheme: SchemeOptions::default(),
            fbar: FbarSource::ClosedForm,
            macro_cells: default_macro_cells(),
            delta: DeltaMode::Schedule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidParameter(s));
        if self.epsilons.is_empty() {
            return bad("no epsilon values".into());
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad(format!("epsilon values must lie in (0, 1]: {:?}", self.epsilons));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon values must be strictly decreasing".into());
        }
        if !(self.p >= 1.0) {
            return bad(format!("p must be at least 1, got {}", self.p));
        }
        if self.m_mc == 0 {
            return bad("m_mc must be positive".into());
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.macro_cells == 0 || self.macro_cells > 2000 {
            return bad(format!("macro_cells must lie in 1..=2000, got {}", self.macro_cells));
        }
        let beta = HoelderExponent::new(self.beta)?;
        let alpha = self.alpha()?;
        if beta.value() >= alpha {
            return bad(format!("beta {} must be below the driver exponent {alpha}", self.beta));
        }
        self.slow_spec(0).validate()?;
        Ok(())
    }

    /// Exponent of the mixed lift.
    pub fn alpha(&self) -> Result<f64> {
        let b = self.slow_spec(0).alpha()?.value();
        let w = NoiseSpec::brownian_ito(1, 0, 1).alpha()?.value();
        Ok(b.min(w))
    }

    /// Slow driver of seed index `s`; stream `2 s`.
    pub fn slow_spec(&self, s: u64) -> NoiseSpec {
        let d = self.model.build().map(|m| m.slow_noise_dim()).unwrap_or(1);
        NoiseSpec {
            kind: self.slow_noise,
            dim: d,
            hurst: self.hurst,
            substeps: self.substeps,
            seed: self.seed,
            stream_id: 2 * s,
            alpha: None,
        }
    }

    /// Fast Brownian driver of seed index `s`; stream `2 s + 1`.
    pub fn fast_spec(&self, s: u64, e: usize) -> NoiseSpec {
        NoiseSpec::brownian_ito(e, self.seed, 2 * s + 1).with_substeps(self.substeps)
    }

    fn initial_state(&self, model: &dyn SlowFastModel) -> Result<Vec<f64>> {
        let pick = |v: &[f64], n: usize, what: &'static str| -> Result<Vec<f64>> {
            if v.is_empty() {
                Ok(vec![0.0; n])
            } else if v.len() == n {
                Ok(v.to_vec())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                })
            }
        };
        let mut z = pick(&self.x0, model.slow_dim(), "x0")?;
        z.extend(pick(&self.y0, model.fast_dim(), "y0")?);
        Ok(z)
    }

    /// Common simulation grid for all `eps` and the coarsening factor to the
    /// macro grid.
    pub fn grids(&self) -> Result<(Grid, usize)> {
        let eps_min = *self
            .epsilons
            .last()
            .ok_or_else(|| Error::InvalidParameter("no epsilon values".into()))?;
        let needed = self.policy.steps_for(self.horizon, eps_min);
        let factor = needed.div_ceil(self.macro_cells);
        let n = factor * needed.div_ceil(factor);
        Ok((Grid::new(self.horizon, n)?, factor))
    }
}

/// One row of the study table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub epsilon: f64,
    pub delta: f64,
    /// Mean of `||X^eps - X-bar||_beta^p`.
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// Slope of `log mean` against `log eps`; absent when some mean is 0.
    pub slope: Option<LineFit>,
    /// Content hash of the slow driver of each seed.
    pub lift_hashes: Vec<String>,
    pub grid_steps: usize,
    pub macro_factor: usize,
    pub runtime_secs: f64,
}

impl StudyResult {
    /// `epsilon,mean,stderr,n`, one row per `eps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,mean,stderr,n\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.epsilon, r.mean, r.stderr, r.n));
        }
        out
    }

    /// `log_epsilon,log_mean` for plotting.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("log_epsilon,log_mean\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.epsilon.ln(), r.mean.ln()));
        }
        out
    }

    /// Means strictly decrease with `eps` and adjacent means are at least
    /// `k` combined standard errors apart.
    pub fn separated_decrease(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let gap = w[0].mean - w[1].mean;
            let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            gap > 0.0 && gap >= k * se
        })
    }
}

fn resolve_fbar(spec: &StudySpec, model: &Arc<dyn SlowFastModel>) -> Result<AveragedDrift> {
    Ok(match &spec.fbar {
        FbarSource::ClosedForm => AveragedDrift::ClosedForm(model.clone()),
        FbarSource::Table { lo, hi, points, method } => AveragedDrift::Table(Arc::new(build_fbar_table(
            model, *lo, *hi, *points, *method, spec.seed,
        )?)),
        FbarSource::Csv { path } => {
            let file = std::io::BufReader::new(std::fs::File::open(path)?);
            AveragedDrift::Table(Arc::new(FbarTable::read_csv(file)?))
        }
    })
}

/// Drivers of seed index `s`: the slow lift, the fast lift and their joint lift.
fn seed_drivers(
    spec: &StudySpec,
    model: &dyn SlowFastModel,
    grid: &Grid,
    s: u64,
) -> Result<(Lift, Lift, GridRoughPath)> {
    let b = sample_lift(&spec.slow_spec(s), grid)?;
    let w = brownian_ito_lift(&spec.fast_spec(s, model.fast_noise_dim()), grid)?;
    let xi = mixed_lift(&b, &w)?;
    Ok((b, w, xi))
}

/// Checks that the slow block of `xi` is exactly the lift `b`.
fn check_coupling(b: &Lift, xi: &GridRoughPath, hash: &str) -> Result<()> {
    let d = b.rp.dim();
    let coords: Vec<usize> = (0..d).collect();
    let seen = xi.project(&coords)?.with_alpha(b.rp.alpha()).content_hash();
    if seen != hash {
        return Err(Error::GridMismatch(
            "slow block of the joint lift differs from the slow driver".into(),
        ));
    }
    Ok(())
}

/// For every seed: one slow driver `B`, the averaged solution on `B`, and
/// for every `eps` the slow-fast solution on the joint lift of `B` and a
/// fast Brownian motion (the same one for all `eps`). Reports the
/// mean and standard error of `||X^eps - X-bar||_beta^p` per `eps`, the
/// seminorm taken on the macro grid.
pub fn convergence_study(spec: &StudySpec) -> Result<StudyResult> {
    let start = Instant::now();
    spec.validate()?;
    let model = spec.model.build()?;
    let (grid, factor) = spec.grids()?;
    for &eps in &spec.epsilons {
        spec.policy.check(grid.step(), eps)?;
    }
    let fbar = resolve_fbar(spec, &model)?;
    let z0 = spec.initial_state(model.as_ref())?;
    let m = model.slow_dim();
    let sigma = model.sigma();
    let macro_step = grid.step() * factor as f64;

    let outcomes: Vec<(String, Vec<f64>)> = (0..spec.m_mc as u64)
        .into_par_iter()
        .map(|s| -> Result<(String, Vec<f64>)> {
            let fail = |epsilon: f64| {
                move |e: Error| Error::RunFailed {
                    seed: s,
                    epsilon,
                    source: Box::new(e),
                }
            };
            let (b, _w, xi) = seed_drivers(spec, model.as_ref(), &grid, s).map_err(fail(f64::NAN))?;
            let hash = b.rp.content_hash();
            check_coupling(&b, &xi, &hash)?;
            let xbar = solve_averaged(fbar.clone(), sigma.clone(), &b.rp, &z0[..m]).map_err(fail(0.0))?;
            let mut norms = Vec::with_capacity(spec.epsilons.len());
            for &eps in &spec.epsilons {
                let sol =
                    solve_slow_fast(model.as_ref(), &xi, eps, &z0, &spec.policy, spec.scheme).map_err(fail(eps))?;
                let diff: Vec<f64> = (0..grid.n_points())
                    .step_by(factor)
                    .flat_map(|k| linalg::sub(sol.x_at(k), xbar.value(k)))
                    .collect();
                let norm = hoelder_seminorm(&PathField::new(&diff, m), macro_step, spec.beta, DEFAULT_PAIR_BUDGET)?;
                norms.push(norm.powf(spec.p));
            }
            Ok((hash, norms))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(spec.epsilons.len());
    for (j, &eps) in spec.epsilons.iter().enumerate() {
        let samples: Vec<f64> = outcomes.iter().map(|o| o.1[j]).collect();
        let est = Estimate::from_samples(&samples);
        let delta = match (spec.delta, eps < 1.0) {
            (DeltaMode::Schedule, false) => spec.horizon * 0.5,
            _ => delta_schedule(eps, spec.beta, spec.delta, grid.step(), spec.horizon)?,
        };
        rows.push(StudyRow {
            epsilon: eps,
            delta,
            mean: est.mean,
            stderr: est.stderr,
            n: est.n,
        });
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.mean > 0.0) {
        let le: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        let lm: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        Some(log_log_slope(&le, &lm)?)
    } else {
        None
    };
    Ok(StudyResult {
        rows,
        slope,
        lift_hashes: outcomes.into_iter().map(|o| o.0).collect(),
        grid_steps: grid.n_steps(),
        macro_factor: factor,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// `sup_t E|Y^eps_t - Y^_t|^2` per block length, with the log-log fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxGapReport {
    pub epsilon: f64,
    pub deltas: Vec<f64>,
    pub sup_gap: Vec<f64>,
    pub fit: LineFit,
}

/// Runs `spec.m_mc` coupled pairs `(Y^eps, Y^)` at one `eps` for every block
/// length in `deltas` and regresses `log sup_t E|Y^eps - Y^|^2` on `log delta`.
pub fn aux_gap_slope(spec: &StudySpec, eps: f64, deltas: &[f64]) -> Result<AuxGapReport> {
    let mut probe = spec.clone();
    probe.epsilons = vec![eps];
    probe.validate()?;
    if deltas.len() < 2 || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParameter(
            "need at least two positive block lengths".into(),
        ));
    }
    let (lo, hi) = deltas
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(l, h), d| (l.min(*d), h.max(*d)));
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(
            "block lengths must span at least one decade".into(),
        ));
    }
    let model = spec.model.build()?;
    let grid = Grid::new(spec.horizon, spec.policy.steps_for(spec.horizon, eps))?;
    let z0 = spec.initial_state(model.as_ref())?;
    let n = model.fast_dim();
    let np = grid.n_points();

    let per_seed: Vec<Vec<Vec<f64>>> = (0..spec.m_mc as u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<Vec<f64>>> {
            let fail = |e: Error| Error::RunFailed {
                seed: s,
                epsilon: eps,
                source: Box::new(e),
            };
            let (_, _, xi) = seed_drivers(spec, model.as_ref(), &grid, s).map_err(fail)?;
            let sol = solve_slow_fast(model.as_ref(), &xi, eps, &z0, &spec.policy, spec.scheme).map_err(fail)?;
            deltas
                .iter()
                .map(|&delta| {
                    let yh = khasminskii_aux(model.as_ref(), &xi, &sol, delta, spec.scheme).map_err(fail)?;
                    Ok((0..np)
                        .map(|k| {
                            let a = sol.y_at(k);
                            let b = &yh[k * n..(k + 1) * n];
                            a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
                        })
                        .collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let count = per_seed.len() as f64;
    let sup_gap: Vec<f64> = (0..deltas.len())
        .map(|j| {
            (0..np)
                .map(|k| per_seed.iter().map(|r| r[j][k]).sum::<f64>() / count)
                .fold(0.0, f64::max)
        })
        .collect();
    let fit = log_log_slope(deltas, &sup_gap)?;
    Ok(AuxGapReport {
        epsilon: eps,
        deltas: deltas.to_vec(),
        sup_gap,
        fit,
    })
}

/// `E|Y^eps_t|^2` on the grid at one `eps`, over `spec.m_mc` seeds.
pub fn fast_second_moment_profile(spec: &StudySpec, eps: f64) -> Result<Vec<f64>> {
    let model = spec.model.build()?;
    let grid = Grid::new(spec.horizon, spec.policy.steps_for(spec.horizon, eps))?;
    let z0 = spec.initial_state(model.as_ref())?;
    let np = grid.n_points();
    let per_seed: Vec<Vec<f64>> = (0..spec.m_mc as u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let fail = |e: Error| Error::RunFailed {
                seed: s,
                epsilon: eps,
                source: Box::new(e),
            };
            let (_, _, xi) = seed_drivers(spec, model.as_ref(), &grid, s).map_err(fail)?;
            let sol = solve_slow_fast(model.as_ref(), &xi, eps, &z0, &spec.policy, spec.scheme).map_err(fail)?;
            Ok((0..np).map(|k| sol.y_at(k).iter().map(|v| v * v).sum()).collect())
        })
        .collect::<Result<_>>()?;
    let count = per_seed.len() as f64;
    Ok((0..np)
        .map(|k| per_seed.iter().map(|r| r[k]).sum::<f64>() / count)
        .collect())
}
