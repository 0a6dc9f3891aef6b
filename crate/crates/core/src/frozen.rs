//! The frozen fast dynamics `dY = g(x, Y) dt + h(x, Y) dw` at a fixed slow
//! state, its invariant law, the averaged drift and the averaged RDE.

use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{GridControlledPath, GridRoughPath, SmoothMap};
use crate::error::{Error, Result};
use crate::lifts::stream_rng;
use crate::quadrature::simpson;
use crate::rde::{check_state, solve_rde, Drift, VectorFieldMeta, VectorFieldSet};
use crate::slowfast::{ClosedForm, SlowFastModel};
use crate::stats::{batch_means, Estimate};

/// A slow-fast model with the slow variable pinned at `x`.
#[derive(Clone)]
pub struct FrozenModel {
    model: Arc<dyn SlowFastModel>,
    x: Vec<f64>,
}

impl std::fmt::Debug for FrozenModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrozenModel")
            .field("model", &self.model.name())
            .field("x", &self.x)
            .finish()
    }
}

impl FrozenModel {
    pub fn new(model: Arc<dyn SlowFastModel>, x: &[f64]) -> Result<Self> {
        if x.len() != model.slow_dim() {
            return Err(Error::DimensionMismatch {
                what: "slow state",
                expected: model.slow_dim(),
                got: x.len(),
            });
        }
        Ok(Self { model, x: x.to_vec() })
    }

    pub fn model(&self) -> &Arc<dyn SlowFastModel> {
        &self.model
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.model.fast_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.model.fast_noise_dim()
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        self.model.closed_form(&self.x)
    }

    pub fn gamma2(&self) -> f64 {
        self.model.meta().gamma2
    }

    fn check_start(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "fast state",
                expected: self.dim(),
                got: y.len(),
            });
        }
        Ok(())
    }
}

fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    Ok((horizon / dt).round() as usize)
}

/// Euler-Maruyama integrator for the frozen equation with reusable buffers.
struct Em<'a> {
    fm: &'a FrozenModel,
    g: Vec<f64>,
    h: Vec<f64>,
    dw: Vec<f64>,
}

impl<'a> Em<'a> {
    fn new(fm: &'a FrozenModel) -> Self {
        let (n, e) = (fm.dim(), fm.noise_dim());
        Self {
            fm,
            g: vec![0.0; n],
            h: vec![0.0; n * e],
            dw: vec![0.0; e],
        }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng, dt: f64) {
        let s = dt.sqrt();
        for v in self.dw.iter_mut() {
            *v = s * rng.sample::<f64, _>(StandardNormal);
        }
    }

    /// Advances `y` by one step with the increment currently in `dw`.
    fn step(&mut self, y: &mut [f64], dt: f64, index: usize) -> Result<()> {
        let m = &self.fm.model;
        let x = &self.fm.x;
        let e = self.dw.len();
        m.g(x, y, &mut self.g);
        m.h(x, y, &mut self.h);
        for i in 0..y.len() {
            let mut acc = y[i] + self.g[i] * dt;
            for b in 0..e {
                acc += self.h[i * e + b] * self.dw[b];
            }
            y[i] = acc;
        }
        check_state(y, index)
    }
}

/// Sample path of the frozen equation on the grid `k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPath {
    pub dt: f64,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FrozenPath {
    pub fn n_points(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// Euler-Maruyama path from `y0` up to `horizon` with seeded increments.
pub fn solve_frozen(
    fm: &FrozenModel,
    y0: &[f64],
    horizon: f64,
    h_step: f64,
    seed: u64,
    stream_id: u64,
) -> Result<FrozenPath> {
    fm.check_start(y0)?;
    let n_steps = steps_for(horizon, h_step)?;
    let mut rng = stream_rng(seed, stream_id);
    let mut em = Em::new(fm);
    let mut y = y0.to_vec();
    let mut values = Vec::with_capacity((n_steps + 1) * y.len());
    values.extend_from_slice(&y);
    for k in 0..n_steps {
        em.draw(&mut rng, h_step);
        em.step(&mut y, h_step, k + 1)?;
        values.extend_from_slice(&y);
    }
    Ok(FrozenPath {
        dt: h_step,
        dim: y0.len(),
        values,
    })
}

/// Euler-Maruyama with given increments `dw` (`n_steps x e`, row-major).
pub fn solve_frozen_with(fm: &FrozenModel, y0: &[f64], dt: f64, dw: &[f64]) -> Result<FrozenPath> {
    fm.check_start(y0)?;
    steps_for(0.0, dt)?;
    let e = fm.noise_dim();
    if !dw.len().is_multiple_of(e) {
        return Err(Error::DimensionMismatch {
            what: "noise increments",
            expected: e,
            got: dw.len() % e,
        });
    }
    let mut em = Em::new(fm);
    let mut y = y0.to_vec();
    let mut values = Vec::with_capacity(dw.len() / e * y.len() + y.len());
    values.extend_from_slice(&y);
    for (k, inc) in dw.chunks_exact(e).enumerate() {
        em.dw.copy_from_slice(inc);
        em.step(&mut y, dt, k + 1)?;
        values.extend_from_slice(&y);
    }
    Ok(FrozenPath {
        dt,
        dim: y0.len(),
        values,
    })
}

/// Runs `job` once per seed in parallel, seed `i` on stream `i`.
/// Records come back in seed order.
fn per_seed<T: Send>(
    n_seeds: usize,
    seed: u64,
    job: impl Fn(&mut ChaCha8Rng) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            job(&mut rng)
        })
        .collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidParameter(
            "observation times must be nonnegative and increasing".into(),
        ));
    }
    Ok(())
}

/// Estimates `E phi(Y_t)` from `y0` at each of `times` over independent seeds.
pub fn transient_expectation(
    fm: &FrozenModel,
    y0: &[f64],
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    times: &[f64],
    dt: f64,
    n_seeds: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    fm.check_start(y0)?;
    check_times(times)?;
    let marks: Vec<usize> = times.iter().map(|&t| steps_for(t, dt)).collect::<Result<_>>()?;
    let records = per_seed(n_seeds, seed, |rng| {
        let mut em = Em::new(fm);
        let mut y = y0.to_vec();
        let mut out = Vec::with_capacity(marks.len());
        let mut k = 0;
        for &mk in &marks {
            while k < mk {
                em.draw(rng, dt);
                k += 1;
                em.step(&mut y, dt, k)?;
            }
            out.push(phi(&y));
        }
        Ok(out)
    })?;
    Ok(column_estimates(&records, marks.len()))
}

fn column_estimates(records: &[Vec<f64>], width: usize) -> Vec<Estimate> {
    let mut column = vec![0.0; records.len()];
    (0..width)
        .map(|j| {
            for (c, r) in column.iter_mut().zip(records) {
                *c = r[j];
            }
            Estimate::from_samples(&column)
        })
        .collect()
}

/// Squared gap of two synchronously coupled frozen paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCurve {
    pub times: Vec<f64>,
    pub mean_sq_gap: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `exp(-gamma2 t) |y1 - y2|^2`.
    pub envelope: Vec<f64>,
}

impl ContractionCurve {
    /// Largest `mean_sq_gap / envelope`.
    pub fn max_ratio(&self) -> f64 {
        self.mean_sq_gap
            .iter()
            .zip(&self.envelope)
            .map(|(g, e)| {
                if *e > 0.0 {
                    g / e
                } else if *g > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|mean_sq_gap / envelope - 1|`.
    pub fn max_relative_deviation(&self) -> f64 {
        self.mean_sq_gap
            .iter()
            .zip(&self.envelope)
            .filter(|(_, e)| **e > 0.0)
            .map(|(g, e)| (g / e - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn majorized(&self, tolerance: f64) -> bool {
        self.mean_sq_gap
            .iter()
            .zip(&self.envelope)
            .all(|(g, e)| *g <= e * (1.0 + tolerance))
    }
}

/// `E |Y^{x,y1}_t - Y^{x,y2}_t|^2` on the grid `k * dt`, `t <= horizon`,
/// with both paths driven by the same increments.
pub fn contraction_check(
    fm: &FrozenModel,
    y1: &[f64],
    y2: &[f64],
    horizon: f64,
    dt: f64,
    n_seeds: usize,
    seed: u64,
) -> Result<ContractionCurve> {
    fm.check_start(y1)?;
    fm.check_start(y2)?;
    let n_steps = steps_for(horizon, dt)?;
    let records = per_seed(n_seeds, seed, |rng| {
        let mut a = Em::new(fm);
        let mut b = Em::new(fm);
        let mut u = y1.to_vec();
        let mut v = y2.to_vec();
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(sq_dist(&u, &v));
        for k in 1..=n_steps {
            a.draw(rng, dt);
            b.dw.copy_from_slice(&a.dw);
            a.step(&mut u, dt, k)?;
            b.step(&mut v, dt, k)?;
            out.push(sq_dist(&u, &v));
        }
        Ok(out)
    })?;
    let est = column_estimates(&records, n_steps + 1);
    let d0 = sq_dist(y1, y2);
    let gamma2 = fm.gamma2();
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    Ok(ContractionCurve {
        envelope: times.iter().map(|t| (-gamma2 * t).exp() * d0).collect(),
        times,
        mean_sq_gap: est.iter().map(|e| e.mean).collect(),
        stderr: est.iter().map(|e| e.stderr).collect(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// How `f-bar(x)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum AveragingMethod {
    ClosedForm,
    /// Time average of `f(x, Y_s)` over `[t_burn, t_long]` on one path from 0.
    ErgodicAverage {
        t_long: f64,
        t_burn: f64,
        dt: f64,
        batches: usize,
    },
    /// Mean of `f(x, Y_{t_mix})` over `n_seeds` paths started at 0.
    EndpointMc {
        t_mix: f64,
        dt: f64,
        n_seeds: usize,
    },
}

impl AveragingMethod {
    /// Endpoint Monte Carlo at `t_mix = 10 / gamma2` with 4096 seeds.
    pub fn endpoint_default(gamma2: f64) -> Self {
        AveragingMethod::EndpointMc {
            t_mix: 10.0 / gamma2,
            dt: 0.01,
            n_seeds: 4096,
        }
    }

    /// Burn-in `5 / gamma2`.
    pub fn ergodic_default(gamma2: f64, t_long: f64) -> Self {
        AveragingMethod::ErgodicAverage {
            t_long,
            t_burn: 5.0 / gamma2,
            dt: 0.01,
            batches: 20,
        }
    }
}

/// Estimated `f-bar(x)` with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl DriftEstimate {
    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().copied().fold(0.0, f64::max)
    }
}

/// `f-bar(x) = int f(x, y) mu^x(dy)`. With a `tolerance`, an estimate whose
/// largest standard error exceeds it is an error.
pub fn averaged_drift(
    model: &Arc<dyn SlowFastModel>,
    x: &[f64],
    method: AveragingMethod,
    seed: u64,
    tolerance: Option<f64>,
) -> Result<DriftEstimate> {
    let fm = FrozenModel::new(model.clone(), x)?;
    let (m, n) = (model.slow_dim(), model.fast_dim());
    let est = match method {
        AveragingMethod::ClosedForm => {
            let cf = fm
                .closed_form()
                .ok_or(Error::MissingMetadata("closed-form averaged drift"))?;
            DriftEstimate {
                value: cf.fbar,
                stderr: vec![0.0; m],
            }
        }
        AveragingMethod::EndpointMc { t_mix, dt, n_seeds } => {
            if n_seeds < 2 {
                return Err(Error::InvalidParameter(
                    "endpoint Monte Carlo needs at least 2 seeds".into(),
                ));
            }
            let n_steps = steps_for(t_mix, dt)?;
            let records = per_seed(n_seeds, seed, |rng| {
                let mut em = Em::new(&fm);
                let mut y = vec![0.0; n];
                for k in 1..=n_steps {
                    em.draw(rng, dt);
                    em.step(&mut y, dt, k)?;
                }
                let mut out = vec![0.0; m];
                model.f(x, &y, &mut out);
                Ok(out)
            })?;
            let est = column_estimates(&records, m);
            DriftEstimate {
                value: est.iter().map(|e| e.mean).collect(),
                stderr: est.iter().map(|e| e.stderr).collect(),
            }
        }
        AveragingMethod::ErgodicAverage {
            t_long,
            t_burn,
            dt,
            batches,
        } => {
            if !(t_burn >= 0.0 && t_burn < t_long) {
                return Err(Error::InvalidParameter(format!(
                    "burn-in {t_burn} must lie in [0, {t_long})"
                )));
            }
            let burn = steps_for(t_burn, dt)?;
            let total = steps_for(t_long, dt)?;
            let mut rng = stream_rng(seed, 0);
            let mut em = Em::new(&fm);
            let mut y = vec![0.0; n];
            let mut series = vec![Vec::with_capacity(total - burn); m];
            let mut fv = vec![0.0; m];
            for k in 1..=total {
                em.draw(&mut rng, dt);
                em.step(&mut y, dt, k)?;
                if k > burn {
                    model.f(x, &y, &mut fv);
                    for (s, v) in series.iter_mut().zip(&fv) {
                        s.push(*v);
                    }
                }
            }
            let est: Vec<Estimate> = series.iter().map(|s| batch_means(s, batches)).collect::<Result<_>>()?;
            DriftEstimate {
                value: est.iter().map(|e| e.mean).collect(),
                stderr: est.iter().map(|e| e.stderr).collect(),
            }
        }
    };
    if let Some(tol) = tolerance {
        let worst = est.max_stderr();
        if worst > tol {
            return Err(Error::BudgetTooSmall {
                stderr: worst,
                tolerance: tol,
            });
        }
    }
    Ok(est)
}

/// Long-run `E|Y|^q` at two budgets, the second with twice the seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub estimate: Estimate,
    pub doubled: Estimate,
}

impl MomentCheck {
    pub fn ratio(&self) -> f64 {
        self.doubled.mean / self.estimate.mean
    }
}

/// `q`-th absolute moment of `Y_{t_long}` from `y = 0`, at `n_seeds` and
/// `2 n_seeds` paths with disjoint seed streams.
pub fn invariant_moment_check(
    fm: &FrozenModel,
    q: f64,
    t_long: f64,
    dt: f64,
    n_seeds: usize,
    seed: u64,
) -> Result<MomentCheck> {
    let y0 = vec![0.0; fm.dim()];
    let phi = move |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().powf(0.5 * q);
    let first = transient_expectation(fm, &y0, &phi, &[t_long], dt, n_seeds, seed)?[0];
    let second = transient_expectation(
        fm,
        &y0,
        &phi,
        &[t_long],
        dt,
        2 * n_seeds,
        seed.wrapping_add(0x9e37_79b9),
    )?[0];
    Ok(MomentCheck {
        estimate: first,
        doubled: second,
    })
}

/// `P_t phi(y)` on a time grid next to a reference value of `mu^x(phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingCurve {
    pub times: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub limit: f64,
}

impl MixingCurve {
    pub fn gaps(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| (e.mean - self.limit).abs()).collect()
    }
}

pub fn mixing_decay_check(
    fm: &FrozenModel,
    y: &[f64],
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    limit: f64,
    times: &[f64],
    dt: f64,
    n_seeds: usize,
    seed: u64,
) -> Result<MixingCurve> {
    Ok(MixingCurve {
        times: times.to_vec(),
        estimates: transient_expectation(fm, y, phi, times, dt, n_seeds, seed)?,
        limit,
    })
}

/// `E |int_0^t (f(x, Y_s) - fbar) ds|^2` at each of `times`, left-point sums.
pub fn time_average_error(
    fm: &FrozenModel,
    y0: &[f64],
    fbar: &[f64],
    times: &[f64],
    dt: f64,
    n_seeds: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    fm.check_start(y0)?;
    check_times(times)?;
    let m = fm.model.slow_dim();
    if fbar.len() != m {
        return Err(Error::DimensionMismatch {
            what: "averaged drift",
            expected: m,
            got: fbar.len(),
        });
    }
    let marks: Vec<usize> = times.iter().map(|&t| steps_for(t, dt)).collect::<Result<_>>()?;
    let records = per_seed(n_seeds, seed, |rng| {
        let mut em = Em::new(fm);
        let mut y = y0.to_vec();
        let mut acc = vec![0.0; m];
        let mut fv = vec![0.0; m];
        let mut out = Vec::with_capacity(marks.len());
        let mut k = 0;
        for &mk in &marks {
            while k < mk {
                fm.model.f(&fm.x, &y, &mut fv);
                for j in 0..m {
                    acc[j] += (fv[j] - fbar[j]) * dt;
                }
                em.draw(rng, dt);
                k += 1;
                em.step(&mut y, dt, k)?;
            }
            out.push(acc.iter().map(|a| a * a).sum());
        }
        Ok(out)
    })?;
    Ok(column_estimates(&records, marks.len()))
}

/// `E |Y^{x1,y}_t - Y^{x2,y}_t|^2` with shared increments.
pub fn x_sensitivity(
    model: &Arc<dyn SlowFastModel>,
    x1: &[f64],
    x2: &[f64],
    y: &[f64],
    t: f64,
    dt: f64,
    n_seeds: usize,
    seed: u64,
) -> Result<Estimate> {
    let a = FrozenModel::new(model.clone(), x1)?;
    let b = FrozenModel::new(model.clone(), x2)?;
    a.check_start(y)?;
    let n_steps = steps_for(t, dt)?;
    let records = per_seed(n_seeds, seed, |rng| {
        let mut ea = Em::new(&a);
        let mut eb = Em::new(&b);
        let mut u = y.to_vec();
        let mut v = y.to_vec();
        for k in 1..=n_steps {
            ea.draw(rng, dt);
            eb.dw.copy_from_slice(&ea.dw);
            ea.step(&mut u, dt, k)?;
            eb.step(&mut v, dt, k)?;
        }
        Ok(vec![sq_dist(&u, &v)])
    })?;
    Ok(column_estimates(&records, 1)[0])
}

/// `int phi dmu^x` for a scalar frozen equation with scalar noise, from the
/// stationary density `p(y) ~ h^{-2} exp(int_0^y 2 g / h^2)` on `[lo, hi]`.
pub fn stationary_expectation_1d(
    fm: &FrozenModel,
    phi: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    panels: usize,
) -> Result<f64> {
    if fm.dim() != 1 || fm.noise_dim() != 1 {
        return Err(Error::InvalidParameter(
            "stationary density quadrature needs a scalar fast state and noise".into(),
        ));
    }
    if !(lo < 0.0 && hi > 0.0) || panels < 2 {
        return Err(Error::InvalidParameter("quadrature range must straddle 0".into()));
    }
    let x = &fm.x;
    let coeff = |y: f64| {
        let (mut g, mut h) = ([0.0], [0.0]);
        fm.model.g(x, &[y], &mut g);
        fm.model.h(x, &[y], &mut h);
        (g[0], h[0])
    };
    let log_density = |y: f64| {
        let (_, h) = coeff(y);
        let potential = simpson(
            |z| {
                let (g, h) = coeff(z);
                2.0 * g / (h * h)
            },
            0.0,
            y,
            64,
        );
        potential - 2.0 * h.abs().ln()
    };
    let n = (panels + 1) & !1;
    let step = (hi - lo) / n as f64;
    let logs: Vec<f64> = (0..=n).map(|i| log_density(lo + i as f64 * step)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut mass, mut moment) = (0.0, 0.0);
    for (i, l) in logs.iter().enumerate() {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = (l - top).exp();
        mass += w * p;
        moment += w * p * phi(lo + i as f64 * step);
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(moment / mass)
}

/// `f-bar` tabulated on a uniform grid of a scalar slow variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbarTable {
    xs: Vec<f64>,
    values: Vec<f64>,
    stderr: Vec<f64>,
}

impl FbarTable {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || values.len() != xs.len() || stderr.len() != xs.len() {
            return Err(Error::InvalidParameter(
                "table needs at least 2 rows of equal length".into(),
            ));
        }
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        if !(h > 0.0) {
            return Err(Error::InvalidParameter("table abscissae must increase".into()));
        }
        for (i, x) in xs.iter().enumerate() {
            if (x - (xs[0] + i as f64 * h)).abs() > 1e-9 * h.max(x.abs()) {
                return Err(Error::InvalidParameter(
                    "table abscissae must be uniformly spaced".into(),
                ));
            }
        }
        if values.iter().chain(&stderr).any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite table entry".into()));
        }
        Ok(Self { xs, values, stderr })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }

    /// Catmull-Rom interpolation.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfTableRange { x, lo, hi });
        }
        let n = self.xs.len();
        let h = (hi - lo) / (n - 1) as f64;
        let i = (((x - lo) / h).floor() as usize).min(n - 2);
        let t = (x - self.xs[i]) / h;
        let p1 = self.values[i];
        let p2 = self.values[i + 1];
        let v = |j: usize| self.values[j];
        // quadratic extrapolation for the ghost nodes when there is room
        let p0 = match (i, n) {
            (0, 2) => 2.0 * p1 - p2,
            (0, _) => 3.0 * p1 - 3.0 * p2 + v(2),
            _ => v(i - 1),
        };
        let p3 = if i + 2 < n {
            v(i + 2)
        } else if n > 2 {
            3.0 * p2 - 3.0 * p1 + v(i - 1)
        } else {
            2.0 * p2 - p1
        };
        let t2 = t * t;
        let t3 = t2 * t;
        Ok(0.5
            * (2.0 * p1
                + (p2 - p0) * t
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
                + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,fbar,stderr")?;
        for i in 0..self.xs.len() {
            writeln!(w, "{:e},{:e},{:e}", self.xs[i], self.values[i], self.stderr[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(head)) if head.trim() == "x,fbar,stderr" => {}
            _ => return Err(Error::Format("expected header x,fbar,stderr".into())),
        }
        let (mut xs, mut values, mut stderr) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Format(format!("line {}: expected 3 columns", lineno + 2)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))
            };
            xs.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
            stderr.push(parse(cols[2])?);
        }
        Self::new(xs, values, stderr)
    }
}

/// Tabulates `f-bar` at `n` uniform points of `[lo, hi]` for a model with a
/// scalar slow variable. Every point uses the same seed (common random
/// numbers), which keeps the table smooth in `x`.
pub fn build_fbar_table(
    model: &Arc<dyn SlowFastModel>,
    lo: f64,
    hi: f64,
    n: usize,
    method: AveragingMethod,
    seed: u64,
) -> Result<FbarTable> {
    if model.slow_dim() != 1 {
        return Err(Error::InvalidParameter(
            "f-bar tables need a scalar slow variable".into(),
        ));
    }
    if !(lo < hi) || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "bad table range [{lo}, {hi}] with {n} points"
        )));
    }
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let rows: Vec<DriftEstimate> = xs
        .iter()
        .map(|&x| averaged_drift(model, &[x], method, seed, None))
        .collect::<Result<_>>()?;
    FbarTable::new(
        xs,
        rows.iter().map(|r| r.value[0]).collect(),
        rows.iter().map(|r| r.stderr[0]).collect(),
    )
}

/// Source of `f-bar` for the averaged RDE.
#[derive(Clone)]
pub enum AveragedDrift {
    ClosedForm(Arc<dyn SlowFastModel>),
    Table(Arc<FbarTable>),
}

impl AveragedDrift {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            AveragedDrift::ClosedForm(m) => m
                .closed_form(x)
                .map(|cf| cf.fbar)
                .ok_or(Error::MissingMetadata("closed-form averaged drift")),
            AveragedDrift::Table(t) => Ok(vec![t.eval(x[0])?]),
        }
    }
}

struct FbarDrift {
    source: AveragedDrift,
    dim: usize,
    miss: OnceLock<f64>,
}

impl Drift for FbarDrift {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, y: &[f64], _psi: Option<&[f64]>, out: &mut [f64]) {
        match &self.source {
            AveragedDrift::ClosedForm(m) => match m.closed_form(y) {
                Some(cf) => out.copy_from_slice(&cf.fbar),
                None => out.fill(f64::NAN),
            },
            AveragedDrift::Table(t) => match t.eval(y[0]) {
                Ok(v) => out[0] = v,
                Err(_) => {
                    let _ = self.miss.set(y[0]);
                    out[0] = f64::NAN;
                }
            },
        }
    }
}

/// `dX = f-bar(X) dt + sigma(X) dB`, `X_0 = x0`.
pub fn solve_averaged(
    fbar: AveragedDrift,
    sigma: Arc<dyn SmoothMap>,
    b: &Arc<GridRoughPath>,
    x0: &[f64],
) -> Result<GridControlledPath> {
    let dim = sigma.in_dim();
    let mut meta = VectorFieldMeta::default();
    match &fbar {
        AveragedDrift::ClosedForm(m) => {
            if m.closed_form(x0).is_none() {
                return Err(Error::MissingMetadata("closed-form averaged drift"));
            }
            let am = m.meta();
            meta.f_sup = Some(am.f_sup);
            meta.sigma_c2b = Some(am.sigma_c2b);
            meta.sigma_c3b = Some(am.sigma_c3b);
        }
        AveragedDrift::Table(t) => {
            if dim != 1 {
                return Err(Error::InvalidParameter(
                    "f-bar tables need a scalar slow variable".into(),
                ));
            }
            meta.f_sup = Some(t.values.iter().fold(0.0, |a, v| a.max(v.abs())));
        }
    }
    let table = match &fbar {
        AveragedDrift::Table(t) => Some(t.clone()),
        _ => None,
    };
    let drift = Arc::new(FbarDrift {
        source: fbar,
        dim,
        miss: OnceLock::new(),
    });
    let vfs = VectorFieldSet::new(sigma, drift.clone(), b.dim())?.with_meta(meta);
    match solve_rde(&vfs, b, x0) {
        Err(Error::NonFinite { index }) => match (drift.miss.get(), table) {
            (Some(&x), Some(t)) => {
                let (lo, hi) = t.range();
                Err(Error::OutOfTableRange { x, lo, hi })
            }
            _ => Err(Error::NonFinite { index }),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Constant, Grid, HoelderExponent};
    use crate::quadrature::gaussian_expectation;
    use crate::slowfast::{Cubic, CubicParams, OuSine, OuSineParams};

    fn ou() -> Arc<dyn SlowFastModel> {
        Arc::new(OuSine::new(OuSineParams::default()).unwrap())
    }

    fn cubic() -> Arc<dyn SlowFastModel> {
        Arc::new(Cubic::new(CubicParams::default()).unwrap())
    }

    #[test]
    fn deterministic_decay_is_first_order() {
        // g = -(y - c0 x) with x = 0 and no noise: y' = -y
        let m: Arc<dyn SlowFastModel> = Arc::new(
            OuSine::new(OuSineParams {
                h0: 0.0,
                ..Default::default()
            })
            .unwrap(),
        );
        let fm = FrozenModel::new(m, &[0.0]).unwrap();
        let err = |h: f64| {
            let p = solve_frozen(&fm, &[1.0], 1.0, h, 1, 0).unwrap();
            (p.at(p.n_points() - 1)[0] - (-1.0f64).exp()).abs()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        assert!(e1 < 0.01 && (e1 / e2 - 2.0).abs() < 0.05, "{e1} {e2}");
    }

    #[test]
    fn seeded_paths_repeat() {
        let fm = FrozenModel::new(ou(), &[0.3]).unwrap();
        let a = solve_frozen(&fm, &[0.0], 2.0, 0.01, 9, 4).unwrap();
        let b = solve_frozen(&fm, &[0.0], 2.0, 0.01, 9, 4).unwrap();
        let c = solve_frozen(&fm, &[0.0], 2.0, 0.01, 9, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(solve_frozen(&fm, &[0.0], 1.0, 0.0, 9, 4).is_err());
    }

    #[test]
    fn ou_mean_relaxes() {
        let fm = FrozenModel::new(ou(), &[0.7]).unwrap();
        let est = transient_expectation(&fm, &[2.0], &|y| y[0], &[1.0, 10.0], 0.01, 10_000, 3).unwrap();
        for (e, t) in est.iter().zip([1.0f64, 10.0]) {
            let exact = 0.7 + (2.0 - 0.7) * (-t).exp();
            assert!((e.mean - exact).abs() < 4.0 * e.stderr + 0.01, "{} vs {exact}", e.mean);
        }
    }

    #[test]
    fn equal_starts_stay_together() {
        let fm = FrozenModel::new(cubic(), &[0.4]).unwrap();
        let c = contraction_check(&fm, &[0.5], &[0.5], 1.0, 0.01, 4, 1).unwrap();
        assert!(c.mean_sq_gap.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn ou_gap_is_deterministic() {
        let fm = FrozenModel::new(ou(), &[1.0]).unwrap();
        let c = contraction_check(&fm, &[2.0], &[-1.0], 5.0, 0.001, 3, 1).unwrap();
        assert!(c.max_relative_deviation() < 0.01, "{}", c.max_relative_deviation());
        assert!(c.stderr.iter().zip(&c.mean_sq_gap).all(|(s, g)| *s <= 1e-9 * g));
    }

    #[test]
    fn cubic_gap_is_majorized() {
        let fm = FrozenModel::new(cubic(), &[0.8]).unwrap();
        let c = contraction_check(&fm, &[1.0], &[-1.0], 3.0, 0.001, 100, 2).unwrap();
        assert!(c.majorized(0.01), "ratio {}", c.max_ratio());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for x in [0.0, 0.5, 1.0, std::f64::consts::FRAC_PI_2] {
            let est = averaged_drift(&ou(), &[x], AveragingMethod::ClosedForm, 0, None).unwrap();
            let gh = gaussian_expectation(f64::sin, x, 0.5, 60).unwrap();
            assert!((est.value[0] - gh).abs() < 1e-12);
        }
        let at_half_pi = averaged_drift(
            &ou(),
            &[std::f64::consts::FRAC_PI_2],
            AveragingMethod::ClosedForm,
            0,
            None,
        )
        .unwrap();
        assert!((at_half_pi.value[0] - 0.77880).abs() < 1e-5);
        assert!(averaged_drift(&cubic(), &[0.0], AveragingMethod::ClosedForm, 0, None).is_err());
    }

    #[test]
    fn ergodic_average_agrees_with_closed_form() {
        let exact = (-0.25f64).exp() * 1.0f64.sin();
        let short = averaged_drift(&ou(), &[1.0], AveragingMethod::ergodic_default(2.0, 200.0), 5, None).unwrap();
        assert!((short.value[0] - exact).abs() < 3.0 * short.stderr[0], "{short:?}");
        let long = averaged_drift(&ou(), &[1.0], AveragingMethod::ergodic_default(2.0, 20_000.0), 5, None).unwrap();
        assert!((long.value[0] - exact).abs() < 0.02 * exact, "{long:?}");
        assert!(long.stderr[0] < 0.2 * short.stderr[0]);
    }

    #[test]
    fn small_budget_is_reported() {
        let method = AveragingMethod::EndpointMc {
            t_mix: 2.0,
            dt: 0.05,
            n_seeds: 16,
        };
        let r = averaged_drift(&ou(), &[1.0], method, 1, Some(1e-6));
        assert!(matches!(r, Err(Error::BudgetTooSmall { .. })));
    }

    #[test]
    fn stationary_quadrature_reproduces_ou() {
        let fm = FrozenModel::new(ou(), &[0.6]).unwrap();
        let v = stationary_expectation_1d(&fm, f64::sin, -8.0, 8.0, 800).unwrap();
        let exact = (-0.25f64).exp() * 0.6f64.sin();
        assert!((v - exact).abs() < 1e-8, "{v} {exact}");
    }

    #[test]
    fn ou_moments() {
        let fm = FrozenModel::new(ou(), &[0.0]).unwrap();
        let mc = invariant_moment_check(&fm, 2.0, 8.0, 0.01, 4000, 2).unwrap();
        let e = mc.estimate;
        assert!((e.mean - 0.5).abs() < 4.0 * e.stderr + 0.005, "{e:?}");
        assert!((mc.ratio() - 1.0).abs() < 0.1);
        let times = [0.25, 0.5, 1.0, 2.0];
        let est = transient_expectation(&fm, &[0.0], &|y| y[0] * y[0], &times, 0.005, 4000, 3).unwrap();
        for (e, t) in est.iter().zip(times) {
            let exact = 0.5 * (1.0 - (-2.0 * t).exp());
            assert!(
                (e.mean - exact).abs() < 4.0 * e.stderr + 0.005,
                "t={t}: {} vs {exact}",
                e.mean
            );
        }
    }

    #[test]
    fn constant_test_function_has_no_gap() {
        let fm = FrozenModel::new(cubic(), &[0.2]).unwrap();
        let c = mixing_decay_check(&fm, &[1.0], &|_| 3.0, 3.0, &[0.5, 1.0], 0.01, 8, 0).unwrap();
        assert!(c.gaps().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn table_interpolation_and_csv() {
        let xs: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let t = FbarTable::new(xs.clone(), vals, vec![0.0; 41]).unwrap();
        for x in [-1.95, -0.33, 0.0, 1.234, 2.0] {
            assert!((t.eval(x).unwrap() - f64::sin(x)).abs() < 1e-4, "{x}");
        }
        assert!(matches!(t.eval(2.5), Err(Error::OutOfTableRange { .. })));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = FbarTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(FbarTable::read_csv(&b"x,y\n"[..]).is_err());
    }

    #[test]
    fn zero_drift_and_noise_keep_start() {
        let m: Arc<dyn SlowFastModel> = Arc::new(
            OuSine::new(OuSineParams {
                c0: 0.0,
                sigma_a: 0.0,
                sigma_b: 0.0,
                ..Default::default()
            })
            .unwrap(),
        );
        let grid = Grid::new(1.0, 64).unwrap();
        let b = Arc::new(GridRoughPath::zero(1, grid, HoelderExponent::new(0.45).unwrap()));
        let sol = solve_averaged(
            AveragedDrift::ClosedForm(m),
            Arc::new(Constant {
                in_dim: 1,
                value: vec![0.0],
            }),
            &b,
            &[0.8],
        )
        .unwrap();
        assert!(sol.values().iter().all(|v| *v == 0.8));
    }

    #[test]
    fn table_escape_is_reported() {
        let t = FbarTable::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let grid = Grid::new(2.0, 32).unwrap();
        let b = Arc::new(GridRoughPath::zero(1, grid, HoelderExponent::new(0.45).unwrap()));
        let r = solve_averaged(
            AveragedDrift::Table(Arc::new(t)),
            Arc::new(Constant {
                in_dim: 1,
                value: vec![0.0],
            }),
            &b,
            &[0.5],
        );
        assert!(matches!(r, Err(Error::OutOfTableRange { .. })), "{r:?}");
    }
}
