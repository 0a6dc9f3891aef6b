//! Random rough-path lifts: Ito and Stratonovich Brownian motion,
//! fractional Brownian motion, and the mixed lift of a slow driver with a
//! Brownian fast driver.
//!
//! Every lift is built on a micro grid refining the target grid by
//! `substeps`, and level 2 is the sum of sub-cell contributions.

mod fgn;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{Grid, GridRoughPath, HoelderExponent};
use crate::error::{Error, Result};
use crate::linalg;

pub use fgn::{fgn_autocovariance, FgnMethod, FgnSampler};

pub const DEFAULT_SUBSTEPS: usize = 8;

/// Deterministic generator for the pair `(seed, stream_id)`. Draw `k` of a
/// stream is the `k`-th output of the ChaCha8 block counter for that key.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    BrownianIto,
    BrownianStrat,
    Fbm,
    DeterministicSmooth,
}

fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
    /// Hoelder exponent attached to the lift; a default below the sample
    /// regularity is chosen when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl NoiseSpec {
    fn base(kind: NoiseKind, dim: usize, seed: u64, stream_id: u64) -> Self {
        Self {
            kind,
            dim,
            hurst: None,
            substeps: DEFAULT_SUBSTEPS,
            seed,
            stream_id,
            alpha: None,
        }
    }

    pub fn brownian_ito(dim: usize, seed: u64, stream_id: u64) -> Self {
        Self::base(NoiseKind::BrownianIto, dim, seed, stream_id)
    }

    pub fn brownian_strat(dim: usize, seed: u64, stream_id: u64) -> Self {
        Self::base(NoiseKind::BrownianStrat, dim, seed, stream_id)
    }

    pub fn fbm(dim: usize, hurst: f64, seed: u64, stream_id: u64) -> Self {
        Self {
            hurst: Some(hurst),
            ..Self::base(NoiseKind::Fbm, dim, seed, stream_id)
        }
    }

    /// Coordinates `x_c(t) = sin(2 pi (c + 1) t)`.
    pub fn smooth(dim: usize) -> Self {
        Self::base(NoiseKind::DeterministicSmooth, dim, 0, 0)
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_seed(mut self, seed: u64, stream_id: u64) -> Self {
        self.seed = seed;
        self.stream_id = stream_id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("noise dimension must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        match (self.kind, self.hurst) {
            (NoiseKind::Fbm, Some(h)) if h > 1.0 / 3.0 && h <= 0.5 => {}
            (NoiseKind::Fbm, Some(h)) => return Err(Error::InvalidExponent(h)),
            (NoiseKind::Fbm, None) => return Err(Error::InvalidParameter("fbm noise needs a Hurst index".into())),
            (_, Some(_)) => {
                return Err(Error::InvalidParameter("Hurst index is only meaningful for fbm".into()));
            }
            (_, None) => {}
        }
        self.alpha()?;
        Ok(())
    }

    /// The exponent `alpha` carried by the lift.
    pub fn alpha(&self) -> Result<HoelderExponent> {
        if let Some(a) = self.alpha {
            return HoelderExponent::new(a);
        }
        let regularity = match self.kind {
            NoiseKind::Fbm => self.hurst.unwrap_or(0.5),
            _ => 0.5,
        };
        HoelderExponent::new((regularity - 0.05).max(0.5 * (regularity + 1.0 / 3.0)))
    }
}

/// Increments of a driver on the micro grid, row-major `(n_micro, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroIncrements {
    dim: usize,
    substeps: usize,
    dt: f64,
    data: Vec<f64>,
}

impl MicroIncrements {
    pub fn new(dim: usize, substeps: usize, dt: f64, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || substeps == 0 || !data.len().is_multiple_of(dim * substeps) {
            return Err(Error::DimensionMismatch {
                what: "micro increments",
                expected: dim * substeps,
                got: data.len(),
            });
        }
        Ok(Self {
            dim,
            substeps,
            dt,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Micro step length.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_micro(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.n_micro() / self.substeps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn increment(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    /// The same increments grouped `substeps` to a cell.
    pub fn regroup(&self, substeps: usize) -> Result<Self> {
        if substeps == 0 || !self.n_micro().is_multiple_of(substeps) {
            return Err(Error::GridMismatch(format!(
                "{} micro steps do not split into cells of {substeps}",
                self.n_micro()
            )));
        }
        Ok(Self {
            substeps,
            ..self.clone()
        })
    }

    /// Micro increments belonging to cell `k`.
    pub fn cell(&self, k: usize) -> &[f64] {
        let w = self.dim * self.substeps;
        &self.data[k * w..(k + 1) * w]
    }

    /// Cumulative values on the micro grid, starting from zero.
    pub fn path(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut acc = vec![0.0; self.dim];
        for inc in self.data.chunks(self.dim) {
            linalg::add_assign(&mut acc, inc);
            out.extend_from_slice(&acc);
        }
        out
    }
}

/// A sampled lift together with the micro increments it was built from.
#[derive(Debug, Clone)]
pub struct Lift {
    pub rp: Arc<GridRoughPath>,
    pub micro: MicroIncrements,
    pub spec: NoiseSpec,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rule {
    LeftPoint,
    Geometric,
}

/// Aggregates micro increments into grid level 1 and level-2 cells.
fn aggregate(micro: &MicroIncrements, rule: Rule) -> (Vec<f64>, Vec<f64>) {
    let d = micro.dim;
    let n = micro.n_cells();
    let mut level1 = Vec::with_capacity((n + 1) * d);
    let mut cells = vec![0.0; n * d * d];
    let mut base = vec![0.0; d];
    level1.extend_from_slice(&base);
    let mut running = vec![0.0; d];
    for k in 0..n {
        running.iter_mut().for_each(|v| *v = 0.0);
        let cell = &mut cells[k * d * d..(k + 1) * d * d];
        for dw in micro.cell(k).chunks(d) {
            linalg::outer_add(&running, dw, cell);
            if rule == Rule::Geometric {
                for a in 0..d {
                    for b in 0..d {
                        cell[a * d + b] += 0.5 * dw[a] * dw[b];
                    }
                }
            }
            linalg::add_assign(&mut running, dw);
        }
        linalg::add_assign(&mut base, &running);
        level1.extend_from_slice(&base);
    }
    (level1, cells)
}

fn check_kind(spec: &NoiseSpec, allowed: &[NoiseKind]) -> Result<()> {
    spec.validate()?;
    if !allowed.contains(&spec.kind) {
        return Err(Error::InvalidParameter(format!(
            "unexpected noise kind {:?}",
            spec.kind
        )));
    }
    Ok(())
}

fn gaussian_micro(spec: &NoiseSpec, grid: &Grid) -> Result<MicroIncrements> {
    let n_micro = grid.n_steps() * spec.substeps;
    let dt = grid.step() / spec.substeps as f64;
    let sd = dt.sqrt();
    let mut rng = stream_rng(spec.seed, spec.stream_id);
    let data: Vec<f64> = (0..n_micro * spec.dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    MicroIncrements::new(spec.dim, spec.substeps, dt, data)
}

/// Ito Brownian lift. Off-diagonal level-2 entries are left-point sums over
/// the micro grid; diagonal entries use the exact value `((dW)^2 - h) / 2`.
/// A `brownian_strat` spec is accepted and returns the Stratonovich lift.
pub fn brownian_ito_lift(spec: &NoiseSpec, grid: &Grid) -> Result<Lift> {
    check_kind(spec, &[NoiseKind::BrownianIto, NoiseKind::BrownianStrat])?;
    let micro = gaussian_micro(spec, grid)?;
    lift_from_micro(spec, grid, micro)
}

/// Rebuilds the lift of `spec.kind` on `grid` from given micro increments,
/// e.g. a fine path regrouped with [`MicroIncrements::regroup`]. Brownian
/// kinds use the Ito (or shifted Stratonovich) rule, the others the
/// geometric one.
pub fn lift_from_micro(spec: &NoiseSpec, grid: &Grid, micro: MicroIncrements) -> Result<Lift> {
    spec.validate()?;
    if micro.dim() != spec.dim || micro.n_cells() != grid.n_steps() || !micro.n_micro().is_multiple_of(micro.substeps())
    {
        return Err(Error::GridMismatch("micro increments do not cover the grid".into()));
    }
    let d = spec.dim;
    let brownian = matches!(spec.kind, NoiseKind::BrownianIto | NoiseKind::BrownianStrat);
    let rule = if brownian { Rule::LeftPoint } else { Rule::Geometric };
    let (level1, mut cells) = aggregate(&micro, rule);
    if brownian {
        let h = grid.step();
        for k in 0..grid.n_steps() {
            for a in 0..d {
                let dw = level1[(k + 1) * d + a] - level1[k * d + a];
                cells[k * d * d + a * d + a] = 0.5 * (dw * dw - h);
            }
        }
    }
    let mut rp = GridRoughPath::new(d, *grid, level1, cells, spec.alpha()?)?;
    if spec.kind == NoiseKind::BrownianStrat {
        rp = stratonovich_from_ito(&rp, 0.5);
    }
    let spec = NoiseSpec {
        substeps: micro.substeps(),
        ..spec.clone()
    };
    Ok(Lift {
        rp: Arc::new(rp),
        micro,
        spec,
    })
}

/// Adds `lambda * Id * (t - s)` to every level-2 cell.
pub fn stratonovich_from_ito(rp: &GridRoughPath, lambda: f64) -> GridRoughPath {
    let all: Vec<usize> = (0..rp.dim()).collect();
    rp.shift_diagonal(&all, lambda)
}

/// Adds `lambda * (t - s)` to the diagonal entries `coords` of every cell.
pub fn shift_block_diagonal(rp: &GridRoughPath, coords: &[usize], lambda: f64) -> Result<GridRoughPath> {
    if let Some(&c) = coords.iter().find(|&&c| c >= rp.dim()) {
        return Err(Error::IndexOutOfRange {
            index: c,
            len: rp.dim(),
        });
    }
    Ok(rp.shift_diagonal(coords, lambda))
}

/// Fractional Brownian lift with the geometric (piecewise-linear) level 2.
pub fn fbm_lift(spec: &NoiseSpec, grid: &Grid) -> Result<Lift> {
    fbm_lift_with(spec, grid, FgnMethod::Auto)
}

pub fn fbm_lift_with(spec: &NoiseSpec, grid: &Grid, method: FgnMethod) -> Result<Lift> {
    check_kind(spec, &[NoiseKind::Fbm])?;
    let hurst = spec.hurst.expect("validated");
    let n_micro = grid.n_steps() * spec.substeps;
    let dt = grid.step() / spec.substeps as f64;
    let sampler = FgnSampler::new(hurst, n_micro, dt, method)?;
    let mut rng = stream_rng(spec.seed, spec.stream_id);
    let d = spec.dim;
    let mut data = vec![0.0; n_micro * d];
    for c in 0..d {
        for (j, v) in sampler.sample(&mut rng).into_iter().enumerate() {
            data[j * d + c] = v;
        }
    }
    let micro = MicroIncrements::new(d, spec.substeps, dt, data)?;
    let (level1, cells) = aggregate(&micro, Rule::Geometric);
    let rp = GridRoughPath::new(d, *grid, level1, cells, spec.alpha()?)?;
    Ok(Lift {
        rp: Arc::new(rp),
        micro,
        spec: spec.clone(),
    })
}

/// Geometric lift of the deterministic path `x_c(t) = sin(2 pi (c+1) t)`.
pub fn smooth_lift(spec: &NoiseSpec, grid: &Grid) -> Result<Lift> {
    check_kind(spec, &[NoiseKind::DeterministicSmooth])?;
    let d = spec.dim;
    let n_micro = grid.n_steps() * spec.substeps;
    let dt = grid.step() / spec.substeps as f64;
    let x = |j: usize, c: usize| (2.0 * std::f64::consts::PI * (c + 1) as f64 * j as f64 * dt).sin();
    let mut data = Vec::with_capacity(n_micro * d);
    for j in 0..n_micro {
        for c in 0..d {
            data.push(x(j + 1, c) - x(j, c));
        }
    }
    let micro = MicroIncrements::new(d, spec.substeps, dt, data)?;
    let (level1, cells) = aggregate(&micro, Rule::Geometric);
    let rp = GridRoughPath::new(d, *grid, level1, cells, spec.alpha()?)?;
    Ok(Lift {
        rp: Arc::new(rp),
        micro,
        spec: spec.clone(),
    })
}

/// Samples the lift described by `spec`.
pub fn sample_lift(spec: &NoiseSpec, grid: &Grid) -> Result<Lift> {
    match spec.kind {
        NoiseKind::BrownianIto | NoiseKind::BrownianStrat => brownian_ito_lift(spec, grid),
        NoiseKind::Fbm => fbm_lift(spec, grid),
        NoiseKind::DeterministicSmooth => smooth_lift(spec, grid),
    }
}

/// The joint lift `Xi` over `R^{d+e}` of a slow driver `B` and an Ito
/// Brownian motion `w`. Level 2 has blocks
/// `[[B^2, I[B,W]], [I[W,B], W^2]]` with the left-point cross integral
/// `I[B,W] = sum_j B^1_{t_k,s_j} (x) dw_j` and
/// `I[W,B] = W^1 (x) B^1 - I[B,W]^T`.
pub fn mixed_lift(b: &Lift, w: &Lift) -> Result<GridRoughPath> {
    if w.spec.kind != NoiseKind::BrownianIto {
        return Err(Error::InvalidParameter(
            "the fast driver must be an Ito Brownian lift".into(),
        ));
    }
    if b.spec.stream_id == w.spec.stream_id {
        return Err(Error::StreamCollision(b.spec.stream_id));
    }
    if b.rp.grid() != w.rp.grid() || b.micro.substeps() != w.micro.substeps() || b.micro.n_micro() != w.micro.n_micro()
    {
        return Err(Error::GridMismatch("slow and fast micro grids are not aligned".into()));
    }
    let d = b.rp.dim();
    let e = w.rp.dim();
    let n = b.rp.n_steps();
    let de = d + e;

    let mut level1 = Vec::with_capacity((n + 1) * de);
    for k in 0..=n {
        level1.extend_from_slice(b.rp.level1_at(k));
        level1.extend_from_slice(w.rp.level1_at(k));
    }

    let mut cells = vec![0.0; n * de * de];
    let mut running = vec![0.0; d];
    let mut cross = vec![0.0; d * e];
    for k in 0..n {
        running.iter_mut().for_each(|v| *v = 0.0);
        cross.iter_mut().for_each(|v| *v = 0.0);
        let db_cell = b.micro.cell(k);
        let dw_cell = w.micro.cell(k);
        for (db, dw) in db_cell.chunks(d).zip(dw_cell.chunks(e)) {
            linalg::outer_add(&running, dw, &mut cross);
            linalg::add_assign(&mut running, db);
        }
        let b1 = b.rp.increment(k, k + 1);
        let w1 = w.rp.increment(k, k + 1);
        let bc = b.rp.cell(k);
        let wc = w.rp.cell(k);
        let out = &mut cells[k * de * de..(k + 1) * de * de];
        for a in 0..d {
            for c in 0..d {
                out[a * de + c] = bc[a * d + c];
            }
            for c in 0..e {
                out[a * de + d + c] = cross[a * e + c];
            }
        }
        for a in 0..e {
            for c in 0..d {
                out[(d + a) * de + c] = w1[a] * b1[c] - cross[c * e + a];
            }
            for c in 0..e {
                out[(d + a) * de + d + c] = wc[a * e + c];
            }
        }
    }
    let alpha = if b.rp.alpha().value() <= w.rp.alpha().value() {
        b.rp.alpha()
    } else {
        w.rp.alpha()
    };
    GridRoughPath::new(de, *b.rp.grid(), level1, cells, alpha)
}
