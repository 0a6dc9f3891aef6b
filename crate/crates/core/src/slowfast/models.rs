//! Coefficient sets for slow-fast systems and the built-in registry.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{ClosureMap, SmoothMap};
use crate::error::{Error, Result};
use crate::lifts::stream_rng;

/// Constants of the standing assumptions on `(f, g, h, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionMeta {
    pub gamma1: f64,
    pub gamma2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub q: f64,
    pub r: f64,
    /// Constant `C` of the dissipativity bound.
    pub c_dissipative: f64,
    pub f_sup: f64,
    pub f_lip: f64,
    pub sigma_c2b: f64,
    pub sigma_c3b: f64,
}

impl AssumptionMeta {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidParameter(s.to_string()));
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0) {
            return bad("gamma1 and gamma2 must be positive");
        }
        if self.eta1 < 0.0 || self.eta2 < 0.0 || self.eta3 < 0.0 || self.r < 0.0 {
            return bad("eta1, eta2, eta3 and r must be nonnegative");
        }
        if self.q < 2.0 {
            return bad("q must be at least 2");
        }
        if self.q <= 2.0 * self.r {
            return bad("need q > 2r");
        }
        Ok(())
    }
}

/// Closed-form descriptors of the frozen dynamics at a fixed slow state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub fbar: Vec<f64>,
    /// Mean of the invariant law.
    pub mean: Vec<f64>,
    /// Per-coordinate variance of the invariant law.
    pub variance: Vec<f64>,
}

/// Coefficients `f(x, y)`, `g(x, y)`, `h(x, y)` and `sigma(x)` of
///
/// `dX = f dt + sigma(X) dB`, `dY = eps^{-1} g dt + eps^{-1/2} h dW`
///
/// with `x` in `R^m`, `y` in `R^n`, `B` over `R^d` and `W` over `R^e`.
/// Matrix outputs are row-major; `h` is `n x e`, its Jacobians are
/// `(n e) x m` and `(n e) x n`.
pub trait SlowFastModel: Send + Sync {
    fn name(&self) -> &str;
    fn slow_dim(&self) -> usize;
    fn fast_dim(&self) -> usize;
    fn slow_noise_dim(&self) -> usize;
    fn fast_noise_dim(&self) -> usize;
    fn f(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn h(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn h_jac_x(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn h_jac_y(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn sigma(&self) -> Arc<dyn SmoothMap>;
    fn meta(&self) -> AssumptionMeta;

    fn closed_form(&self, _x: &[f64]) -> Option<ClosedForm> {
        None
    }
}

fn cosine_sigma(a: f64, b: f64) -> Arc<dyn SmoothMap> {
    Arc::new(ClosureMap::scalar(
        move |x| a + b * x.cos(),
        move |x| -b * x.sin(),
        move |x| -b * x.cos(),
    ))
}

/// `f = sin y`, `g = -(y - c0 x)`, `h = h0 + hmod sin(x + y)`,
/// `sigma = a + b cos x`; all scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuSineParams {
    pub c0: f64,
    pub h0: f64,
    pub hmod: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub q: f64,
}

impl Default for OuSineParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            h0: 1.0,
            hmod: 0.0,
            sigma_a: 1.0,
            sigma_b: 0.5,
            q: 4.0,
        }
    }
}

pub struct OuSine {
    p: OuSineParams,
    sigma: Arc<dyn SmoothMap>,
}

impl OuSine {
    pub fn new(p: OuSineParams) -> Result<Self> {
        if p.hmod.abs() >= std::f64::consts::SQRT_2 {
            return Err(Error::InvalidParameter("|hmod| must stay below sqrt 2".into()));
        }
        Ok(Self {
            p,
            sigma: cosine_sigma(p.sigma_a, p.sigma_b),
        })
    }

    pub fn params(&self) -> OuSineParams {
        self.p
    }
}

impl SlowFastModel for OuSine {
    fn name(&self) -> &str {
        "ou_sine"
    }
    fn slow_dim(&self) -> usize {
        1
    }
    fn fast_dim(&self) -> usize {
        1
    }
    fn slow_noise_dim(&self) -> usize {
        1
    }
    fn fast_noise_dim(&self) -> usize {
        1
    }
    fn f(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = y[0].sin();
    }
    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = -(y[0] - self.p.c0 * x[0]);
    }
    fn h(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.p.h0 + self.p.hmod * (x[0] + y[0]).sin();
    }
    fn h_jac_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.p.hmod * (x[0] + y[0]).cos();
    }
    fn h_jac_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.p.hmod * (x[0] + y[0]).cos();
    }
    fn sigma(&self) -> Arc<dyn SmoothMap> {
        self.sigma.clone()
    }
    fn meta(&self) -> AssumptionMeta {
        let p = self.p;
        let hmax = p.h0.abs() + p.hmod.abs();
        let s0 = p.sigma_a.abs() + p.sigma_b.abs();
        AssumptionMeta {
            gamma1: 1.0,
            gamma2: 2.0 - p.hmod * p.hmod,
            eta1: 1.0,
            eta2: 0.0,
            eta3: 2.0,
            q: p.q,
            r: 0.0,
            c_dissipative: (p.c0 * p.c0).max((p.q - 1.0) * hmax * hmax),
            f_sup: 1.0,
            f_lip: 1.0,
            sigma_c2b: s0 + 2.0 * p.sigma_b.abs(),
            sigma_c3b: s0 + 3.0 * p.sigma_b.abs(),
        }
    }
    fn closed_form(&self, x: &[f64]) -> Option<ClosedForm> {
        if self.p.hmod != 0.0 {
            return None;
        }
        let mean = self.p.c0 * x[0];
        let var = 0.5 * self.p.h0 * self.p.h0;
        Some(ClosedForm {
            fbar: vec![(-0.5 * var).exp() * mean.sin()],
            mean: vec![mean],
            variance: vec![var],
        })
    }
}

/// `g = -lambda(x) y^3 - phi(x) y` with
/// `lambda(x) = lam0 (1 + sin^2 x / 2)`, `phi(x) = phi0 (1 + sin^2 x / 2)`,
/// `h = h0 + hy sin y`, `f = sin y`, `sigma = a + b cos x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubicParams {
    pub lam0: f64,
    pub phi0: f64,
    pub h0: f64,
    pub hy: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub q: f64,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self {
            lam0: 1.0,
            phi0: 1.0,
            h0: 1.0,
            hy: 0.5,
            sigma_a: 1.0,
            sigma_b: 0.5,
            q: 8.0,
        }
    }
}

pub struct Cubic {
    p: CubicParams,
    sigma: Arc<dyn SmoothMap>,
}

impl Cubic {
    pub fn new(p: CubicParams) -> Result<Self> {
        if !(p.lam0 > 0.0 && p.phi0 > 0.0) {
            return Err(Error::InvalidParameter("lam0 and phi0 must be positive".into()));
        }
        if p.hy * p.hy >= 2.0 * p.phi0 {
            return Err(Error::InvalidParameter("need hy^2 < 2 phi0 for monotonicity".into()));
        }
        Ok(Self {
            p,
            sigma: cosine_sigma(p.sigma_a, p.sigma_b),
        })
    }

    fn weight(x: f64) -> f64 {
        let s = x.sin();
        1.0 + 0.5 * s * s
    }
}

impl SlowFastModel for Cubic {
    fn name(&self) -> &str {
        "cubic"
    }
    fn slow_dim(&self) -> usize {
        1
    }
    fn fast_dim(&self) -> usize {
        1
    }
    fn slow_noise_dim(&self) -> usize {
        1
    }
    fn fast_noise_dim(&self) -> usize {
        1
    }
    fn f(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = y[0].sin();
    }
    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let w = Self::weight(x[0]);
        let y = y[0];
        out[0] = -self.p.lam0 * w * y * y * y - self.p.phi0 * w * y;
    }
    fn h(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.p.h0 + self.p.hy * y[0].sin();
    }
    fn h_jac_x(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn h_jac_y(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.p.hy * y[0].cos();
    }
    fn sigma(&self) -> Arc<dyn SmoothMap> {
        self.sigma.clone()
    }
    fn meta(&self) -> AssumptionMeta {
        let p = self.p;
        let hmax = p.h0.abs() + p.hy.abs();
        let s0 = p.sigma_a.abs() + p.sigma_b.abs();
        AssumptionMeta {
            gamma1: 2.0 * p.phi0,
            gamma2: 2.0 * p.phi0 - p.hy * p.hy,
            eta1: 3.0,
            eta2: 0.0,
            eta3: 0.0,
            q: p.q,
            r: 3.0,
            c_dissipative: (p.q - 1.0) * hmax * hmax,
            f_sup: 1.0,
            f_lip: 1.0,
            sigma_c2b: s0 + 2.0 * p.sigma_b.abs(),
            sigma_c3b: s0 + 3.0 * p.sigma_b.abs(),
        }
    }
}

/// Registry entry: a model name with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    OuSine(OuSineParams),
    Cubic(CubicParams),
}

impl ModelSpec {
    pub const NAMES: [&'static str; 2] = ["ou_sine", "cubic"];

    /// Default parameters for a registered model name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ou_sine" => Ok(Self::OuSine(OuSineParams::default())),
            "cubic" => Ok(Self::Cubic(CubicParams::default())),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn SlowFastModel>> {
        Ok(match *self {
            Self::OuSine(p) => Arc::new(OuSine::new(p)?),
            Self::Cubic(p) => Arc::new(Cubic::new(p)?),
        })
    }
}

/// Worst violations found by [`spot_check_assumptions`]; nonpositive
/// values mean the inequality held at every sampled point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    pub dissipativity_margin: f64,
    pub monotonicity_margin: f64,
    pub points: usize,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.dissipativity_margin <= 1e-12 && self.monotonicity_margin <= 1e-12
    }
}

/// Evaluates the dissipativity and monotonicity inequalities on a random
/// cloud of `(x, y, y')` with coordinates uniform in `[-radius, radius]`.
pub fn spot_check_assumptions(
    model: &dyn SlowFastModel,
    seed: u64,
    points: usize,
    radius: f64,
) -> Result<AssumptionReport> {
    let meta = model.meta();
    meta.validate()?;
    let (m, n, e) = (model.slow_dim(), model.fast_dim(), model.fast_noise_dim());
    let mut rng = stream_rng(seed, 0);
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-radius..=radius)).collect() };
    let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut g1 = vec![0.0; n];
    let mut g2 = vec![0.0; n];
    let mut h1 = vec![0.0; n * e];
    let mut h2 = vec![0.0; n * e];
    let mut dis = f64::NEG_INFINITY;
    let mut mono = f64::NEG_INFINITY;
    for _ in 0..points {
        let x = draw(m);
        let y1 = draw(n);
        let y2 = draw(n);
        model.g(&x, &y1, &mut g1);
        model.h(&x, &y1, &mut h1);
        let xn = norm2(&x).sqrt();
        let lhs = 2.0 * dot(&y1, &g1) + (meta.q - 1.0) * norm2(&h1);
        let rhs = -meta.gamma1 * norm2(&y1) + meta.c_dissipative * (xn.powf(meta.eta3) + 1.0);
        dis = dis.max(lhs - rhs);

        model.g(&x, &y2, &mut g2);
        model.h(&x, &y2, &mut h2);
        let dy: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
        let dh: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a - b).collect();
        let lhs = 2.0 * dot(&dy, &dg) + norm2(&dh);
        mono = mono.max(lhs + meta.gamma2 * norm2(&dy));
    }
    Ok(AssumptionReport {
        dissipativity_margin: dis,
        monotonicity_margin: mono,
        points,
    })
}
