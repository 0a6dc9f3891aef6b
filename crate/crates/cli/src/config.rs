//! Run configuration. One TOML file with a section per subcommand; every key
//! has a default, so an empty file (or none) is a valid configuration.

use std::path::Path;

use rough_core::experiment::StudySpec;
use rough_core::frozen::AveragingMethod;
use rough_core::lifts::{NoiseKind, NoiseSpec};
use rough_core::slowfast::{MicroStepPolicy, ModelSpec, OuSineParams, SchemeOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed. Every random stream of a run is derived from it.
    pub seed: u64,
    pub lift: LiftSection,
    pub solve: SolveSection,
    pub slowfast: SlowFastSection,
    pub average: AverageSection,
    pub study: StudySpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            lift: LiftSection::default(),
            solve: SolveSection::default(),
            slowfast: SlowFastSection::default(),
            average: AverageSection::default(),
            study: default_study(),
        }
    }
}

fn default_study() -> StudySpec {
    let model = ModelSpec::OuSine(OuSineParams {
        sigma_a: 1.0,
        sigma_b: 0.5,
        ..Default::default()
    });
    StudySpec::new(model, vec![0.5, 0.1, 0.02], 0.4, 64)
}

/// Driver of `lift` and `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftSection {
    pub kind: NoiseKind,
    pub dim: usize,
    pub hurst: Option<f64>,
    pub alpha: Option<f64>,
    /// Grid cells.
    pub n: usize,
    pub horizon: f64,
    pub substeps: usize,
}

impl Default for LiftSection {
    fn default() -> Self {
        Self {
            kind: NoiseKind::BrownianIto,
            dim: 1,
            hurst: None,
            alpha: None,
            n: 1024,
            horizon: 1.0,
            substeps: 8,
        }
    }
}

impl LiftSection {
    pub fn noise_spec(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            kind: self.kind,
            dim: self.dim,
            hurst: self.hurst,
            substeps: self.substeps,
            seed,
            stream_id: 0,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// `sigma(y) = A y`, `A` of shape `(m d) x m`.
    Linear,
    /// `sigma(y) = A`, `A` of shape `m x d`.
    Constant,
}

/// `dY = sigma(Y) dX + b Y dt` driven by the `[lift]` path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub sigma: SigmaKind,
    /// Row-major coefficient of `sigma`.
    pub matrix: Vec<f64>,
    /// Row-major `m x m` drift matrix `b`; empty means no drift.
    pub drift: Vec<f64>,
    pub y0: Vec<f64>,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            sigma: SigmaKind::Linear,
            matrix: vec![1.0],
            drift: Vec::new(),
            y0: vec![1.0],
        }
    }
}

/// One slow-fast trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlowFastSection {
    pub model: ModelSpec,
    pub epsilon: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub slow_noise: NoiseKind,
    pub hurst: Option<f64>,
    pub substeps: usize,
    /// Exponent of the reported slow-path seminorm.
    pub beta: f64,
    pub policy: MicroStepPolicy,
    pub scheme: SchemeOptions,
}

impl Default for SlowFastSection {
    fn default() -> Self {
        Self {
            model: ModelSpec::OuSine(OuSineParams::default()),
            epsilon: 0.1,
            horizon: 1.0,
            x0: Vec::new(),
            y0: Vec::new(),
            slow_noise: NoiseKind::BrownianIto,
            hurst: None,
            substeps: 8,
            beta: 0.4,
            policy: MicroStepPolicy::default(),
            scheme: SchemeOptions::default(),
        }
    }
}

/// f-bar table on a uniform grid of the slow variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AverageSection {
    pub model: ModelSpec,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Absent: the closed form when the model has one, endpoint Monte Carlo
    /// otherwise.
    pub method: Option<AveragingMethod>,
}

impl Default for AverageSection {
    fn default() -> Self {
        Self {
            model: ModelSpec::OuSine(OuSineParams::default()),
            lo: -3.0,
            hi: 3.0,
            points: 61,
            method: None,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back: Config = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let empty: Config = toml::from_str("").unwrap();
        assert_eq!(empty, c);
    }

    #[test]
    fn partial_sections_and_unknown_keys() {
        let c: Config = toml::from_str("seed = 9\n[lift]\nkind = \"fbm\"\nhurst = 0.4\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.lift.kind, NoiseKind::Fbm);
        assert_eq!(c.lift.n, 1024);
        assert!(toml::from_str::<Config>("[lift]\nbogus = 1\n").is_err());
    }

    #[test]
    fn model_by_name() {
        let c: Config = toml::from_str("[average.model]\nname = \"cubic\"\nlam0 = 2.0\n").unwrap();
        match c.average.model {
            ModelSpec::Cubic(p) => assert_eq!(p.lam0, 2.0),
            _ => panic!("expected the cubic model"),
        }
    }
}
