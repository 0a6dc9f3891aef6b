use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_k = k T / N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    horizon: f64,
    n_steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { horizon, n_steps })
    }

    /// Builds a grid from explicit times, rejecting anything that is not
    /// uniform with `t_0 = 0`.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::EmptyGrid);
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidParameter("grid must start at 0".into()));
        }
        let n = times.len() - 1;
        let grid = Grid::new(times[n], n)?;
        let tol = 1e-9 * grid.horizon.max(1.0);
        for (k, t) in times.iter().enumerate() {
            if (t - grid.time(k)).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "non-uniform grid: t_{k} = {t}, expected {}",
                    grid.time(k)
                )));
            }
        }
        Ok(grid)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.n_steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Grid with `factor` times fewer steps on the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidParameter(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps
            )));
        }
        Grid::new(self.horizon, self.n_steps / factor)
    }

    /// Grid with `factor` times more steps on the same horizon.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("refinement factor must be positive".into()));
        }
        Grid::new(self.horizon, self.n_steps * factor)
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        if k > self.n_steps {
            Err(Error::IndexOutOfRange {
                index: k,
                len: self.n_points(),
            })
        } else {
            Ok(())
        }
    }
}

/// A Hoelder exponent in `(1/3, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HoelderExponent(f64);

impl HoelderExponent {
    pub fn new(value: f64) -> Result<Self> {
        if value > 1.0 / 3.0 && value <= 0.5 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidExponent(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for HoelderExponent {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        HoelderExponent::new(v)
    }
}

impl From<HoelderExponent> for f64 {
    fn from(h: HoelderExponent) -> f64 {
        h.0
    }
}

/// The ordered exponents `beta < alpha < alpha0` used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentTriple {
    pub beta: HoelderExponent,
    pub alpha: HoelderExponent,
    pub alpha0: HoelderExponent,
}

impl ExponentTriple {
    pub fn new(beta: f64, alpha: f64, alpha0: f64) -> Result<Self> {
        let triple = Self {
            beta: HoelderExponent::new(beta)?,
            alpha: HoelderExponent::new(alpha)?,
            alpha0: HoelderExponent::new(alpha0)?,
        };
        if !(beta < alpha && alpha < alpha0) {
            return Err(Error::InvalidParameter(format!(
                "exponents must satisfy beta < alpha < alpha0, got {beta}, {alpha}, {alpha0}"
            )));
        }
        Ok(triple)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_times() {
        let g = Grid::new(2.0, 4).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.step(), 0.5);
        assert_eq!(g.time(4), 2.0);
    }

    #[test]
    fn rejects_non_uniform() {
        assert!(Grid::from_times(&[0.0, 0.1, 0.3]).is_err());
        assert!(Grid::from_times(&[0.1, 0.2, 0.3]).is_err());
        assert!(Grid::from_times(&[0.0]).is_err());
        let g = Grid::from_times(&[0.0, 0.25, 0.5]).unwrap();
        assert_eq!(g.n_steps(), 2);
    }

    #[test]
    fn exponent_bounds() {
        assert!(HoelderExponent::new(1.0 / 3.0).is_err());
        assert!(HoelderExponent::new(0.5).is_ok());
        assert!(HoelderExponent::new(0.51).is_err());
        assert!(ExponentTriple::new(0.4, 0.45, 0.5).is_ok());
        assert!(ExponentTriple::new(0.45, 0.45, 0.5).is_err());
    }
}
