//! Small statistics helpers for Monte Carlo estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        let mean = mean(xs);
        let stderr = if n > 1 { (variance(xs) / n as f64).sqrt() } else { 0.0 };
        Estimate { mean, stderr, n }
    }

    /// From running sums `sum x` and `sum x^2`.
    pub fn from_sums(sum: f64, sum_sq: f64, n: usize) -> Estimate {
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let nf = n as f64;
        let mean = sum / nf;
        let stderr = if n > 1 {
            let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, n }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean of a correlated series from `batches`
/// non-overlapping batch means.
pub fn batch_means(xs: &[f64], batches: usize) -> Result<Estimate> {
    if batches < 2 || xs.len() < batches {
        return Err(Error::InvalidParameter(format!(
            "batch means needs at least 2 batches and one sample per batch ({} samples, {batches} batches)",
            xs.len()
        )));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    let e = Estimate::from_samples(&means);
    Ok(Estimate {
        mean: mean(&xs[..size * batches]),
        stderr: e.stderr,
        n: batches,
    })
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateRegression(format!(
            "{} points",
            xs.len().min(ys.len())
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateRegression("non-finite data".into()));
    }
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateRegression("abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if xs.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateRegression("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Envelope constant fitted on one sample and checked on another:
/// `C = max(values / bracket)` on `fit`, then every holdout ratio must stay
/// below `slack * C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub constant: f64,
    pub worst_holdout_ratio: f64,
    pub slack: f64,
}

impl Envelope {
    pub fn fit(fit: &[(f64, f64)], holdout: &[(f64, f64)], slack: f64) -> Result<Envelope> {
        let ratio = |(v, b): &(f64, f64)| -> f64 {
            if *b > 0.0 {
                v / b
            } else if *v <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        if fit.is_empty() {
            return Err(Error::InvalidParameter("empty fitting sample".into()));
        }
        let constant = fit.iter().map(ratio).fold(0.0, f64::max);
        let worst_holdout_ratio = holdout.iter().map(ratio).fold(0.0, f64::max);
        Ok(Envelope {
            constant,
            worst_holdout_ratio,
            slack,
        })
    }

    pub fn holds(&self) -> bool {
        self.worst_holdout_ratio <= self.slack * self.constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimates() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let s = Estimate::from_sums(10.0, 30.0, 4);
        assert!((s.mean - e.mean).abs() < 1e-15 && (s.stderr - e.stderr).abs() < 1e-12);
    }

    #[test]
    fn line_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        let ll = log_log_slope(&[1.0, 10.0, 100.0], &[2.0, 20.0, 200.0]).unwrap();
        assert!((ll.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_constant_series() {
        let e = batch_means(&[2.0; 100], 10).unwrap();
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert!(batch_means(&[1.0], 2).is_err());
    }

    #[test]
    fn envelope() {
        let e = Envelope::fit(&[(1.0, 1.0), (3.0, 2.0)], &[(2.0, 1.0)], 1.5).unwrap();
        assert_eq!(e.constant, 1.5);
        assert!(e.holds());
        let bad = Envelope::fit(&[(1.0, 1.0)], &[(2.0, 1.0)], 1.5).unwrap();
        assert!(!bad.holds());
    }
}
