//! Exact-in-law sampling of fractional Gaussian noise.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg;

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let two_h = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FgnMethod {
    /// Circulant embedding, falling back to Cholesky if the embedding has a
    /// negative eigenvalue.
    #[default]
    Auto,
    Circulant,
    Cholesky,
}

/// Eigenvalues of the minimal circulant embedding of the first `n` lags,
/// `m = 2n`.
fn circulant_eigenvalues(hurst: f64, n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
    for k in 0..=n {
        row.push(Complex::new(fgn_autocovariance(hurst, k), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex::new(fgn_autocovariance(hurst, k), 0.0));
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

fn sample_circulant<R: Rng>(eig: &[f64], n: usize, rng: &mut R) -> Vec<f64> {
    let m = eig.len();
    let mut buf: Vec<Complex<f64>> = eig
        .iter()
        .map(|&l| {
            let s = (l.max(0.0) / m as f64).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(s * re, s * im)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    buf.truncate(n);
    buf.into_iter().map(|c| c.re).collect()
}

fn cholesky_factor(hurst: f64, n: usize) -> Result<Vec<f64>> {
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cov[i * n + j] = fgn_autocovariance(hurst, i.abs_diff(j));
        }
    }
    linalg::cholesky(&cov, n).ok_or(Error::NotPositiveDefinite)
}

fn sample_cholesky<R: Rng>(l: &[f64], n: usize, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = vec![0.0; n];
    linalg::gemv_add(l, n, n, &z, &mut out);
    out
}

/// A reusable sampler of `n` consecutive fGn increments with step `dt`.
#[derive(Debug, Clone)]
pub struct FgnSampler {
    n: usize,
    scale: f64,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Circulant(Vec<f64>),
    Cholesky(Vec<f64>),
}

impl FgnSampler {
    pub fn new(hurst: f64, n: usize, dt: f64, method: FgnMethod) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidParameter(format!("Hurst index {hurst} outside (0, 1)")));
        }
        if n == 0 {
            return Err(Error::EmptyGrid);
        }
        let scale = dt.powf(hurst);
        let inner = match method {
            FgnMethod::Cholesky => Inner::Cholesky(cholesky_factor(hurst, n)?),
            FgnMethod::Circulant | FgnMethod::Auto => {
                let eig = circulant_eigenvalues(hurst, n);
                let top = eig.iter().cloned().fold(0.0, f64::max);
                let low = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                if low >= -1e-10 * top {
                    Inner::Circulant(eig)
                } else if method == FgnMethod::Auto {
                    log::warn!("circulant embedding not positive (min eigenvalue {low:e}); using Cholesky for n = {n}");
                    Inner::Cholesky(cholesky_factor(hurst, n)?)
                } else {
                    return Err(Error::EmbeddingFailed(low));
                }
            }
        };
        Ok(Self { n, scale, inner })
    }

    pub fn uses_circulant(&self) -> bool {
        matches!(self.inner, Inner::Circulant(_))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = match &self.inner {
            Inner::Circulant(eig) => sample_circulant(eig, self.n, rng),
            Inner::Cholesky(l) => sample_cholesky(l, self.n, rng),
        };
        v.iter_mut().for_each(|x| *x *= self.scale);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn autocovariance_of_brownian_noise_is_white() {
        assert_eq!(fgn_autocovariance(0.5, 0), 1.0);
        assert!(fgn_autocovariance(0.5, 3).abs() < 1e-15);
        assert!(fgn_autocovariance(0.4, 1) < 0.0);
    }

    #[test]
    fn embedding_is_nonnegative_for_rough_hurst() {
        for &h in &[0.35, 0.4, 0.45, 0.5] {
            let eig = circulant_eigenvalues(h, 512);
            assert!(eig.iter().all(|&l| l > -1e-12), "H = {h}");
        }
    }

    #[test]
    fn empirical_covariance_matches_both_methods() {
        let n = 6;
        let h = 0.4;
        let reps = 20000;
        for method in [FgnMethod::Circulant, FgnMethod::Cholesky] {
            let s = FgnSampler::new(h, n, 1.0, method).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut c0 = 0.0;
            let mut c1 = 0.0;
            for _ in 0..reps {
                let x = s.sample(&mut rng);
                c0 += x[2] * x[2];
                c1 += x[2] * x[3];
            }
            c0 /= reps as f64;
            c1 /= reps as f64;
            assert!((c0 - 1.0).abs() < 0.05, "{method:?} var {c0}");
            assert!((c1 - fgn_autocovariance(h, 1)).abs() < 0.04, "{method:?} lag1 {c1}");
        }
    }
}
