//! Dense row-major helpers on flat `f64` slices.
//!
//! Everything in this crate lives in small Euclidean spaces, so vectors are
//! plain slices and matrices are flat row-major slices with explicit shapes.
//! Matrix norms are Hilbert-Schmidt (Frobenius).

/// Euclidean / Hilbert-Schmidt norm of a flat slice.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `out += a * x` where `a` is `rows x cols`.
pub fn gemv_add(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &a[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

/// `out = a * b` with `a: n x k`, `b: k x m`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..n {
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == 0.0 {
                continue;
            }
            let brow = &b[l * m..(l + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += a_il * bv;
            }
        }
    }
}

/// `out += u (x) v` (row-major `u.len() x v.len()`).
pub fn outer_add(u: &[f64], v: &[f64], out: &mut [f64]) {
    let m = v.len();
    debug_assert_eq!(out.len(), u.len() * m);
    for (i, ui) in u.iter().enumerate() {
        let row = &mut out[i * m..(i + 1) * m];
        for (o, vj) in row.iter_mut().zip(v) {
            *o += ui * vj;
        }
    }
}

pub fn outer(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len() * v.len()];
    outer_add(u, v, &mut out);
    out
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Evaluates a bilinear map stored as a `(p*d) x d` matrix `G` on a `d x d`
/// tensor `t`: `out_i += sum_{a,b} G[(i,b), a] t[a,b]`.
///
/// The layout matches `G<v (x) v'> = (G v) v'`, i.e. `G` is first applied to
/// the first tensor slot, producing a `p x d` linear map that then acts on the
/// second slot.
pub fn bilinear_add(g: &[f64], p: usize, d: usize, t: &[f64], out: &mut [f64]) {
    debug_assert_eq!(g.len(), p * d * d);
    debug_assert_eq!(t.len(), d * d);
    debug_assert_eq!(out.len(), p);
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in 0..d {
            let row = &g[(i * d + b) * d..(i * d + b + 1) * d];
            for a in 0..d {
                acc += row[a] * t[a * d + b];
            }
        }
        *o += acc;
    }
}

/// Rectangular variant of [`bilinear_add`]: `t` is `d1 x d2` and `G` is
/// `(p d2) x d1`, so `out_i += sum_{a,b} G[(i d2 + b) d1 + a] t[a d2 + b]`.
pub fn bilinear_rect_add(g: &[f64], p: usize, d1: usize, d2: usize, t: &[f64], out: &mut [f64]) {
    debug_assert_eq!(g.len(), p * d1 * d2);
    debug_assert_eq!(t.len(), d1 * d2);
    for (i, o) in out.iter_mut().enumerate().take(p) {
        let mut acc = 0.0;
        for b in 0..d2 {
            let row = &g[(i * d2 + b) * d1..(i * d2 + b + 1) * d1];
            for a in 0..d1 {
                acc += row[a] * t[a * d2 + b];
            }
        }
        *o += acc;
    }
}

/// Neumaier-compensated accumulator for long sums.
#[derive(Debug, Clone, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Lower Cholesky factor of a symmetric positive definite `n x n` matrix,
/// or `None` when a pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}
