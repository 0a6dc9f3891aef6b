use std::sync::Arc;

/// A twice (or more) differentiable map between Euclidean spaces with
/// explicit derivative evaluators.
///
/// Layouts are row-major: `gradient` is `out_dim x in_dim`, `hessian` is
/// `out_dim x in_dim x in_dim`. Matrix-valued maps (for instance a diffusion
/// coefficient `W -> L(V, W)`) are flattened with the output row index
/// outermost, so entry `(i, b)` of an `m x d` matrix sits at `i * d + b`.
pub trait SmoothMap: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn value(&self, y: &[f64], out: &mut [f64]);
    fn gradient(&self, y: &[f64], out: &mut [f64]);
    fn hessian(&self, y: &[f64], out: &mut [f64]);

    fn value_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.value(y, &mut out);
        out
    }

    fn gradient_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim() * self.in_dim()];
        self.gradient(y, &mut out);
        out
    }

    fn hessian_vec(&self, y: &[f64]) -> Vec<f64> {
        let n = self.in_dim();
        let mut out = vec![0.0; self.out_dim() * n * n];
        self.hessian(y, &mut out);
        out
    }
}

impl<T: SmoothMap + ?Sized> SmoothMap for Arc<T> {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn value(&self, y: &[f64], out: &mut [f64]) {
        (**self).value(y, out)
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        (**self).gradient(y, out)
    }
    fn hessian(&self, y: &[f64], out: &mut [f64]) {
        (**self).hessian(y, out)
    }
}

/// Identity on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl SmoothMap for Identity {
    fn in_dim(&self) -> usize {
        self.0
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn value(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
    fn gradient(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.0 {
            out[i * self.0 + i] = 1.0;
        }
    }
    fn hessian(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Constant map `y -> c`.
#[derive(Debug, Clone)]
pub struct Constant {
    pub in_dim: usize,
    pub value: Vec<f64>,
}

impl SmoothMap for Constant {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.value.len()
    }
    fn value(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
    fn gradient(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn hessian(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Linear map `y -> A y` with `A` stored `out_dim x in_dim`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub matrix: Vec<f64>,
}

impl SmoothMap for Linear {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.matrix.len() / self.in_dim
    }
    fn value(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        crate::linalg::gemv_add(&self.matrix, self.out_dim(), self.in_dim, y, out);
    }
    fn gradient(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.matrix);
    }
    fn hessian(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

type Eval = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A smooth map assembled from closures.
pub struct ClosureMap {
    in_dim: usize,
    out_dim: usize,
    value: Eval,
    gradient: Eval,
    hessian: Eval,
}

impl ClosureMap {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        value: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: Box::new(hessian),
        }
    }

    /// Scalar `R -> R` map from `(g, g', g'')`.
    pub fn scalar(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2g: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            1,
            1,
            move |y, out| out[0] = g(y[0]),
            move |y, out| out[0] = dg(y[0]),
            move |y, out| out[0] = d2g(y[0]),
        )
    }
}

impl SmoothMap for ClosureMap {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn value(&self, y: &[f64], out: &mut [f64]) {
        (self.value)(y, out)
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        (self.gradient)(y, out)
    }
    fn hessian(&self, y: &[f64], out: &mut [f64]) {
        (self.hessian)(y, out)
    }
}

impl std::fmt::Debug for ClosureMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosureMap")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .finish_non_exhaustive()
    }
}
