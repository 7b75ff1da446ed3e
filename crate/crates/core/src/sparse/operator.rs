use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Linear map `y = A x` with known dimensions.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// Writes `A x` into `y`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;

    /// Allocating convenience wrapper around [`LinearOperator::apply`].
    fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows()];
        self.apply(x, &mut y)?;
        Ok(y)
    }
}

pub(crate) fn check_dims(op: &(impl LinearOperator + ?Sized), x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != op.ncols() {
        return Err(Error::DimensionMismatch { expected: op.ncols(), found: x.len() });
    }
    if y.len() != op.nrows() {
        return Err(Error::DimensionMismatch { expected: op.nrows(), found: y.len() });
    }
    Ok(())
}

impl LinearOperator for SparseMatrix {
    fn nrows(&self) -> usize {
        SparseMatrix::nrows(self)
    }

    fn ncols(&self) -> usize {
        SparseMatrix::ncols(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_dims(self, x, y)?;
        self.spmv_into(x, y);
        Ok(())
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }

    fn ncols(&self) -> usize {
        (**self).ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        (**self).apply(x, y)
    }
}

/// The identity map on `R^n`.
#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn nrows(&self) -> usize {
        self.0
    }

    fn ncols(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_dims(self, x, y)?;
        y.copy_from_slice(x);
        Ok(())
    }
}

/// Square operator defined by a closure.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    fn nrows(&self) -> usize {
        self.n
    }

    fn ncols(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_dims(self, x, y)?;
        (self.f)(x, y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
