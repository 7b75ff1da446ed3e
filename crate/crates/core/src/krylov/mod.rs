//! Krylov solvers. All stopping tests use the unpreconditioned residual
//! `||b - A x||_2` against an absolute target.

mod bpcg;
mod gmres;
mod minres;

pub use bpcg::bpcg;
pub use gmres::gmres;
pub use minres::minres;

pub const GMRES_MAXIT: usize = 80;
pub const MINRES_MAXIT: usize = 1000;
pub const BPCG_MAXIT: usize = 1000;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Unpreconditioned residual norms, starting with the initial residual.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub breakdown_reason: Option<String>,
}

impl SolveStats {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

use crate::error::{Error, Result};
use crate::sparse::LinearOperator;

pub(crate) fn check_system(op: &dyn LinearOperator, prec: &dyn LinearOperator, b: &[f64], x0: &[f64]) -> Result<usize> {
    let n = op.nrows();
    if op.ncols() != n {
        return Err(Error::NotSquare { nrows: n, ncols: op.ncols() });
    }
    for len in [prec.nrows(), prec.ncols(), b.len(), x0.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    Ok(n)
}

pub(crate) fn residual(op: &dyn LinearOperator, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut r = op.apply_vec(x)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(r)
}
