//! Sparse matrices, direct factorization and the operator abstraction.

mod csr;
pub mod lu;
pub mod mm;
pub mod multigrid;
pub mod operator;
pub mod ordering;

pub use csr::SparseMatrix;
pub use lu::{LuInverse, SparseLu};
pub use multigrid::{Multigrid, MultigridOptions};
pub use operator::{axpy, dot, norm2, FnOperator, Identity, LinearOperator};
