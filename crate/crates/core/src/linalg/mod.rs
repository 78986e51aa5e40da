//! Dense real linear algebra used throughout the toolkit.
//!
//! Everything here is deliberately small-scale: the matrices produced by
//! the designer are dense and of order well below ~200, so the module
//! favors simple, deterministic algorithms (Householder tridiagonalization
//! followed by implicit QL with Wilkinson shifts for the symmetric
//! eigenproblem, Cholesky for SPD solves) over sparse machinery.
//!
//! All types are immutable after construction and all operations are pure,
//! so values can be shared freely across threads.

mod block;
mod matrix;
mod sym;

pub use block::BlockMatrix;
pub use matrix::{Cholesky, Matrix};
pub use sym::{SymEigen, SymMatrix};

use std::fmt;

/// Errors produced by the linear-algebra layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// An input matrix contains NaN or infinite entries.
    NonFinite,
    /// Operand shapes are incompatible.
    DimMismatch(String),
    /// A matrix expected to be positive definite is not.
    NotPositiveDefinite,
    /// The QL iteration failed to converge (pathological input).
    NoConvergence,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::NonFinite => write!(f, "matrix has non-finite entries"),
            LinalgError::DimMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            LinalgError::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            LinalgError::NoConvergence => write!(f, "eigenvalue iteration did not converge"),
        }
    }
}

impl std::error::Error for LinalgError {}

/// Largest singular value of a general matrix, computed as
/// `sqrt(lambda_max(mᵀm))`.
pub fn max_singular_value(m: &Matrix) -> Result<f64, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(0.0);
    }
    // Gram matrix on the smaller side keeps the eigenproblem cheap.
    let gram = if m.rows() >= m.cols() {
        m.transpose().mul(m)
    } else {
        m.mul(&m.transpose())
    };
    let sym = SymMatrix::from_dense_symmetrized(&gram);
    let lam = sym.max_eig()?;
    Ok(lam.max(0.0).sqrt())
}

pub(crate) fn hypot(a: f64, b: f64) -> f64 {
    a.hypot(b)
}
