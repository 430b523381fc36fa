//! Sparse symmetric storage, fill-reducing ordering, Cholesky and LDLᵀ
//! factorization, and 1-norm condition estimation.

mod amd;
mod cholesky;
mod condest;
mod csc;

pub use amd::amd_order;
pub use cholesky::{
    factorize, symbolic_cholesky, CholeskyFactor, FactorStatus, Inertia, LdlFactor, NotPositiveDefinite,
    SymbolicFactorization, SymmetricSolve, PIVOT_FLOOR,
};
pub use condest::{estimate_condition, estimate_inverse_norm1};
pub use csc::{coo_to_csc, SparseSymmetric};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SparseError {
    #[error("entry ({row}, {col}) lies above the diagonal")]
    UpperTriangleEntry { row: usize, col: usize },
    #[error("entry ({row}, {col}) outside a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("malformed matrix: {0}")]
    Malformed(&'static str),
    #[error("ordering is not a permutation of the matrix dimension")]
    InvalidPermutation,
    #[error("matrix pattern differs from the analysed pattern")]
    PatternMismatch,
}
