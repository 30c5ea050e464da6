//! Eigenvalue engines.
//!
//! Exact-count bisection for symmetric (possibly weighted) tridiagonal
//! matrices, thick-restart Lanczos with full reorthogonalization for
//! matrix-free operators, a dense oracle, and the real embedding used to feed
//! complex Hermitian operators to the real solvers.

mod dense;
mod lanczos;
mod operator;
mod spectrum;
mod tridiag;

pub use dense::{dense_sym_eigen, dense_sym_eigenpairs};
pub use lanczos::{lanczos, lanczos_smallest, Filter, LanczosOptions};
pub use operator::{
    check_hermitian, check_linearity, check_symmetry, hermitian_embed, to_dense, ComplexOperator,
    DenseOperator, FnOperator, HermitianEmbedding, RealOperator,
};
pub use spectrum::{SolverMeta, Spectrum, EMBED_DEDUP_REL};
pub use tridiag::{
    sturm_count, tridiag_eigenpairs, tridiag_eigenvalues, tridiag_eigenvector,
    tridiag_eigenvectors, Tridiag,
};
