//! Discrete nonlocal vector calculus with a state-based peridynamics
//! application.
//!
//! The library discretizes three-point-kernel integral operators (divergence,
//! gradient, curl, tensor divergence, vector gradient, their adjoints, the
//! averaging operator and the induced Laplacians) on point clouds with
//! midpoint quadrature, together with the specialized two-point kernel
//! families that collapse the general forms to single sums over a horizon.
//! On top of the calculus sits the linear state-based peridynamics operator
//! in three provably equivalent forms and an explicit central-difference
//! integrator.
//!
//! Modules mirror the layering:
//!
//! - [`grid`]: point clouds, quadrature weights, horizon neighbor lists
//! - [`field`]: one-point and two-point fields and their inner products
//! - [`kernels`]: the general kernel, the alpha/beta/lambda-alpha families,
//!   admissibility checks and embeddings
//! - [`ops`]: every nonlocal operator, general and specialized
//! - [`calculus`]: the identity-verification harness
//! - [`peridyn`]: material model, force states, and the operator `L`
//! - [`dynamics`]: explicit time integration and energy diagnostics
//! - [`config`] / [`cli`]: JSON configuration and batch commands

pub mod calculus;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod field;
pub mod grid;
pub mod kernels;
pub mod ops;
pub mod peridyn;

pub use field::{inner_product_one_point, inner_product_two_point, OnePointField, Rank, TwoPointField};
pub use grid::{build_uniform_grid, Grid, Subdomain};
pub use peridyn::{PeridynamicMaterial, SparseOperator};
pub use kernels::{AlphaKernel, BetaKernel, GeneralKernel, LambdaAlphaKernel, NonlocalKernel};

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
    #[error("rank mismatch: expected {expected:?}, got {got:?}")]
    RankMismatch { expected: Rank, got: Rank },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("singular configuration: {0}")]
    Singular(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("simulation diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
