use alloc::string::String;

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("matrix is not positive definite (pivot {pivot:e} at dof {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("mesh resolution must be at least 2 cells per side, got {0}")]
    InvalidResolution(usize),
    #[error("the Dirichlet part of the boundary is empty")]
    EmptyDirichlet,
    #[error("the Neumann part of the boundary is empty")]
    EmptyNeumann,
    #[error("cavity shape is not contained in the domain with margin {margin}")]
    ShapeOutsideDomain { margin: f64 },
    #[error("cavity shape does not contain any triangle centroid")]
    NothingRemoved,
    #[error("removing the cavity disconnects the domain into {components} pieces")]
    Disconnected { components: usize },
    #[error("no boundary edge of the source mesh contains the point ({x}, {y})")]
    BoundaryMismatch { x: f64, y: f64 },
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PdasError {
    #[error("active-set iteration did not settle within {iterations} iterations (KKT residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("active sets cycle: iteration {iteration} repeats the sets of iteration {previous}")]
    Cycling { iteration: usize, previous: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Top-level error of the reconstruction library.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Pdas(#[from] PdasError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("at least one load case is required")]
    NoLoadCases,
    #[error("objective is not finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
