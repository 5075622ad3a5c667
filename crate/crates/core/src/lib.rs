//! Adaptive-LASSO logistic regression fitted to aggregated expert vote
//! counts, with a serial and a row-partitioned parallel linearized ADMM
//! solver, a regularization-path selector, and simulation harnesses.

pub mod error;
pub mod experiments;
pub mod io;
pub mod labels;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use labels::{CountVector, NoiseModel, PosteriorPair};
pub use linalg::DesignMatrix;
pub use model::{AdaptiveWeights, Coefficients};
pub use solver::{solve, solve_parallel, AdmmConfig, AdmmState, EtaMode, SolveOutput};
