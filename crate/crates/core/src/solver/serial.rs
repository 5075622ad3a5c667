use crate::error::Result;
use crate::labels::CountVector;
use crate::linalg::{estimate_eta, DesignMatrix};
use crate::model::AdaptiveWeights;

use super::{check_problem, coordinate, AdmmConfig, AdmmState, LocalBackend, Problem, Shard, SolveOutput};

/// `config.eta` if set, otherwise the power-iteration bound on `mu X'X`.
pub fn serial_eta(x: &DesignMatrix, config: &AdmmConfig) -> Result<f64> {
    match config.eta {
        Some(eta) => Ok(eta),
        None => Ok(estimate_eta(x, config.mu, &config.eta_options)?.value),
    }
}

/// Single-machine linearized ADMM. Pass `None` for a zero start.
///
/// Reaching `max_iter` is not an error: the iterate with the smallest scaled
/// residual is returned with `converged = false`.
pub fn solve(
    x: &DesignMatrix,
    s: &CountVector,
    lambda: f64,
    w: &AdaptiveWeights,
    config: &AdmmConfig,
    init: Option<&AdmmState>,
) -> Result<SolveOutput> {
    let zero;
    let init = match init {
        Some(state) => state,
        None => {
            zero = AdmmState::zeros(x.nrows(), x.ncols());
            &zero
        }
    };
    check_problem(x, s, lambda, w, config, init)?;
    let eta = serial_eta(x, config)?;
    let shard = Shard::new(x, s.counts(), s.m(), init.r.clone(), init.u.clone(), config);
    let problem = Problem {
        n: x.nrows(),
        d: x.ncols(),
        lambda,
        w: w.weights(),
    };
    coordinate(LocalBackend { shards: vec![shard] }, &problem, config, eta, init)
}
