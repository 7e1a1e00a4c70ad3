//! Bound solvers: a log-barrier method for the cone relaxations (lower
//! bounds) and a multistart local method for the polar model (upper
//! bounds).

mod barrier;
mod polar;

use thiserror::Error;

use crate::builders::BuildError;
use crate::ir::Point;

pub use barrier::{interior_start, solve_conic, solve_jabr_barrier};
pub use polar::{polar_local_starts, solve_polar_local};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol_feas: f64,
    pub tol_opt: f64,
    /// Barrier parameter reduction per outer iteration.
    pub barrier_reduction: f64,
    pub multistart: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 200,
            tol_feas: 1e-6,
            tol_opt: 1e-6,
            barrier_reduction: 0.1,
            multistart: 10,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol_feas > 0.0 && self.tol_opt > 0.0) {
            return Err(SolveError::InvalidOptions("tolerances must be positive".into()));
        }
        if !(self.barrier_reduction > 0.0 && self.barrier_reduction < 1.0) {
            return Err(SolveError::InvalidOptions("barrier reduction must lie in (0, 1)".into()));
        }
        if self.max_iter == 0 {
            return Err(SolveError::InvalidOptions("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    InfeasibleDetected,
    IterationLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::InfeasibleDetected => "infeasible_detected",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub point: Point,
    pub max_violation: f64,
    pub bound_kind: BoundKind,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("formulation not supported by this solver: {0}")]
    UnsupportedFormulation(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("gap needs a lower bound and an upper bound")]
    InvalidBoundKinds,
    #[error("bound result has status {0}")]
    NotFeasible(&'static str),
    #[error("lower bound exceeds upper bound (relative gap {0:e})")]
    NegativeGap(f64),
}

/// Relative gap `(ub - lb) / max(1, |ub|)`.
pub fn optimality_gap(lb: &SolveResult, ub: &SolveResult) -> Result<f64, SolveError> {
    optimality_gap_tol(lb, ub, SolveOptions::default().tol_opt)
}

pub fn optimality_gap_tol(lb: &SolveResult, ub: &SolveResult, tol_opt: f64) -> Result<f64, SolveError> {
    if lb.bound_kind != BoundKind::Lower || ub.bound_kind != BoundKind::Upper {
        return Err(SolveError::InvalidBoundKinds);
    }
    for r in [lb, ub] {
        if !r.status.is_feasible() {
            return Err(SolveError::NotFeasible(r.status.as_str()));
        }
    }
    let gap = (ub.objective - lb.objective) / ub.objective.abs().max(1.0);
    if gap < -tol_opt {
        return Err(SolveError::NegativeGap(gap));
    }
    Ok(gap)
}
