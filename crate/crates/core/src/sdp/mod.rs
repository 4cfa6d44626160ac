//! Semidefinite programming over complex Hermitian blocks.
//!
//! Standard form: minimise (or maximise) `Σ_j Re tr(C_j X_j)` subject to
//! `Σ_j Re tr(A_ij X_j) = b_i` and `X_j ⪰ 0`. Dual multipliers and slacks are
//! reported for the minimisation form; for a maximisation problem the solver
//! works on `-C`.

mod problem;
mod solver;

use serde::{Deserialize, Serialize};

pub use problem::{hermitian_basis, BlockId, BlockSpec, GroupId, LinearMap, SdpBuilder, SdpProblem, Sense, SparseHermitian, Term};

use crate::error::Result;
use crate::linalg::HermitianMatrix;

/// Termination status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Tolerances and limits for [`solve`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative objective gap and complementarity.
    pub gap_tol: f64,
    /// Relative primal and dual residual.
    pub feas_tol: f64,
    pub max_iterations: usize,
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-8, feas_tol: 1e-9, max_iterations: 200, record_history: true }
    }
}

/// Per-iteration diagnostics, objectives in the caller's sense.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// `Σ tr(X_j Z_j)`.
    pub complementarity: f64,
    /// `⟨R_d, X⟩ - yᵀr_p`; the minimisation-form gap minus this equals the complementarity.
    pub infeasibility_correction: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub primal_blocks: Vec<HermitianMatrix>,
    pub dual_slacks: Vec<HermitianMatrix>,
    /// One multiplier per generated row; dropped dependent rows get zero.
    pub row_multipliers: Vec<f64>,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    /// Farkas vector over generated rows when the primal is infeasible.
    pub infeasibility_certificate: Option<Vec<f64>>,
    pub history: Vec<IterationRecord>,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        (self.primal_value - self.dual_value).abs()
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves the problem. Inconsistent equality systems return `Infeasible`
/// without running the interior-point method.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    if let Some(y) = &problem.inconsistency {
        let blocks: Vec<HermitianMatrix> = problem.blocks.iter().map(|b| HermitianMatrix::zeros(b.dim)).collect();
        return Ok(SdpSolution {
            status: SolveStatus::Infeasible,
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            primal_blocks: blocks.clone(),
            dual_slacks: blocks,
            row_multipliers: vec![0.0; problem.rows.len()],
            iterations: 0,
            primal_infeasibility: f64::INFINITY,
            dual_infeasibility: 0.0,
            complementarity: 0.0,
            infeasibility_certificate: Some(y.clone()),
            history: Vec::new(),
        });
    }
    solver::solve(problem, opts)
}

/// Outcome of a Slater-point check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SlaterStatus {
    StrictlyFeasible { min_eigenvalue: f64, residual: f64 },
    NotStrictlyFeasible { reason: String },
}

/// Checks that `candidate` satisfies every equality and is positive definite.
pub fn slater_check(problem: &SdpProblem, candidate: &[HermitianMatrix]) -> SlaterStatus {
    if candidate.len() != problem.blocks.len() {
        return SlaterStatus::NotStrictlyFeasible { reason: "wrong number of blocks".into() };
    }
    for (b, x) in problem.blocks.iter().zip(candidate) {
        if b.dim != x.dim() {
            return SlaterStatus::NotStrictlyFeasible { reason: format!("block {} has wrong dimension", b.name) };
        }
    }
    let residual = problem.equality_residual(candidate);
    let bscale = 1.0 + problem.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    if residual > 1e-9 * bscale {
        return SlaterStatus::NotStrictlyFeasible { reason: format!("equality residual {residual:.3e}") };
    }
    let mut min_eig = f64::INFINITY;
    for (b, x) in problem.blocks.iter().zip(candidate) {
        let lo = match x.min_eigenvalue() {
            Ok(v) => v,
            Err(e) => return SlaterStatus::NotStrictlyFeasible { reason: e.to_string() },
        };
        if lo <= 1e-8 {
            return SlaterStatus::NotStrictlyFeasible { reason: format!("block {} has eigenvalue {lo:.3e}", b.name) };
        }
        min_eig = min_eig.min(lo);
    }
    SlaterStatus::StrictlyFeasible { min_eigenvalue: min_eig, residual }
}
