//! Solver front end. Small programs go to the in-crate dense simplex; larger
//! ones to `microlp`'s sparse simplex, since a dense tableau for the outlier
//! LP at a dozen points already runs to tens of millions of entries.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dense::{solve_dense, FEAS_TOL};
use super::program::{LinearProgram, Sense};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("infeasible{}", .row.as_ref().map(|r| format!(" (row {r} cannot be satisfied)")).unwrap_or_default())]
    Infeasible { row: Option<String> },
    #[error("unbounded")]
    Unbounded,
    #[error("iteration limit reached before a feasible point was found")]
    IterationLimit,
    #[error("solver backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Auto,
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    IterationLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    pub backend: Backend,
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    /// Auto picks the dense backend when rows times columns stays below this.
    pub dense_cells: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { backend: Backend::Auto, max_iterations: 200_000, time_limit: None, dense_cells: 250_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub backend: Backend,
    /// Simplex pivots; only counted by the dense backend.
    pub pivots: Option<usize>,
    pub seconds: f64,
}

pub fn solve(p: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution, SolveError> {
    let backend = match opts.backend {
        Backend::Auto if p.num_rows().saturating_mul(p.num_cols()) <= opts.dense_cells => Backend::Dense,
        Backend::Auto => Backend::Sparse,
        b => b,
    };
    let start = Instant::now();
    let (mut values, status, pivots) = match backend {
        Backend::Dense => {
            let r = solve_dense(p, opts.max_iterations)?;
            let status = if r.limit_hit { LpStatus::IterationLimit } else { LpStatus::Optimal };
            (r.values, status, Some(r.pivots))
        }
        _ => {
            let (v, s) = solve_sparse(p, opts.time_limit)?;
            (v, s, None)
        }
    };
    // snap values that sit a hair outside their bounds
    for (j, v) in values.iter_mut().enumerate() {
        if (*v - p.lower[j]).abs() <= FEAS_TOL && *v < p.lower[j] {
            *v = p.lower[j];
        }
        if (*v - p.upper[j]).abs() <= FEAS_TOL && *v > p.upper[j] {
            *v = p.upper[j];
        }
    }
    Ok(LpSolution {
        status,
        objective: p.objective_value(&values),
        values,
        backend,
        pivots,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn solve_sparse(p: &LinearProgram, time_limit: Option<Duration>) -> Result<(Vec<f64>, LpStatus), SolveError> {
    use microlp::{ComparisonOp, Error, OptimizationDirection, Problem, SolveOutcome, SolutionStatus};

    let mut prob = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..p.num_cols()).map(|j| prob.add_var(p.objective[j], (p.lower[j], p.upper[j]))).collect();
    for row in &p.rows {
        let op = match row.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        prob.add_constraint(row.coeffs.iter().map(|&(j, a)| (vars[j], a)), op, row.rhs);
    }
    if let Some(t) = time_limit {
        prob.set_time_limit(t);
    }
    match prob.solve() {
        Ok(SolveOutcome::Solution(sol)) => {
            let status = match sol.status() {
                SolutionStatus::Optimal => LpStatus::Optimal,
                _ => LpStatus::IterationLimit,
            };
            Ok((vars.iter().map(|&v| sol.var_value(v)).collect(), status))
        }
        Ok(SolveOutcome::Interrupted(_)) => Err(SolveError::IterationLimit),
        Err(Error::Infeasible) => Err(SolveError::Infeasible { row: None }),
        Err(Error::Unbounded) => Err(SolveError::Unbounded),
        Err(e) => Err(SolveError::Backend(format!("{e:?}"))),
    }
}
