//! Downstream problems solved through tree embeddings.

pub mod bulk;
pub mod mcct;

pub use bulk::{
    app_outer_loop, naive_plan, per_request_opt, plan_cost, point_weights, tree_bulk_cost, validate_schedule, AppError,
    AppSolution, CostTable, DefaultOracle, OuterLoopConfig, Plan, Problem, Request, RequestsFile, Rung, Stop,
    TreeOracle,
};
pub use mcct::{mcct_outlier, DemandsFile, McctError, McctInstance, McctSolution, PointRef};
