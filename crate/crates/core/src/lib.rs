//! HST embeddings of finite metrics with outlier sets.

pub mod apps;
pub mod eval;
pub mod frt;
pub mod hst;
pub mod lp;
pub mod merge;
pub mod metric;
pub mod nested;
pub mod rng;
pub mod rounding;

pub use frt::{frt_sample, EmbeddingSampler, FrtSampler, SamplerError, SamplerKind};
pub use hst::{hst_from_ultrametric, is_ultrametric, scale_up, Hst, HstEmbedding, HstError};
pub use merge::{merge_hst, MergeError};
pub use metric::{MetricError, MetricSpace, Subset};
pub use nested::{nested_compose, Assortment, NestedError, NestedOutput, NestedSampler, NestedTrace};
pub use lp::{build_lp, solve, LpModel, LpSolution, SolveError, SolveOptions};
pub use rounding::{outlier_embed, OutlierConfig, OutlierResult, RoundingError, RoundingSampler};
