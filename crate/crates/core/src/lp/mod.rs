//! Linear programming: a generic program type with text export, two simplex
//! backends, and the outlier HST LP built on top.

mod dense;
pub mod model;
pub mod program;
pub mod solver;

pub use dense::{FEAS_TOL, PIVOT_TOL};
pub use model::{build_lp, log2_sq, radius_ladder, witness_from_distribution, LpModel, RowKind, Witness, WitnessError};
pub use program::{LinearProgram, LpFormatError, Row, Sense, Violation};
pub use solver::{solve, Backend, LpSolution, LpStatus, SolveError, SolveOptions};
