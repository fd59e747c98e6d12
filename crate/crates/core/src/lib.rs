//! Robust pose-graph optimization with an adaptive kernel whose shape is
//! estimated jointly with the poses, plus the baselines it is compared with
//! (switchable constraints, DCS, fixed M-estimators) and the tooling to
//! corrupt datasets and score the results.

pub mod error;
pub mod eval;
pub mod gio;
pub mod graph;
pub mod kernels;
pub mod lie;
pub mod robust;
pub mod solver;

pub use error::{EvalError, GraphError, IoError, KernelError, LieError, SolverError};
pub use graph::{AnyGraph, Edge, Graph2, Graph3, LoopEdge, PoseGraph, Provenance};
pub use kernels::{AdaptiveKernel, FixedKernel};
pub use lie::{LieGroup, Se2, Se3};
pub use robust::{AerosConfig, RobustConfig, ScConfig, SwitchWeight};
pub use solver::{solve_batch, solve_incremental, SolveReport, SolverSettings, State};
