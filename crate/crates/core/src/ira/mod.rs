//! Iterative reanalysis approximation: a two-grid V-cycle whose coarse
//! problem is solved by exact reanalysis against a stored Cholesky factor.

mod hierarchy;
mod reanalysis;
mod smoother;
mod solver;

pub use hierarchy::{restrict_residual, v_cycle, CoarseSolve, TwoGridHierarchy};
pub use reanalysis::{
    detect_modifications, exact_reanalysis, modification_tolerance, ModificationSet,
    PreparedReanalysis, ReanalysisWorkspace, ReferenceFactorization,
};
pub use smoother::gauss_seidel;
pub use solver::{
    direct_solve, ira_solve, IraConfig, IraSolver, IterationStats, SolveReport, SolverMode,
    SolverStats,
};
