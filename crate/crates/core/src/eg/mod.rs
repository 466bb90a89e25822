//! Lagrangian dual of the convex subproblem, its variational-inequality map
//! and the extragradient solver.

mod dual;
mod solver;

pub use dual::{DualState, Layout, ScalarGrad, SubproblemContext, VIPoint};
pub use solver::{
    eg_step, natural_residual, solve_subproblem, EgWorkspace, SolveOptions, StepInfo, StepParams, SubproblemOutcome,
    TraceRow, VariationalMap,
};
