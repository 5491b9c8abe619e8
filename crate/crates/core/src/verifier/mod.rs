//! Exact worst-case analysis of trained networks: interval bound
//! propagation, big-M MILP encoding of ReLUs, worst-case violation search,
//! and hypercube fitting — on top of a built-in bounded-variable simplex
//! and branch-and-bound MILP solver.

pub mod encode;
pub mod ibp;
pub mod milp;
pub mod simplex;

pub use encode::{
    encode_worstcase, encoding_feasibility_residual, find_worst_case, fit_hypercube,
    fix_relu_statuses, violation_at, HypercubeResult,
    ReluStatus, Side, VerifyConfig, WorstCaseResult,
};
pub use ibp::{interval_bounds, LayerBounds};
pub use milp::{solve_milp_bnb, BnbConfig, MilpError, MilpModel, MilpSolution};
pub use simplex::{solve_lp, LinRow, LinearProgram, LpError, LpResult, LpStatus, Sense};
