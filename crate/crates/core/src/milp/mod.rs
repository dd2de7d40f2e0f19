//! Reservation MILP: model building, solving, validation and costing.

pub mod assignment;
pub mod brute;
pub mod build;
pub mod external;
pub mod model;
pub mod solver;

pub use assignment::{
    cost_breakdown, cost_breakdown_slot, validate_assignment, validate_capacity, validate_capacity_with,
    CommittedLoad, CostBreakdown, SliceAssignment, SlotLoad, Violation,
};
pub use brute::{brute_force_instance, brute_force_model, BruteResult, MAX_ENUMERATED};
pub use build::{
    build_problem2, build_problem3, extract_assignments, BatchEntry, BuildError, BuildOptions, SliceTargets,
    SlotTargets, CAPACITY_TOL,
};
pub use external::{parse_cbc_solution, write_lp, ExternalSolver, SOLVER_ENV};
pub use model::{MilpModel, ModelStats, Row, RowFamily, Sense, VarDesc, VarKind, VarRole};
pub use solver::{BuiltinSolver, MilpSolution, MilpSolver, SolveOptions, SolveStatus, SolverError};
