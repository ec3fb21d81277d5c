//! Instances, solutions, lotteries and the optimality bound.

mod instance;
mod solution;
mod solve;

pub use instance::{Constraint, Domain, IlpInstance, LinearObjective, PreferenceMode, Relation, VarRef};
pub(crate) use instance::dot;
pub(crate) use solution::{round_sig, x_key};
pub use solution::{realizes, reduce_support, Distribution, Lottery, Solution, SolutionPool};
pub use solve::{
    optimality_row, solve_optimal, solve_pricing, with_optimality_bound, NearOptConfig, OptimalSet, Solver,
    SolverConfig, SolverStats,
};
