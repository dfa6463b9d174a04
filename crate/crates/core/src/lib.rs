//! Sequential auctions with complementary resources: problem model, exact
//! discrete dynamic programming, grid approximations over continuous
//! endowments, Monte Carlo simulation and an experiment runner.

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auction;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod pwl;
pub mod rng;
pub mod sim;

pub use auction::{
    validate_problem, BidDistribution, Bundle, Holdings, Mode, Problem, ProblemSpec, ResidualSpec,
    ResourceIndex, WinModel,
};
pub use continuous::{
    maximize_bid, solve_grid, DeltaLedger, GridSolution, GridStrategy, HybridValueFunction,
    MaximizerConfig,
};
pub use discrete::{
    evaluate_policy_exact, solve_discrete, BidTable, DiscretePolicy, DiscreteValueSolution,
};
pub use error::{Error, Result};
pub use pwl::{PwlFunction, RefinementBudget};
pub use sim::{
    compare_solutions, estimate_policy_value, simulate_round, Bidder, ErrorReport, GreedyBidder,
};
