//! Equilibrium, incentive and network-formation analysis for a Gaussian
//! communication game on networks.
//!
//! Agents observe noisy signals of a common state, exchange messages with
//! their network neighbors and choose actions that trade off accuracy against
//! coordination with neighbors. The crate provides
//!
//! * the unique linear equilibrium under truthful reporting ([`equilibrium`]),
//! * exact ex-ante payoffs ([`payoffs`]),
//! * a checker for profitable misreporting ([`incentives`]),
//! * the recursive assortative club construction, core verification and
//!   welfare comparison ([`formation`]),
//! * a seeded Monte Carlo oracle ([`montecarlo`]),
//! * scenario files and JSON/CSV reports for the `infoclubs` binary ([`cli`]).

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod formation;
pub mod incentives;
pub mod model;
pub mod montecarlo;
pub mod payoffs;

pub use equilibrium::{babbling_strategy, best_response_map, solve_truthful, SolveMethod, StrategyCoefficients};
pub use error::{Error, Result};
pub use formation::{core_check, efficiency_frontier, kappa_region, recursive_partition, CliquePartition};
pub use incentives::{check_truthful_ic, optimal_deviation, IcTolerance};
pub use model::{posterior_weights, validate_params, GameParams, Network, SignalCovariance};
pub use payoffs::{clique_payoff, exante_payoffs, welfare, PayoffReport};
