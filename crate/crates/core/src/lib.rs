//! Budget-constrained clinching auctions with exact rational arithmetic.
//!
//! The crate implements three auction engines and the machinery to verify
//! their guarantees:
//!
//! - [`divisible`]: the ascending multi-price clinching auction for divisible
//!   heterogeneous slots, driven by exact vertex solutions of small linear
//!   programs ([`lp`]).
//! - [`rounding`]: randomized rounding of a divisible outcome into per-round
//!   indivisible assignments (discretization, pseudo-bidder expansion, column
//!   swapping, uniform sampling).
//! - [`combinatorial`]: the deterministic single-valued combinatorial
//!   clinching auction over interest sets, built on min-cost max-flow
//!   B-matchings ([`flow`]).
//!
//! [`verify`] holds the independent checks: the swap-closure Pareto
//! characterization, trading-swap and trading-path witnesses, an improvement
//! LP oracle, and incentive-compatibility deviation grids. [`marginal`]
//! reproduces the diminishing-marginal-valuations impossibility as an
//! executable comparison. [`oracle`] collects brute-force reference
//! implementations used by the test suites.

pub mod combinatorial;
pub mod divisible;
pub mod error;
pub mod flow;
pub mod io;
pub mod lp;
pub mod marginal;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod rounding;
pub mod selftest;
pub mod verify;

pub use error::EngineError;
pub use rational::Rat;
