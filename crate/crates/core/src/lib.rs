//! Valuation of American claims for a buyer holding extra initial
//! information `G`.
//!
//! The buyer's filtration is the market filtration enlarged at time zero by
//! `σ(G)`. Under the density hypothesis the conditional law of `G` has a
//! strictly positive density `α_t(u)` with respect to its prior, and the
//! insider's problem becomes one optimal-stopping problem per value `u` of
//! `G` with the reward `R(u, t) = L_t α_t(u)` (and `ξ α_T(u)` at maturity).
//!
//! * [`lattice`]: finite filtered spaces, exact Snell envelopes and a
//!   brute-force stopping-rule oracle;
//! * [`density`]: density processes on lattices and on Brownian paths;
//! * [`product`]: insider value, projection value and the cost of extra
//!   information on lattices, cross-checked by dynamic programming on the
//!   refined tree;
//! * [`rbsde`]: regression Monte Carlo for the reflected BSDEs, with three
//!   independent routes to the insider value;
//! * [`scenario`]: the noisy-endpoint example `G = B_T + X` end to end;
//! * [`checks`]: the invariant suites behind `infoval verify`.

pub mod checks;
pub mod density;
pub mod error;
pub mod instances;
pub mod lattice;
pub mod product;
pub mod rbsde;
pub mod scenario;
pub mod util;

pub use density::{GaussianInfoModel, LatticeDensity, UGrid};
pub use error::{Error, Result};
pub use lattice::{FiltrationLattice, PayoffSpec, SnellResult};
pub use product::InsiderValuation;
pub use rbsde::{MarketModel, PathEnsemble, Payoff, RBSDESolution};
pub use scenario::{ScenarioConfig, ScenarioReport};
pub use util::Estimate;
