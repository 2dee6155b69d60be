//! Multi-objective preference optimization over pairwise preference data.
//!
//! The crate is organised around six modules:
//!
//! * [`domain`]: records, datasets, policies and solver state.
//! * [`synth`]: analytic reward sets, Bradley-Terry sampling and dataset builders.
//! * [`pareto`]: dominance, fronts, insertion-index thresholds and proximity metrics.
//! * [`solver`]: the constrained primal-dual training loop and a brute-force oracle.
//! * [`baselines`]: DPO and the analytic constrained-optimization policy.
//! * [`cli`]: configuration, CSV/SVG emission and experiment orchestration.

pub mod baselines;
pub mod cli;
pub mod domain;
pub mod error;
pub mod pareto;
pub mod solver;
pub mod synth;

pub use error::{MopoError, Result};
