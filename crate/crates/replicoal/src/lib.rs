//! Simulation and numerical analysis of a k-type block-merger coalescent.
//!
//! Blocks of k types merge pairwise: a (type-i, type-j) pair merges into a
//! type-i block at rate `C[i][j]`, a within-type pair at `C[i][i]`. The
//! total count σ falls by one per event until a single block remains. Run
//! through the clock change t ↦ ∫σ, the type-frequency path of a large
//! population follows the replicator flow of the payoff matrix induced by
//! the rates, and is funneled through that flow's stable interior state
//! before stochastic effects take over — the bottleneck this crate's
//! simulators and diagnostics are built to expose.
//!
//! Modules:
//! - [`model`]: rate matrix, block states, channels, total/victim rates.
//! - [`replicator`]: the payoff-matrix flow, fixed point, stability check,
//!   RK4 integration.
//! - [`sim`]: exact (event-driven), tau-leap, fluid, and hybrid simulators.
//! - [`analysis`]: clock/time change, compensator and martingale residuals,
//!   ensemble statistics.
//! - [`kingman`]: single-type reference death chain and closed forms.
//! - [`dual`]: exact hitting laws, h-function, reversed-chain rates.
//! - [`instances`]: canonical and random model instances.

pub mod analysis;
pub mod dual;
pub mod error;
pub mod instances;
pub mod kingman;
pub mod model;
pub mod replicator;
pub mod rng;
pub mod simplex;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{payoff_from_rates, BlockState, MergeChannel, PayoffMatrix, RateMatrix};
pub use replicator::{ess_fixed_point, verify_ess, EssResult, OdePath};
pub use sim::{
    simulate_exact, simulate_fluid, simulate_hybrid, simulate_tau_leap, FluidState, HybridConfig,
    PathMode, StopCriterion, Trajectory, UpperMethod,
};
pub use simplex::SimplexPoint;
