//! Coalescent simulators: exact event-driven, tau-leaping, deterministic
//! fluid limit, and the fluid/exact hybrid for very large starting counts.

mod exact;
mod fluid;
mod hybrid;
mod leap;
mod trajectory;

pub use exact::{simulate_exact, simulate_exact_rng};
pub use fluid::{
    simulate_fluid, simulate_fluid_payoff, FluidPath, FluidState, FluidStopReason,
};
pub use hybrid::{simulate_hybrid, HybridConfig, UpperMethod};
pub use leap::{simulate_tau_leap, simulate_tau_leap_rng};
pub use trajectory::{PathMode, StopCriterion, Trajectory};

pub(crate) use trajectory::TrajBuilder;
