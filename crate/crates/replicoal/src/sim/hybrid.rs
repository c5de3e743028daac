//! Hybrid simulation: a deterministic fluid (or tau-leap) stage while σ is
//! above a switch level, then exact event-driven simulation below it. This
//! is what makes starts like σ(0) = 10¹⁵ tractable: above the switch the
//! frequency fluctuations are O(σ^{-1/2}), far below anything the exact
//! stage resolves.

use crate::error::{Error, Result};
use crate::model::{BlockState, PayoffMatrix, RateMatrix};
use crate::rng::stream_rng;
use crate::simplex::{largest_remainder_counts, SimplexPoint};
use crate::sim::exact::{run_exact, simulate_exact};
use crate::sim::fluid::{fluid_run, FluidState, FluidStopReason};
use crate::sim::leap::simulate_tau_leap;
use crate::sim::trajectory::{PathMode, StopCriterion, TrajBuilder, Trajectory};

/// Method used above the switch level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperMethod {
    /// Deterministic mean dynamics, RK4 with the given clock-mass step.
    Fluid { step: f64 },
    /// Tau-leaping with the given relative-change tolerance.
    TauLeap { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    pub switch_sigma: u64,
    pub upper: UpperMethod,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            switch_sigma: 10_000,
            upper: UpperMethod::Fluid { step: 0.005 },
        }
    }
}

/// Simulates from σ(0) = `sigma0` blocks with type frequencies `r0` (rounded
/// to integer counts by largest remainder). Runs the configured upper method
/// while σ > `switch_sigma`, rounds the continuum state to counts at the
/// switch, and finishes with the exact simulator. Times and the clock
/// integral are continuous across the switch.
pub fn simulate_hybrid(
    c: &RateMatrix,
    sigma0: u64,
    r0: &SimplexPoint,
    stop: StopCriterion,
    seed: u64,
    cfg: &HybridConfig,
) -> Result<Trajectory> {
    stop.validate()?;
    if cfg.switch_sigma < 2 {
        return Err(Error::InvalidArgument("switch_sigma must be >= 2".into()));
    }
    if r0.k() != c.k() {
        return Err(Error::DimensionMismatch {
            expected: c.k(),
            got: r0.k(),
        });
    }
    if sigma0 < 1 {
        return Err(Error::InvalidArgument("sigma0 must be >= 1".into()));
    }
    let n0 = BlockState::new(largest_remainder_counts(r0.coords(), sigma0))?;

    // Degenerate switch: the whole run is exact (or leap handles its own
    // floor, which is the same switch semantics).
    if sigma0 <= cfg.switch_sigma {
        return simulate_exact(c, &n0, stop, seed);
    }
    match cfg.upper {
        UpperMethod::TauLeap { eps } => {
            simulate_tau_leap(c, &n0, stop, seed, eps, cfg.switch_sigma)
        }
        UpperMethod::Fluid { step } => {
            simulate_hybrid_fluid(c, sigma0, &n0, stop, seed, cfg.switch_sigma, step)
        }
    }
}

fn simulate_hybrid_fluid(
    c: &RateMatrix,
    sigma0: u64,
    n0: &BlockState,
    stop: StopCriterion,
    seed: u64,
    switch_sigma: u64,
    step: f64,
) -> Result<Trajectory> {
    let k = c.k();
    let a = PayoffMatrix::from_rates(c);
    let f0 = FluidState::new(sigma0 as f64, n0.frequencies())?;

    let fluid_target = match stop {
        StopCriterion::HitSigma(m) => switch_sigma.max(m),
        _ => switch_sigma,
    } as f64;
    let t_max = match stop {
        StopCriterion::MaxTime(t) => Some(t),
        _ => None,
    };
    let fp = fluid_run(&a, &f0, Some(fluid_target), t_max, step)?;

    let mut b = TrajBuilder::new(k, PathMode::Hybrid, n0.counts());
    b.mark_coarse();
    let mut counts_buf = vec![0u64; k];
    for i in 1..fp.len() {
        let sigma_int = fp.sigma(i).round().max(1.0) as u64;
        let rounded = largest_remainder_counts(fp.freqs(i), sigma_int);
        counts_buf.copy_from_slice(&rounded);
        // The clock mass at a fluid sample is the u-coordinate itself.
        b.push(fp.time(i), &counts_buf, sigma_int, fp.tau(i));
    }

    match fp.stop_reason {
        FluidStopReason::MaxTime => Ok(b.finish(fp.end_time(), false)),
        FluidStopReason::ReachedOne => Ok(b.finish(fp.end_time(), true)),
        FluidStopReason::HitSigma => {
            let arrived = b.current_sigma();
            let done = match stop {
                StopCriterion::HitSigma(m) => arrived <= m,
                _ => false,
            };
            if done {
                Ok(b.finish(fp.end_time(), arrived == 1))
            } else {
                let mut rng = stream_rng(seed, 0);
                let (end_time, absorbed) = run_exact(&mut b, c, stop, &mut rng);
                Ok(b.finish(end_time, absorbed))
            }
        }
    }
}
