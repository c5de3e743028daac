//! Piecewise-constant paths of block states with exact event times and the
//! running clock integral ∫σ ds.

use crate::error::{Error, Result};
use crate::model::BlockState;
use crate::simplex::SimplexPoint;

/// When a simulation stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCriterion {
    /// Stop on first entry to total block count m (γ_m).
    HitSigma(u64),
    /// Stop at wall-clock time t.
    MaxTime(f64),
    /// Run until a single block remains (γ₁).
    Absorb,
}

impl StopCriterion {
    pub fn validate(&self) -> Result<()> {
        match self {
            StopCriterion::HitSigma(m) if *m < 1 => {
                Err(Error::InvalidArgument("hit_sigma target must be >= 1".into()))
            }
            StopCriterion::MaxTime(t) if !(*t >= 0.0) => {
                Err(Error::InvalidArgument("max_time must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Which machinery produced a trajectory. Exact paths are event-resolved
/// (σ drops by exactly 1 per sample); leap and hybrid paths are coarse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    Exact,
    TauLeap,
    Hybrid,
}

/// A simulated path: strictly increasing sample times, the state holding
/// from each sample time (right-continuous), and the cumulative clock
/// ∫₀ᵗ σ(u) du at each sample time. Sample 0 is the initial state at t = 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    k: usize,
    times: Vec<f64>,
    sigmas: Vec<u64>,
    counts: Vec<u64>,
    clock: Vec<f64>,
    end_time: f64,
    mode: PathMode,
    full_events: bool,
    absorbed: bool,
}

impl Trajectory {
    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of samples (events + 1 in exact mode).
    #[inline]
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    #[inline]
    pub fn sigma(&self, i: usize) -> u64 {
        self.sigmas[i]
    }

    #[inline]
    pub fn counts(&self, i: usize) -> &[u64] {
        &self.counts[i * self.k..(i + 1) * self.k]
    }

    /// Cumulative ∫σ ds at sample i.
    #[inline]
    pub fn clock_at(&self, i: usize) -> f64 {
        self.clock[i]
    }

    pub fn frequencies(&self, i: usize) -> SimplexPoint {
        SimplexPoint::from_counts(self.counts(i))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn initial_state(&self) -> BlockState {
        BlockState::new(self.counts(0).to_vec()).expect("stored state valid")
    }

    pub fn final_counts(&self) -> &[u64] {
        self.counts(self.len() - 1)
    }

    pub fn final_sigma(&self) -> u64 {
        self.sigmas[self.len() - 1]
    }

    /// Trajectory end: the stop time (≥ the last sample time when a
    /// max-time stop cut a holding interval short).
    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// True when the path reached a single block (γ₁ = `end_time`).
    pub fn absorbed(&self) -> bool {
        self.absorbed
    }

    pub fn mode(&self) -> PathMode {
        self.mode
    }

    /// True when every σ-decrement is a recorded sample, which exact-path
    /// analyses (compensator, martingale residual) require.
    pub fn full_events(&self) -> bool {
        self.full_events
    }

    pub fn events(&self) -> usize {
        self.len() - 1
    }

    /// Index of the sample holding at time t (right-continuous lookup).
    pub fn index_at_time(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// First sample index with σ ≤ m; `None` if the path starts below… never:
    /// returns `None` when m exceeds σ(0) or the path stopped above m.
    pub fn hitting_index(&self, m: u64) -> Option<usize> {
        if m > self.sigmas[0] {
            return None;
        }
        // σ is non-increasing along samples: binary search the crossing.
        let mut lo = 0usize;
        let mut hi = self.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.sigmas[mid] <= m {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        if lo < self.len() {
            Some(lo)
        } else {
            None
        }
    }

    /// First time σ(t) reaches m (exactly m on exact paths; first recorded
    /// level ≤ m on coarse paths). `None` when the path never gets there.
    pub fn hitting_time(&self, m: u64) -> Option<f64> {
        self.hitting_index(m).map(|i| self.times[i])
    }
}

/// Incremental builder shared by the simulators.
pub(crate) struct TrajBuilder {
    pub k: usize,
    pub times: Vec<f64>,
    pub sigmas: Vec<u64>,
    pub counts: Vec<u64>,
    pub clock: Vec<f64>,
    mode: PathMode,
    full_events: bool,
}

impl TrajBuilder {
    pub fn new(k: usize, mode: PathMode, initial: &[u64]) -> Self {
        let sigma: u64 = initial.iter().sum();
        Self {
            k,
            times: vec![0.0],
            sigmas: vec![sigma],
            counts: initial.to_vec(),
            clock: vec![0.0],
            mode,
            full_events: mode == PathMode::Exact,
        }
    }

    #[inline]
    pub fn push(&mut self, t: f64, counts: &[u64], sigma: u64, clock: f64) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.sigmas.push(sigma);
        self.counts.extend_from_slice(counts);
        self.clock.push(clock);
    }

    pub fn mark_coarse(&mut self) {
        self.full_events = false;
    }

    pub fn current_counts(&self) -> &[u64] {
        &self.counts[(self.times.len() - 1) * self.k..]
    }

    pub fn current_sigma(&self) -> u64 {
        *self.sigmas.last().unwrap()
    }

    pub fn current_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn current_clock(&self) -> f64 {
        *self.clock.last().unwrap()
    }

    pub fn finish(self, end_time: f64, absorbed: bool) -> Trajectory {
        Trajectory {
            k: self.k,
            times: self.times,
            sigmas: self.sigmas,
            counts: self.counts,
            clock: self.clock,
            end_time,
            mode: self.mode,
            full_events: self.full_events,
            absorbed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Trajectory {
        let mut b = TrajBuilder::new(2, PathMode::Exact, &[2, 1]);
        b.push(0.5, &[1, 1], 2, 1.5);
        b.push(1.25, &[1, 0], 1, 3.0);
        b.finish(1.25, true)
    }

    #[test]
    fn lookup_is_right_continuous() {
        let t = toy();
        assert_eq!(t.index_at_time(0.0), 0);
        assert_eq!(t.index_at_time(0.49), 0);
        assert_eq!(t.index_at_time(0.5), 1);
        assert_eq!(t.index_at_time(10.0), 2);
    }

    #[test]
    fn hitting_times_follow_skip_free_levels() {
        let t = toy();
        assert_eq!(t.hitting_time(3), Some(0.0));
        assert_eq!(t.hitting_time(2), Some(0.5));
        assert_eq!(t.hitting_time(1), Some(1.25));
        assert_eq!(t.hitting_time(4), None);
    }
}
