//! Event-driven exact simulation (Gillespie direct method): the holding time
//! in state n is exponential with rate λ(n), and the merger channel is drawn
//! with probability proportional to its rate, in fixed row-major
//! (survivor-major) order so that selection is reproducible.

use crate::error::Result;
use crate::model::{BlockState, RateMatrix};
use crate::rng::{stream_rng, SimRng};
use crate::sim::trajectory::{PathMode, StopCriterion, TrajBuilder, Trajectory};
use rand::Rng;
use rand_distr::Exp1;

/// Simulates the coalescent from `n0` until `stop`, deterministically in
/// `seed` (stream 0 of the seeded generator).
pub fn simulate_exact(
    c: &RateMatrix,
    n0: &BlockState,
    stop: StopCriterion,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = stream_rng(seed, 0);
    simulate_exact_rng(c, n0, stop, &mut rng)
}

/// Same as [`simulate_exact`] with a caller-supplied generator; ensembles
/// pass stream (master seed, run index).
pub fn simulate_exact_rng(
    c: &RateMatrix,
    n0: &BlockState,
    stop: StopCriterion,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    stop.validate()?;
    let mut b = TrajBuilder::new(c.k(), PathMode::Exact, n0.counts());
    let (end_time, absorbed) = run_exact(&mut b, c, stop, rng);
    Ok(b.finish(end_time, absorbed))
}

/// Advances the builder's current state event by event until `stop`.
/// Returns (end time, absorbed). Shared with the hybrid and tau-leap
/// simulators, which hand over mid-path.
pub(crate) fn run_exact(
    b: &mut TrajBuilder,
    c: &RateMatrix,
    stop: StopCriterion,
    rng: &mut SimRng,
) -> (f64, bool) {
    let k = c.k();
    let mut counts = b.current_counts().to_vec();
    let mut sigma = b.current_sigma();
    let mut t = b.current_time();
    let mut clock = b.current_clock();
    let mut rates = vec![0.0f64; k * k];

    loop {
        if let StopCriterion::HitSigma(m) = stop {
            if sigma <= m {
                return (t, sigma == 1);
            }
        }
        if sigma == 1 {
            return (t, true);
        }

        let mut total = 0.0;
        for i in 0..k {
            let ni = counts[i] as f64;
            for j in 0..k {
                let r = if i == j {
                    c.get(i, i) * ni * (ni - 1.0) / 2.0
                } else {
                    c.get(i, j) * ni * counts[j] as f64
                };
                rates[i * k + j] = r;
                total += r;
            }
        }
        debug_assert!(total > 0.0);

        let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
        if let StopCriterion::MaxTime(t_max) = stop {
            if t + dt > t_max {
                return (t_max, false);
            }
        }
        t += dt;
        clock += sigma as f64 * dt;

        // Channel selection by a single uniform over the row-major prefix sums.
        let target = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut victim = usize::MAX;
        for (idx, &r) in rates.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            cum += r;
            if target < cum {
                victim = idx % k;
                break;
            }
        }
        if victim == usize::MAX {
            // Roundoff pushed the target past the last positive rate.
            victim = rates
                .iter()
                .enumerate()
                .rev()
                .find(|(_, r)| **r > 0.0)
                .map(|(idx, _)| idx % k)
                .expect("total rate positive");
        }

        counts[victim] -= 1;
        sigma -= 1;
        b.push(t, &counts, sigma, clock);
    }
}
