//! Tau-leaping acceleration: Poisson event counts per channel over steps
//! chosen so the expected relative change of every type count and of the
//! total rate stays below a tolerance. Falls through to the exact simulator
//! once σ reaches the configured floor.

use crate::error::{Error, Result};
use crate::model::{victim_rates_counts, BlockState, RateMatrix};
use crate::rng::{stream_rng, SimRng};
use crate::sim::exact::run_exact;
use crate::sim::trajectory::{PathMode, StopCriterion, TrajBuilder, Trajectory};
use rand::Rng;
use rand_distr::Poisson;

const MAX_HALVINGS: u32 = 20;

pub fn simulate_tau_leap(
    c: &RateMatrix,
    n0: &BlockState,
    stop: StopCriterion,
    seed: u64,
    eps: f64,
    sigma_floor: u64,
) -> Result<Trajectory> {
    let mut rng = stream_rng(seed, 0);
    simulate_tau_leap_rng(c, n0, stop, &mut rng, eps, sigma_floor)
}

pub fn simulate_tau_leap_rng(
    c: &RateMatrix,
    n0: &BlockState,
    stop: StopCriterion,
    rng: &mut SimRng,
    eps: f64,
    sigma_floor: u64,
) -> Result<Trajectory> {
    stop.validate()?;
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "eps must be in (0, 0.1], got {eps}"
        )));
    }
    if sigma_floor < 2 {
        return Err(Error::InvalidArgument("sigma_floor must be >= 2".into()));
    }

    let k = c.k();
    let mut b = TrajBuilder::new(k, PathMode::TauLeap, n0.counts());
    let mut counts = n0.counts().to_vec();
    let mut sigma = n0.sigma();
    let mut t = 0.0f64;
    let mut clock = 0.0f64;
    let mut victim = vec![0.0f64; k];
    let mut drawn = vec![0u64; k];
    let mut within = vec![false; k];

    let target_m = match stop {
        StopCriterion::HitSigma(m) => m,
        _ => 1,
    };

    'leap: while sigma > sigma_floor && sigma > target_m {
        victim_rates_counts(c, &counts, &mut victim);
        let total: f64 = victim.iter().sum();
        debug_assert!(total > 0.0);

        // Expected relative change of each count: D_j·Δt ≤ eps·n_j.
        let mut dt = f64::INFINITY;
        for j in 0..k {
            if victim[j] > 0.0 {
                dt = dt.min(eps * counts[j] as f64 / victim[j]);
            }
        }
        // Expected relative change of the total rate, via the exact
        // per-event increment of the quadratic λ: a victim of type j shifts
        // λ by −Σ_{i≠j}(C_ij + C_ji)n_i − C_jj(n_j − 1).
        let mut rate_drift = 0.0;
        for j in 0..k {
            if victim[j] == 0.0 {
                continue;
            }
            let mut slope = -c.get(j, j) * (counts[j] as f64 - 1.0);
            for i in 0..k {
                if i != j {
                    slope -= (c.get(i, j) + c.get(j, i)) * counts[i] as f64;
                }
            }
            rate_drift += slope * victim[j];
        }
        if rate_drift.abs() > 0.0 {
            dt = dt.min(eps * total / rate_drift.abs());
        }
        // Do not leap past the hitting target in expectation.
        let gap = (sigma - target_m) as f64;
        dt = dt.min(0.8 * gap.max(1.0) / total);

        let mut time_capped = false;
        if let StopCriterion::MaxTime(t_max) = stop {
            if t + dt >= t_max {
                dt = t_max - t;
                time_capped = true;
            }
        }
        if !(dt > 0.0) {
            break;
        }

        let mut halvings = 0u32;
        loop {
            let mut events_total = 0u64;
            drawn.iter_mut().for_each(|d| *d = 0);
            within.iter_mut().for_each(|w| *w = false);
            for i in 0..k {
                let ni = counts[i] as f64;
                for j in 0..k {
                    let rate = if i == j {
                        c.get(i, i) * ni * (ni - 1.0) / 2.0
                    } else {
                        c.get(i, j) * ni * counts[j] as f64
                    };
                    let mean = rate * dt;
                    if mean <= 0.0 {
                        continue;
                    }
                    let x = rng.sample(Poisson::new(mean).expect("positive finite mean")) as u64;
                    if x > 0 {
                        drawn[j] += x;
                        events_total += x;
                        if i == j {
                            within[j] = true;
                        }
                    }
                }
            }
            // Feasibility: victims fit the available blocks (a within-type
            // cascade always leaves one block standing), and the leap does
            // not jump past the hitting target.
            let mut feasible = events_total <= sigma - target_m;
            for j in 0..k {
                let cap = if within[j] {
                    counts[j].saturating_sub(1)
                } else {
                    counts[j]
                };
                if drawn[j] > cap {
                    feasible = false;
                    break;
                }
            }
            if feasible {
                for j in 0..k {
                    counts[j] -= drawn[j];
                }
                let sigma_new = sigma - events_total;
                t += dt;
                clock += 0.5 * (sigma + sigma_new) as f64 * dt;
                sigma = sigma_new;
                b.mark_coarse();
                b.push(t, &counts, sigma, clock);
                if time_capped {
                    return Ok(b.finish(t, sigma == 1));
                }
                continue 'leap;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::LeapOvershoot {
                    halvings: MAX_HALVINGS,
                    sigma,
                });
            }
            dt /= 2.0;
            time_capped = false;
        }
    }

    // Exact tail below the floor (or down to the hitting target).
    let (end_time, absorbed) = run_exact(&mut b, c, stop, rng);
    Ok(b.finish(end_time, absorbed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::sim::exact::simulate_exact;

    #[test]
    fn floor_at_start_is_pure_fallthrough() {
        // With the floor at or above σ(0) the leap phase never runs and the
        // result is bit-identical to the exact simulator with the same seed.
        let c = instances::demo_rates();
        let n0 = BlockState::new(vec![40, 35, 25]).unwrap();
        let leap = simulate_tau_leap(&c, &n0, StopCriterion::Absorb, 9, 0.05, 200).unwrap();
        let exact = simulate_exact(&c, &n0, StopCriterion::Absorb, 9).unwrap();
        assert_eq!(leap.times(), exact.times());
        assert_eq!(leap.final_counts(), exact.final_counts());
        assert!(leap.full_events());
    }

    #[test]
    fn sigma_decreases_by_drawn_event_counts() {
        let c = instances::demo_rates();
        let n0 = BlockState::new(vec![4000, 3000, 3000]).unwrap();
        let traj =
            simulate_tau_leap(&c, &n0, StopCriterion::HitSigma(100), 42, 0.05, 500).unwrap();
        assert!(!traj.full_events());
        for i in 1..traj.len() {
            assert!(traj.sigma(i) <= traj.sigma(i - 1));
            assert!(traj.time(i) > traj.time(i - 1));
        }
        assert_eq!(traj.final_sigma(), 100);
    }

    #[test]
    fn reaches_large_targets_quickly() {
        let c = instances::demo_rates();
        let n0 = BlockState::new(vec![400_000, 300_000, 300_000]).unwrap();
        let traj =
            simulate_tau_leap(&c, &n0, StopCriterion::HitSigma(10_000), 4, 0.05, 2_000).unwrap();
        assert_eq!(traj.final_sigma(), 10_000);
        // Coarse: far fewer samples than events.
        assert!(traj.len() < 5_000, "{} samples", traj.len());
    }

    #[test]
    fn rejects_bad_tolerances() {
        let c = instances::demo_rates();
        let n0 = BlockState::new(vec![10, 10, 10]).unwrap();
        assert!(simulate_tau_leap(&c, &n0, StopCriterion::Absorb, 1, 0.0, 10).is_err());
        assert!(simulate_tau_leap(&c, &n0, StopCriterion::Absorb, 1, 0.2, 10).is_err());
        assert!(simulate_tau_leap(&c, &n0, StopCriterion::Absorb, 1, 0.05, 1).is_err());
    }
}
