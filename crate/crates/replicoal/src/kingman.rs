//! Single-type reference death chain: from level n, the next merger arrives
//! at rate c·binom(n, 2) and drops the level by one. This is the comparison
//! chain for the multi-type model (its per-pair rate brackets the multi-type
//! total rate) and it has closed-form hitting-time moments to test against.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};
use crate::sim::StopCriterion;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KingmanChain {
    pub rate_c: f64,
    pub n0: u64,
}

impl KingmanChain {
    pub fn new(rate_c: f64, n0: u64) -> Result<Self> {
        if !(rate_c > 0.0) || !rate_c.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pair rate must be positive and finite, got {rate_c}"
            )));
        }
        if n0 < 1 {
            return Err(Error::InvalidArgument("n0 must be >= 1".into()));
        }
        Ok(Self { rate_c, n0 })
    }

    #[inline]
    fn holding_rate(&self, n: u64) -> f64 {
        let nf = n as f64;
        self.rate_c * nf * (nf - 1.0) / 2.0
    }
}

/// Death-chain path: event i brings the level to `n0 − 1 − i` at `times[i]`.
#[derive(Debug, Clone)]
pub struct KingmanPath {
    pub n0: u64,
    times: Vec<f64>,
    end_time: f64,
}

impl KingmanPath {
    pub fn events(&self) -> usize {
        self.times.len()
    }

    pub fn final_level(&self) -> u64 {
        self.n0 - self.times.len() as u64
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// β_m: first time the level reaches m. Zero at the start level, `None`
    /// above it or below the final level.
    pub fn beta(&self, m: u64) -> Option<f64> {
        if m > self.n0 {
            return None;
        }
        if m == self.n0 {
            return Some(0.0);
        }
        let idx = (self.n0 - m) as usize - 1;
        self.times.get(idx).copied()
    }

    /// Level held at time t (right-continuous).
    pub fn level_at(&self, t: f64) -> u64 {
        let fallen = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        self.n0 - fallen as u64
    }
}

pub fn simulate_kingman(chain: &KingmanChain, stop: StopCriterion, seed: u64) -> Result<KingmanPath> {
    let mut rng = stream_rng(seed, 0);
    simulate_kingman_rng(chain, stop, &mut rng)
}

pub fn simulate_kingman_rng(
    chain: &KingmanChain,
    stop: StopCriterion,
    rng: &mut SimRng,
) -> Result<KingmanPath> {
    stop.validate()?;
    let mut level = chain.n0;
    let mut t = 0.0f64;
    let mut times = Vec::new();
    loop {
        match stop {
            StopCriterion::HitSigma(m) if level <= m => break,
            _ => {}
        }
        if level == 1 {
            break;
        }
        let dt: f64 = rng.sample::<f64, _>(Exp1) / chain.holding_rate(level);
        if let StopCriterion::MaxTime(t_max) = stop {
            if t + dt > t_max {
                t = t_max;
                break;
            }
        }
        t += dt;
        level -= 1;
        times.push(t);
    }
    Ok(KingmanPath {
        n0: chain.n0,
        times,
        end_time: t,
    })
}

/// Streaming β_m sample without storing the path.
pub fn beta_sample(chain: &KingmanChain, m: u64, rng: &mut SimRng) -> Result<f64> {
    if m < 1 || m >= chain.n0 {
        return Err(Error::InvalidArgument(format!(
            "beta level m={m} outside [1, n0)"
        )));
    }
    let mut t = 0.0f64;
    let mut level = chain.n0;
    while level > m {
        t += rng.sample::<f64, _>(Exp1) / chain.holding_rate(level);
        level -= 1;
    }
    Ok(t)
}

/// Streaming level-at-time sample without storing the path.
pub fn level_sample(chain: &KingmanChain, t_target: f64, rng: &mut SimRng) -> u64 {
    let mut t = 0.0f64;
    let mut level = chain.n0;
    while level > 1 {
        t += rng.sample::<f64, _>(Exp1) / chain.holding_rate(level);
        if t > t_target {
            return level;
        }
        level -= 1;
    }
    level
}

/// E[β_m] from level n0: Σ_{j=m+1}^{n0} 2/(c·j(j−1)), which telescopes to
/// (2/c)(1/m − 1/n0).
pub fn expected_beta(chain: &KingmanChain, m: u64) -> Result<f64> {
    if m < 1 || m >= chain.n0 {
        return Err(Error::InvalidArgument(format!(
            "beta level m={m} outside [1, n0)"
        )));
    }
    Ok(2.0 / chain.rate_c * (1.0 / m as f64 - 1.0 / chain.n0 as f64))
}

/// One Monte Carlo estimate of the coming-down-from-infinity constant:
/// ε·ν(ε) tends to 2/c for small ε and large n0.
#[derive(Debug, Clone)]
pub struct CdiEstimate {
    pub eps: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_runs: usize,
}

/// Per-ε ensemble means of ε·ν(ε) from `chain.n0` blocks.
pub fn coming_down_constant(
    chain: &KingmanChain,
    eps_list: &[f64],
    n_runs: usize,
    seed: u64,
) -> Result<Vec<CdiEstimate>> {
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("eps values must be positive".into()));
    }
    let mut out = Vec::with_capacity(eps_list.len());
    for (j, &eps) in eps_list.iter().enumerate() {
        let samples: Vec<f64> = (0..n_runs as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, (j as u64) << 32 | i);
                eps * level_sample(chain, eps, &mut rng) as f64
            })
            .collect();
        let (mean, stderr) = crate::stats::mean_stderr(&samples);
        out.push(CdiEstimate {
            eps,
            mean,
            stderr,
            n_runs,
        });
    }
    Ok(out)
}
