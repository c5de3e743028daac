//! Hitting laws by exact dynamic programming, the associated h-function,
//! and the time-reversed (dual) transition rates.
//!
//! σ decreases by exactly one per jump, so the states reachable from a start
//! η form a level DAG graded by σ. Pushing probability mass level by level
//! gives the exact law μ_ℓ of the state first entered at each level ℓ. The
//! h-function h(n) = μ_{‖n‖₁}(n)/q_n (expected occupation time of n, with
//! q_n the holding rate) defines upward rates q̂_{n,n'} = (h(n')/h(n))·q_{n',n}
//! whose total holding rate satisfies q̂_n = q_n on interior levels — an
//! exact algebraic fingerprint of the time reversal, checkable to roundoff.

use crate::error::{Error, Result};
use crate::model::{victim_rates_counts, BlockState, RateMatrix};
use crate::rng::stream_rng;
use crate::sim::{simulate_exact_rng, StopCriterion};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Default cap on the number of states held per level.
pub const DEFAULT_LEVEL_BUDGET: usize = 100_000;

/// Probability distribution over the states of one level ‖n‖₁ = `level`.
/// Keys are count vectors in lexicographic order.
#[derive(Debug, Clone)]
pub struct LevelDistribution {
    pub level: u64,
    pub probs: BTreeMap<Vec<u64>, f64>,
}

impl LevelDistribution {
    pub fn total_mass(&self) -> f64 {
        self.probs.values().sum()
    }
}

/// Exact hitting laws μ_ℓ for every level from ‖η‖₁ down to `lowest`
/// (inclusive), as a forward recursion over the level DAG of the embedded
/// jump chain. Index 0 of the result is the start level (a point mass at η).
pub fn hitting_law_cascade(
    c: &RateMatrix,
    eta: &BlockState,
    lowest: u64,
    budget: usize,
) -> Result<Vec<LevelDistribution>> {
    let k = c.k();
    if eta.k() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: eta.k(),
        });
    }
    let sigma0 = eta.sigma();
    if lowest < 1 || lowest > sigma0 {
        return Err(Error::InvalidArgument(format!(
            "lowest level {lowest} outside [1, {sigma0}]"
        )));
    }

    let mut levels = Vec::with_capacity((sigma0 - lowest + 1) as usize);
    let mut current: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    current.insert(eta.counts().to_vec(), 1.0);
    levels.push(LevelDistribution {
        level: sigma0,
        probs: current.clone(),
    });

    let mut victim = vec![0.0f64; k];
    let mut level = sigma0;
    while level > lowest {
        let mut next: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        for (counts, &p) in &current {
            victim_rates_counts(c, counts, &mut victim);
            let total: f64 = victim.iter().sum();
            debug_assert!(total > 0.0, "non-absorbing level must have positive rate");
            for j in 0..k {
                if victim[j] == 0.0 {
                    continue;
                }
                let mut child = counts.clone();
                child[j] -= 1;
                *next.entry(child).or_insert(0.0) += p * victim[j] / total;
            }
            if next.len() > budget {
                return Err(Error::BudgetExceeded(format!(
                    "level {} holds more than {budget} states",
                    level - 1
                )));
            }
        }
        level -= 1;
        levels.push(LevelDistribution {
            level,
            probs: next.clone(),
        });
        current = next;
    }
    Ok(levels)
}

/// The hitting law at a single level m < ‖η‖₁.
pub fn exact_hitting_law(
    c: &RateMatrix,
    eta: &BlockState,
    m: u64,
    budget: usize,
) -> Result<LevelDistribution> {
    if m >= eta.sigma() {
        return Err(Error::InvalidArgument(format!(
            "hitting level m={m} must be below the start level {}",
            eta.sigma()
        )));
    }
    let cascade = hitting_law_cascade(c, eta, m, budget)?;
    Ok(cascade.into_iter().last().expect("cascade non-empty"))
}

/// h(n) = μ_{‖n‖₁}(n)/q_n on levels ≥ 2 (level-1 states are absorbing, their
/// occupation time is infinite and they carry no dual rate). States of zero
/// hitting probability are omitted: h = 0 there, outside the dual's support.
#[derive(Debug, Clone)]
pub struct HFunction {
    pub values: BTreeMap<Vec<u64>, f64>,
    pub top_level: u64,
    pub lowest_level: u64,
}

impl HFunction {
    pub fn get(&self, counts: &[u64]) -> Option<f64> {
        self.values.get(counts).copied()
    }
}

pub fn h_from_law(laws: &[LevelDistribution], c: &RateMatrix) -> Result<HFunction> {
    if laws.is_empty() {
        return Err(Error::InvalidArgument("no level distributions given".into()));
    }
    let k = c.k();
    let mut values = BTreeMap::new();
    let mut top = 0u64;
    let mut lowest = u64::MAX;
    let mut victim = vec![0.0f64; k];
    for law in laws {
        if law.level < 2 {
            continue;
        }
        top = top.max(law.level);
        lowest = lowest.min(law.level);
        for (counts, &mu) in &law.probs {
            if mu <= 0.0 {
                continue;
            }
            victim_rates_counts(c, counts, &mut victim);
            let q_n: f64 = victim.iter().sum();
            values.insert(counts.clone(), mu / q_n);
        }
    }
    Ok(HFunction {
        values,
        top_level: top,
        lowest_level: lowest,
    })
}

/// Upward rates of the reversed chain: for n ≺ n' (one level apart),
/// q̂_{n,n'} = (h(n')/h(n))·q_{n',n}, on the support of h.
pub fn dual_rates(
    h: &HFunction,
    c: &RateMatrix,
) -> BTreeMap<(Vec<u64>, Vec<u64>), f64> {
    let k = c.k();
    let mut out = BTreeMap::new();
    let mut victim = vec![0.0f64; k];
    for (n, &hn) in &h.values {
        let level: u64 = n.iter().sum();
        if level >= h.top_level {
            continue;
        }
        for j in 0..k {
            let mut parent = n.clone();
            parent[j] += 1;
            if let Some(hp) = h.get(&parent) {
                victim_rates_counts(c, &parent, &mut victim);
                // q_{n', n} with n = n' − e_j is the type-j loss rate of n'.
                let q_down = victim[j];
                if q_down > 0.0 {
                    out.insert((n.clone(), parent), hp / hn * q_down);
                }
            }
        }
    }
    out
}

/// Report of the holding-rate identity q̂_n = q_n and of the one-step
/// consistency relation h(n) = Σ_{n ≺ n'} h(n')·q_{n',n}/q_n, checked on
/// every positive-probability state in the interior levels.
#[derive(Debug, Clone)]
pub struct QIdentityReport {
    pub max_rel_err: f64,
    pub consistency_max_rel_err: f64,
    pub states_checked: usize,
    pub top_level: u64,
    pub lowest_level: u64,
}

/// Computes the cascade from η down to `m`, builds h, and verifies both
/// identities on levels max(2, m) .. ‖η‖₁ − 1.
pub fn verify_q_identity(
    c: &RateMatrix,
    eta: &BlockState,
    m: u64,
    budget: usize,
) -> Result<QIdentityReport> {
    let sigma0 = eta.sigma();
    if sigma0 < 3 {
        return Err(Error::InvalidArgument(
            "start level must be >= 3 to have interior levels".into(),
        ));
    }
    let lowest_check = m.max(2);
    if lowest_check >= sigma0 {
        return Err(Error::InvalidArgument(format!(
            "no interior levels between m={m} and start {sigma0}"
        )));
    }
    let cascade = hitting_law_cascade(c, eta, lowest_check, budget)?;
    let h = h_from_law(&cascade, c)?;
    let qhat = dual_rates(&h, c);

    let k = c.k();
    let mut victim = vec![0.0f64; k];
    let mut max_rel_err = 0.0f64;
    let mut consistency_max = 0.0f64;
    let mut checked = 0usize;

    for law in &cascade {
        if law.level < lowest_check || law.level >= sigma0 {
            continue;
        }
        for (n, &mu) in &law.probs {
            if mu <= 0.0 {
                continue;
            }
            victim_rates_counts(c, n, &mut victim);
            let q_n: f64 = victim.iter().sum();
            let hn = h.get(n).expect("state in support");

            let mut qhat_n = 0.0;
            let mut flow = 0.0;
            for j in 0..k {
                let mut parent = n.clone();
                parent[j] += 1;
                if let Some(&rate) = qhat.get(&(n.clone(), parent.clone())) {
                    qhat_n += rate;
                }
                if let Some(hp) = h.get(&parent) {
                    victim_rates_counts(c, &parent, &mut victim);
                    flow += hp * victim[j];
                }
            }
            max_rel_err = max_rel_err.max((qhat_n - q_n).abs() / q_n);
            consistency_max = consistency_max.max((hn - flow / q_n).abs() / hn);
            checked += 1;
        }
    }
    Ok(QIdentityReport {
        max_rel_err,
        consistency_max_rel_err: consistency_max,
        states_checked: checked,
        top_level: sigma0,
        lowest_level: lowest_check,
    })
}

/// Empirical hitting law at level m over `n_runs` exact simulations.
pub fn mc_hitting_law(
    c: &RateMatrix,
    eta: &BlockState,
    m: u64,
    n_runs: usize,
    seed: u64,
) -> Result<BTreeMap<Vec<u64>, f64>> {
    if m >= eta.sigma() || m < 1 {
        return Err(Error::InvalidArgument(format!(
            "hitting level m={m} outside [1, {})",
            eta.sigma()
        )));
    }
    let counts: Vec<BTreeMap<Vec<u64>, u64>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let traj = simulate_exact_rng(c, eta, StopCriterion::HitSigma(m), &mut rng)
                .expect("valid inputs");
            let idx = traj.hitting_index(m).expect("skip-free path reaches m");
            let mut map = BTreeMap::new();
            map.insert(traj.counts(idx).to_vec(), 1u64);
            map
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (key, v) in b {
                *a.entry(key).or_insert(0) += v;
            }
            a
        });
    let total = n_runs as f64;
    Ok(counts
        .into_iter()
        .map(|(key, v)| (key, v as f64 / total))
        .collect())
}
