//! Core model: the k×k merger-rate matrix, integer block states, merge
//! channels with their rates, and the payoff matrix induced by the rates.
//!
//! Blocks carry one of k types. A specific pair of type-i blocks merges at
//! rate `C[i][i]` (producing one type-i block); a specific (type-i, type-j)
//! pair merges into a type-i block at rate `C[i][j]`. The total block count
//! σ is skip-free decreasing: every merger removes exactly one block, of the
//! channel's victim type.
//!
//! Counts are 64-bit integers (σ up to 10^15 is in range); rate products of
//! order σ² are computed in `f64`.

use crate::error::{Error, Result};
use crate::simplex::SimplexPoint;

/// Strictly positive k×k merger-rate matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl RateMatrix {
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidRateMatrix("k must be >= 1".into()));
        }
        if entries.len() != k * k {
            return Err(Error::InvalidRateMatrix(format!(
                "expected {} entries for k={k}, got {}",
                k * k,
                entries.len()
            )));
        }
        if let Some(c) = entries.iter().find(|c| !c.is_finite() || **c <= 0.0) {
            return Err(Error::InvalidRateMatrix(format!(
                "entries must be finite and strictly positive, found {c}"
            )));
        }
        Ok(Self { k, entries })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// min over all entries (the constant written C̲).
    pub fn min_entry(&self) -> f64 {
        self.entries.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }

    /// max over the diagonal (the constant written C̄).
    pub fn max_diag(&self) -> f64 {
        (0..self.k).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    /// Largest total merger rate of any specific unordered block pair:
    /// a within-type pair of type i merges at `C[i][i]`, a mixed {i,j} pair
    /// at `C[i][j] + C[j][i]`. Every state satisfies
    /// `total_rate(n) <= dominating_pair_rate() * binom(sigma, 2)`,
    /// which is the rate of the dominating single-type death chain.
    pub fn dominating_pair_rate(&self) -> f64 {
        let mut m = self.max_diag();
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                m = m.max(self.get(i, j) + self.get(j, i));
            }
        }
        m
    }

    /// Rate of the merger channel `ch` in state `n`: within-type (i,i) pairs
    /// contribute `C[i][i]·n_i(n_i−1)/2`, cross-type (i,j) pairs
    /// `C[i][j]·n_i·n_j`. Zero when the needed blocks are absent.
    pub fn channel_rate(&self, n: &BlockState, ch: MergeChannel) -> Result<f64> {
        if ch.survivor >= self.k || ch.victim >= self.k {
            return Err(Error::IndexOutOfRange(format!(
                "channel ({}, {}) for k={}",
                ch.survivor, ch.victim, self.k
            )));
        }
        if n.k() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: n.k(),
            });
        }
        Ok(channel_rate_counts(self, n.counts(), ch))
    }

    /// Total merger rate λ(n), summing all k² channels. Zero iff σ = 1.
    pub fn total_rate(&self, n: &BlockState) -> f64 {
        total_rate_counts(self, n.counts())
    }

    /// Rate at which each type loses a block: component j sums the channels
    /// whose victim is j (the within-type channel (j,j) plus every (i,j)).
    pub fn victim_rates(&self, n: &BlockState) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        victim_rates_counts(self, n.counts(), &mut out);
        out
    }

    /// Lower coupling bound C̲·binom(σ,2) − ((C̄−C̲)/2)·σ, valid for every
    /// state with that σ.
    pub fn rate_lower_bound(&self, sigma: u64) -> f64 {
        let s = sigma as f64;
        let cmin = self.min_entry();
        let cbar = self.max_diag();
        cmin * s * (s - 1.0) / 2.0 - (cbar - cmin) / 2.0 * s
    }

    /// Upper coupling bound `dominating_pair_rate()·binom(σ,2)`.
    pub fn rate_upper_bound(&self, sigma: u64) -> f64 {
        let s = sigma as f64;
        self.dominating_pair_rate() * s * (s - 1.0) / 2.0
    }
}

/// Payoff matrix derived from the rates: `A[i][j] = −C[j][i]` off the
/// diagonal and `A[i][i] = −C[i][i]/2`. This is the unique placement of the
/// half-diagonal term for which the channel-sum total rate equals
/// `Σ_i (n_i·A_ii − n_i·[A n]_i)` identically.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    /// A payoff matrix not tied to any rate matrix (entries unrestricted).
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 || entries.len() != k * k {
            return Err(Error::InvalidPayoffMatrix(format!(
                "expected {} entries for k={k}, got {}",
                k * k,
                entries.len()
            )));
        }
        if entries.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPayoffMatrix("non-finite entry".into()));
        }
        Ok(Self { k, entries })
    }

    pub fn from_rates(c: &RateMatrix) -> Self {
        let k = c.k();
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                entries[i * k + j] = if i == j {
                    -c.get(i, i) / 2.0
                } else {
                    -c.get(j, i)
                };
            }
        }
        Self { k, entries }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.get(i, i)).collect()
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.mul_vec_into(x, &mut out);
        out
    }

    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.k);
        for i in 0..self.k {
            let row = &self.entries[i * self.k..(i + 1) * self.k];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// xᵀ A y.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.k {
            let row = &self.entries[i * self.k..(i + 1) * self.k];
            let ay: f64 = row.iter().zip(y).map(|(a, b)| a * b).sum();
            acc += x[i] * ay;
        }
        acc
    }
}

/// Free-function form of [`PayoffMatrix::from_rates`].
pub fn payoff_from_rates(c: &RateMatrix) -> PayoffMatrix {
    PayoffMatrix::from_rates(c)
}

/// A merger channel: the surviving type and the type losing a block.
/// `survivor == victim` is the within-type channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeChannel {
    pub survivor: usize,
    pub victim: usize,
}

impl MergeChannel {
    pub fn new(survivor: usize, victim: usize) -> Self {
        Self { survivor, victim }
    }
}

/// Integer type-count vector n with σ = ‖n‖₁ ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockState {
    counts: Vec<u64>,
}

impl BlockState {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidState("empty count vector".into()));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidState("at least one block required".into()));
        }
        Ok(Self { counts })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total block count σ = ‖n‖₁.
    #[inline]
    pub fn sigma(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Polar part r = n/σ.
    pub fn frequencies(&self) -> SimplexPoint {
        SimplexPoint::from_counts(&self.counts)
    }

    /// Applies a merger: the victim type loses one block, σ drops by one.
    /// Errors when the channel is infeasible in this state.
    pub fn apply_channel(&self, ch: MergeChannel) -> Result<BlockState> {
        if ch.survivor >= self.k() || ch.victim >= self.k() {
            return Err(Error::IndexOutOfRange(format!(
                "channel ({}, {}) for k={}",
                ch.survivor,
                ch.victim,
                self.k()
            )));
        }
        let feasible = if ch.survivor == ch.victim {
            self.counts[ch.victim] >= 2
        } else {
            self.counts[ch.survivor] >= 1 && self.counts[ch.victim] >= 1
        };
        if !feasible {
            return Err(Error::InfeasibleChannel(format!(
                "channel ({}, {}) in state {:?}",
                ch.survivor, ch.victim, self.counts
            )));
        }
        let mut counts = self.counts.clone();
        counts[ch.victim] -= 1;
        Ok(BlockState { counts })
    }
}

#[inline]
pub(crate) fn channel_rate_counts(c: &RateMatrix, counts: &[u64], ch: MergeChannel) -> f64 {
    let (i, j) = (ch.survivor, ch.victim);
    if i == j {
        let ni = counts[i] as f64;
        c.get(i, i) * ni * (ni - 1.0) / 2.0
    } else {
        c.get(i, j) * counts[i] as f64 * counts[j] as f64
    }
}

pub(crate) fn total_rate_counts(c: &RateMatrix, counts: &[u64]) -> f64 {
    let k = c.k();
    let mut acc = 0.0;
    for i in 0..k {
        let ni = counts[i] as f64;
        if ni == 0.0 {
            continue;
        }
        acc += c.get(i, i) * ni * (ni - 1.0) / 2.0;
        for j in 0..k {
            if j != i {
                acc += c.get(i, j) * ni * counts[j] as f64;
            }
        }
    }
    acc
}

/// Per-type block-loss rates, written into `out` (length k).
pub(crate) fn victim_rates_counts(c: &RateMatrix, counts: &[u64], out: &mut [f64]) {
    let k = c.k();
    for j in 0..k {
        let nj = counts[j] as f64;
        let mut dj = c.get(j, j) * nj * (nj - 1.0) / 2.0;
        for i in 0..k {
            if i != j {
                dj += c.get(i, j) * counts[i] as f64 * nj;
            }
        }
        out[j] = dj;
    }
}

/// Total rate via the payoff form `Σ_i (n_i·A_ii − n_i·[A n]_i)`.
/// Independent route used to cross-check [`RateMatrix::total_rate`].
pub fn total_rate_payoff_form(a: &PayoffMatrix, counts: &[u64]) -> f64 {
    let k = a.k();
    let nf: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let an = a.mul_vec(&nf);
    (0..k).map(|i| nf[i] * a.get(i, i) - nf[i] * an[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ones(k: usize) -> RateMatrix {
        RateMatrix::new(k, vec![1.0; k * k]).unwrap()
    }

    #[test]
    fn payoff_single_type() {
        let c = RateMatrix::new(1, vec![2.0]).unwrap();
        let a = PayoffMatrix::from_rates(&c);
        assert_eq!(a.entries(), &[-1.0]);
    }

    #[test]
    fn payoff_all_ones() {
        let a = PayoffMatrix::from_rates(&ones(2));
        assert_eq!(a.entries(), &[-0.5, -1.0, -1.0, -0.5]);
    }

    #[test]
    fn payoff_entries_negative_for_any_rates() {
        let c = RateMatrix::new(3, vec![2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        let a = PayoffMatrix::from_rates(&c);
        assert!(a.entries().iter().all(|&e| e < 0.0));
    }

    #[test]
    fn channel_rates_by_hand() {
        let c = ones(2);
        let n = BlockState::new(vec![2, 1]).unwrap();
        assert_eq!(c.channel_rate(&n, MergeChannel::new(0, 0)).unwrap(), 1.0);
        assert_eq!(c.channel_rate(&n, MergeChannel::new(0, 1)).unwrap(), 2.0);
        assert_eq!(c.channel_rate(&n, MergeChannel::new(1, 0)).unwrap(), 2.0);
        assert_eq!(c.channel_rate(&n, MergeChannel::new(1, 1)).unwrap(), 0.0);
        assert!(c.channel_rate(&n, MergeChannel::new(0, 2)).is_err());
    }

    #[test]
    fn channel_rate_zero_without_blocks() {
        let c = ones(2);
        let n = BlockState::new(vec![0, 3]).unwrap();
        assert_eq!(c.channel_rate(&n, MergeChannel::new(0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn total_rate_by_hand() {
        let c = ones(2);
        let n = BlockState::new(vec![2, 1]).unwrap();
        assert_eq!(c.total_rate(&n), 5.0);
    }

    #[test]
    fn absorbing_states_have_zero_rate() {
        let c = RateMatrix::new(3, vec![0.3; 9]).unwrap();
        for i in 0..3 {
            let mut counts = vec![0u64; 3];
            counts[i] = 1;
            let n = BlockState::new(counts).unwrap();
            assert_eq!(c.total_rate(&n), 0.0);
        }
    }

    #[test]
    fn total_rate_matches_channel_sum_and_payoff_form() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(7, 0);
        for _ in 0..200 {
            let k = rng.random_range(1..=6usize);
            let entries: Vec<f64> = (0..k * k).map(|_| rng.random_range(0.1..3.0)).collect();
            let c = RateMatrix::new(k, entries).unwrap();
            let counts: Vec<u64> = (0..k).map(|_| rng.random_range(0..=40u64)).collect();
            if counts.iter().all(|&x| x == 0) {
                continue;
            }
            let n = BlockState::new(counts).unwrap();
            let total = c.total_rate(&n);
            let mut channel_sum = 0.0;
            for i in 0..k {
                for j in 0..k {
                    channel_sum += c.channel_rate(&n, MergeChannel::new(i, j)).unwrap();
                }
            }
            let a_form = total_rate_payoff_form(&PayoffMatrix::from_rates(&c), n.counts());
            assert_relative_eq!(total, channel_sum, max_relative = 1e-12);
            assert_relative_eq!(total, a_form, max_relative = 1e-9);
        }
    }

    #[test]
    fn rate_bounds_hold_per_state() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, 0);
        for _ in 0..200 {
            let k = rng.random_range(1..=5usize);
            let entries: Vec<f64> = (0..k * k).map(|_| rng.random_range(0.2..4.0)).collect();
            let c = RateMatrix::new(k, entries).unwrap();
            let counts: Vec<u64> = (0..k).map(|_| rng.random_range(0..=100u64)).collect();
            if counts.iter().all(|&x| x == 0) {
                continue;
            }
            let n = BlockState::new(counts).unwrap();
            let total = c.total_rate(&n);
            let sigma = n.sigma();
            assert!(total <= c.rate_upper_bound(sigma) * (1.0 + 1e-12));
            assert!(total >= c.rate_lower_bound(sigma) - 1e-9);
        }
    }

    #[test]
    fn apply_channel_decrements_victim() {
        let n = BlockState::new(vec![2, 1]).unwrap();
        assert_eq!(
            n.apply_channel(MergeChannel::new(0, 0)).unwrap().counts(),
            &[1, 1]
        );
        assert_eq!(
            n.apply_channel(MergeChannel::new(0, 1)).unwrap().counts(),
            &[2, 0]
        );
        assert_eq!(
            n.apply_channel(MergeChannel::new(1, 0)).unwrap().counts(),
            &[1, 1]
        );
        // σ drops by exactly one in every case.
        for (i, j) in [(0, 0), (0, 1), (1, 0)] {
            let next = n.apply_channel(MergeChannel::new(i, j)).unwrap();
            assert_eq!(next.sigma(), n.sigma() - 1);
        }
    }

    #[test]
    fn apply_channel_rejects_infeasible() {
        let n = BlockState::new(vec![1, 0]).unwrap();
        assert!(n.apply_channel(MergeChannel::new(0, 0)).is_err());
        assert!(n.apply_channel(MergeChannel::new(0, 1)).is_err());
    }

    #[test]
    fn dominating_pair_rate_counts_both_cross_directions() {
        let c = ones(2);
        // A mixed pair merges at C12 + C21 = 2; state (2,1) has rate 5 which
        // exceeds max-entry * binom(3,2) = 3 but not 2 * binom(3,2) = 6.
        assert_eq!(c.dominating_pair_rate(), 2.0);
        let n = BlockState::new(vec![2, 1]).unwrap();
        assert!(c.total_rate(&n) <= c.rate_upper_bound(n.sigma()));
    }

    #[test]
    fn rejects_invalid_matrices_and_states() {
        assert!(RateMatrix::new(0, vec![]).is_err());
        assert!(RateMatrix::new(2, vec![1.0; 3]).is_err());
        assert!(RateMatrix::new(2, vec![1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(RateMatrix::new(1, vec![-1.0]).is_err());
        assert!(BlockState::new(vec![]).is_err());
        assert!(BlockState::new(vec![0, 0]).is_err());
    }
}
