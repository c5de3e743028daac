//! Canonical and random model instances used by examples, tests, and the CLI.

use crate::error::{Error, Result};
use crate::model::{BlockState, RateMatrix};
use crate::simplex::SimplexPoint;
use rand::Rng;

/// Circulant rate matrix: `C[i][j] = first_row[(j − i) mod k]`.
pub fn circulant(k: usize, first_row: &[f64]) -> Result<RateMatrix> {
    if first_row.len() != k {
        return Err(Error::InvalidRateMatrix(format!(
            "circulant row length {} != k={k}",
            first_row.len()
        )));
    }
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            entries[i * k + j] = first_row[(j + k - i) % k];
        }
    }
    RateMatrix::new(k, entries)
}

/// All entries equal to `v`.
pub fn uniform_rates(k: usize, v: f64) -> Result<RateMatrix> {
    RateMatrix::new(k, vec![v; k * k])
}

/// The 3-type demo instance: circulant with first row (2, 0.1, 1).
/// Within-type competition dominates, so the interior fixed point attracts,
/// and the asymmetric cross rates give the flow a strong rotation — the
/// trajectories spiral into the bottleneck.
pub fn demo_rates() -> RateMatrix {
    circulant(3, &[2.0, 0.1, 1.0]).expect("valid demo instance")
}

/// Strictly positive rates with i.i.d. entries in (lo, hi). No stability
/// guarantee: suitable for algebraic identities, not for convergence tests.
pub fn rand_positive_rates<R: Rng>(k: usize, lo: f64, hi: f64, rng: &mut R) -> RateMatrix {
    let entries: Vec<f64> = (0..k * k).map(|_| rng.random_range(lo..hi)).collect();
    RateMatrix::new(k, entries).expect("entries drawn positive")
}

/// Random rates whose replicator flow has an interior, globally attracting
/// stable state: off-diagonals U(0.2, 1), diagonals U(5, 7)·(k−1). The strong
/// diagonal makes −A positive definite on the tangent space (so the
/// stability margin is positive in every direction) and keeps A⁻¹1 strictly
/// positive (so the fixed point is interior).
pub fn rand_stable_rates<R: Rng>(k: usize, rng: &mut R) -> RateMatrix {
    if k == 1 {
        return RateMatrix::new(1, vec![rng.random_range(0.5..2.0)]).unwrap();
    }
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            entries[i * k + j] = if i == j {
                rng.random_range(5.0..7.0) * (k as f64 - 1.0)
            } else {
                rng.random_range(0.2..1.0)
            };
        }
    }
    RateMatrix::new(k, entries).unwrap()
}

/// Uniformly random counts in [0, max_count] per type, resampled until σ ≥ 1.
pub fn rand_state<R: Rng>(k: usize, max_count: u64, rng: &mut R) -> BlockState {
    loop {
        let counts: Vec<u64> = (0..k).map(|_| rng.random_range(0..=max_count)).collect();
        if counts.iter().any(|&c| c > 0) {
            return BlockState::new(counts).unwrap();
        }
    }
}

/// Dirichlet(1,…,1) point of the open simplex (coordinates floored away from
/// zero at 1e-9 and renormalized).
pub fn rand_interior_point<R: Rng>(k: usize, rng: &mut R) -> SimplexPoint {
    let raw: Vec<f64> = (0..k)
        .map(|_| -f64::ln(1.0 - rng.random::<f64>()) + 1e-9)
        .collect();
    SimplexPoint::from_unnormalized(&raw).unwrap()
}
