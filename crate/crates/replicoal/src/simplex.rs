//! Probability vectors on k types and integer rounding between the simplex
//! and count vectors.

use crate::error::{Error, Result};

/// Tolerance on the coordinate sum when validating a [`SimplexPoint`].
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// A point of the k-simplex: nonnegative coordinates summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    /// Validates nonnegativity and that the coordinates sum to 1 within
    /// [`SIMPLEX_SUM_TOL`].
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidSimplex("empty coordinate vector".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidSimplex(format!("coordinate {c} out of range")));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::InvalidSimplex(format!(
                "coordinates sum to {sum}, expected 1"
            )));
        }
        Ok(Self { coords })
    }

    /// Normalizes a nonnegative vector with positive mass onto the simplex.
    pub fn from_unnormalized(raw: &[f64]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) || raw.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidSimplex(
                "cannot normalize: nonpositive mass or negative coordinate".into(),
            ));
        }
        Ok(Self {
            coords: raw.iter().map(|c| c / sum).collect(),
        })
    }

    /// Frequency vector n/σ of a nonzero count vector.
    pub fn from_counts(counts: &[u64]) -> Self {
        let sigma: u64 = counts.iter().sum();
        debug_assert!(sigma >= 1);
        let s = sigma as f64;
        Self {
            coords: counts.iter().map(|&n| n as f64 / s).collect(),
        }
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            coords: vec![1.0 / k as f64; k],
        }
    }

    /// The i-th vertex e_i of the simplex.
    pub fn vertex(k: usize, i: usize) -> Self {
        let mut coords = vec![0.0; k];
        coords[i] = 1.0;
        Self { coords }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn is_interior(&self) -> bool {
        self.coords.iter().all(|&c| c > 0.0)
    }

    pub fn l1_distance(&self, other: &SimplexPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

/// Rounds σ·r to integer counts summing to exactly `sigma` by the largest
/// remainder rule; ties go to the lowest type index.
pub fn largest_remainder_counts(r: &[f64], sigma: u64) -> Vec<u64> {
    let s = sigma as f64;
    let mut base: Vec<u64> = Vec::with_capacity(r.len());
    let mut frac: Vec<(f64, usize)> = Vec::with_capacity(r.len());
    let mut assigned: u64 = 0;
    for (i, &ri) in r.iter().enumerate() {
        let target = ri * s;
        let fl = target.floor().max(0.0);
        let b = fl as u64;
        assigned += b;
        base.push(b);
        frac.push((target - fl, i));
    }
    let mut remainder = sigma.saturating_sub(assigned);
    // Largest fractional part first; ties broken by lowest index.
    frac.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut cursor = 0usize;
    while remainder > 0 {
        let (_, idx) = frac[cursor % frac.len()];
        base[idx] += 1;
        remainder -= 1;
        cursor += 1;
    }
    base
}
