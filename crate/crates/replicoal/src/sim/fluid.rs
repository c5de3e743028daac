//! Deterministic large-population (fluid) limit of the coalescent.
//!
//! The mean dynamics of (σ, r) are integrated with fixed RK4 steps in the
//! time-changed variable u with du = σ dt — equal steps in u are equal steps
//! of the clock mass ∫σ ds, so a path from σ(0) = 10¹⁵ down to 10⁴ costs a
//! few thousand steps even though the wall-clock rates vary over twenty
//! decades. Wall time is recovered alongside by integrating dt/du = 1/σ.
//!
//! In the u parametrization the frequency component satisfies
//!   dr/du = (σ/(σ−1)) · Σ_i (r − e_i) r_i [σ⁻¹ diag(A)1 − A r]_i,
//! the exact mean drift of the jump chain, which tends to the replicator
//! vector field as σ → ∞. The block-count component satisfies
//! d(ln σ)/du = −λ̄(σ, r)/σ², i.e. dσ/dt = −λ̄ in wall time.

use crate::error::{Error, Result};
use crate::model::{PayoffMatrix, RateMatrix};
use crate::simplex::SimplexPoint;
use crate::sim::trajectory::StopCriterion;

/// Continuum state: positive real block mass and a frequency vector.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub sigma: f64,
    pub r: SimplexPoint,
}

impl FluidState {
    pub fn new(sigma: f64, r: SimplexPoint) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "fluid sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { sigma, r })
    }
}

/// Why the fluid integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidStopReason {
    HitSigma,
    MaxTime,
    /// σ decayed to 1 before the requested stop; reported, not an error.
    ReachedOne,
}

/// Deterministic fluid path sampled at integrator steps. `tau(i)` is the
/// clock mass ∫₀^{t_i} σ ds, exact by construction of the parametrization.
#[derive(Debug, Clone)]
pub struct FluidPath {
    k: usize,
    times: Vec<f64>,
    taus: Vec<f64>,
    sigmas: Vec<f64>,
    freqs: Vec<f64>,
    pub stop_reason: FluidStopReason,
}

impl FluidPath {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.taus[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigmas[i]
    }

    pub fn freqs(&self, i: usize) -> &[f64] {
        &self.freqs[i * self.k..(i + 1) * self.k]
    }

    pub fn final_state(&self) -> FluidState {
        let i = self.len() - 1;
        FluidState {
            sigma: self.sigmas[i],
            r: SimplexPoint::from_unnormalized(self.freqs(i)).expect("stored freqs valid"),
        }
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn end_tau(&self) -> f64 {
        *self.taus.last().unwrap()
    }
}

struct FluidSystem<'a> {
    a: &'a PayoffMatrix,
    k: usize,
}

impl FluidSystem<'_> {
    /// z = (ln σ, r_1..r_k, t); writes dz/du.
    fn rhs(&self, z: &[f64], dz: &mut [f64]) {
        let k = self.k;
        let sigma = z[0].exp();
        let r = &z[1..1 + k];
        let mut ar = vec![0.0; k];
        self.a.mul_vec_into(r, &mut ar);
        let mut g_sum = 0.0;
        let mut g = vec![0.0; k];
        for i in 0..k {
            g[i] = r[i] * (self.a.get(i, i) / sigma - ar[i]);
            g_sum += g[i];
        }
        dz[0] = -g_sum;
        let correction = sigma / (sigma - 1.0);
        for i in 0..k {
            dz[1 + i] = correction * (r[i] * g_sum - g[i]);
        }
        dz[1 + k] = 1.0 / sigma;
    }

    fn rk4(&self, z: &mut [f64], h: f64, scratch: &mut [Vec<f64>]) {
        let n = z.len();
        let (k1, rest) = scratch.split_at_mut(1);
        let (k2, rest) = rest.split_at_mut(1);
        let (k3, rest) = rest.split_at_mut(1);
        let (k4, tmp) = rest.split_at_mut(1);
        let (k1, k2, k3, k4, tmp) = (&mut k1[0], &mut k2[0], &mut k3[0], &mut k4[0], &mut tmp[0]);
        self.rhs(z, k1);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * h * k1[i];
        }
        self.rhs(tmp, k2);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * h * k2[i];
        }
        self.rhs(tmp, k3);
        for i in 0..n {
            tmp[i] = z[i] + h * k3[i];
        }
        self.rhs(tmp, k4);
        for i in 0..n {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        // Project the frequency block back onto the simplex.
        let ksys = self.k;
        let mut sum = 0.0;
        for i in 0..ksys {
            if z[1 + i] < 0.0 {
                z[1 + i] = 0.0;
            }
            sum += z[1 + i];
        }
        for i in 0..ksys {
            z[1 + i] /= sum;
        }
    }
}

/// Integrates the fluid dynamics from `f0` until `stop`. `step` is the RK4
/// step in the time-changed variable (clock mass per step).
pub fn simulate_fluid(
    c: &RateMatrix,
    f0: &FluidState,
    stop: StopCriterion,
    step: f64,
) -> Result<FluidPath> {
    let a = PayoffMatrix::from_rates(c);
    simulate_fluid_payoff(&a, f0, stop, step)
}

/// Fluid integration against an explicit payoff matrix; callers are
/// responsible for A being of the coalescent form (all entries negative),
/// otherwise the block mass need not decrease.
pub fn simulate_fluid_payoff(
    a: &PayoffMatrix,
    f0: &FluidState,
    stop: StopCriterion,
    step: f64,
) -> Result<FluidPath> {
    stop.validate()?;
    let target_sigma = match stop {
        StopCriterion::HitSigma(m) => Some(m as f64),
        _ => None,
    };
    let t_max = match stop {
        StopCriterion::MaxTime(t) => Some(t),
        _ => None,
    };
    fluid_run(a, f0, target_sigma, t_max, step)
}

/// Core integrator: stops at the first of σ ≤ `target_sigma`, t ≥ `t_max`,
/// or σ ≤ 1 (ReachedOne). At least one bound must be supplied.
pub(crate) fn fluid_run(
    a: &PayoffMatrix,
    f0: &FluidState,
    target_sigma: Option<f64>,
    t_max: Option<f64>,
    step: f64,
) -> Result<FluidPath> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let k = a.k();
    if f0.r.k() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: f0.r.k(),
        });
    }
    if f0.sigma <= 1.0 {
        return Err(Error::InvalidArgument(
            "fluid start requires sigma > 1".into(),
        ));
    }
    if f0.sigma < 1e3 {
        log::warn!(
            "fluid approximation started at sigma = {}; fluctuations are not negligible below ~1e3",
            f0.sigma
        );
    }

    const SIGMA_FLOOR: f64 = 1.0 + 1e-9;
    let sys = FluidSystem { a, k };
    let mut z = Vec::with_capacity(k + 2);
    z.push(f0.sigma.ln());
    z.extend_from_slice(f0.r.coords());
    z.push(0.0);
    let mut scratch = vec![vec![0.0; k + 2]; 5];

    let mut path = FluidPath {
        k,
        times: vec![0.0],
        taus: vec![0.0],
        sigmas: vec![f0.sigma],
        freqs: f0.r.coords().to_vec(),
        stop_reason: FluidStopReason::MaxTime,
    };

    let target_ln_sigma = match target_sigma {
        Some(m) => Some(m.max(SIGMA_FLOOR).ln()),
        None => Some(SIGMA_FLOOR.ln()),
    };
    if let Some(lm) = target_ln_sigma {
        if z[0] <= lm {
            path.stop_reason = FluidStopReason::HitSigma;
            return Ok(path);
        }
    }
    if t_max == Some(0.0) {
        return Ok(path);
    }

    let mut u = 0.0;
    const MAX_STEPS: usize = 50_000_000;
    for _ in 0..MAX_STEPS {
        let z_prev = z.clone();
        sys.rk4(&mut z, step, &mut scratch);
        u += step;

        let hit_target = target_ln_sigma.map(|lm| z[0] <= lm).unwrap_or(false);
        let hit_floor = z[0] <= SIGMA_FLOOR.ln();
        let hit_time = t_max.map(|tm| z[1 + k] >= tm).unwrap_or(false);

        if hit_target || hit_floor || hit_time {
            // Bisect the step length to land on the first boundary crossed.
            let mut lo = 0.0f64;
            let mut hi = step;
            let mut z_land = z.clone();
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let mut z_try = z_prev.clone();
                sys.rk4(&mut z_try, mid, &mut scratch);
                let crossed = target_ln_sigma.map(|lm| z_try[0] <= lm).unwrap_or(false)
                    || z_try[0] <= SIGMA_FLOOR.ln()
                    || t_max.map(|tm| z_try[1 + k] >= tm).unwrap_or(false);
                if crossed {
                    hi = mid;
                    z_land = z_try;
                } else {
                    lo = mid;
                }
            }
            u = u - step + hi;
            z = z_land;
            push_sample(&mut path, &z, u, k);
            let at_target = target_sigma.is_some()
                && target_ln_sigma.map(|lm| z[0] <= lm + 1e-9).unwrap_or(false);
            let at_floor = z[0] <= SIGMA_FLOOR.ln() + 1e-9;
            path.stop_reason = if at_target {
                FluidStopReason::HitSigma
            } else if at_floor {
                FluidStopReason::ReachedOne
            } else {
                FluidStopReason::MaxTime
            };
            return Ok(path);
        }
        push_sample(&mut path, &z, u, k);
    }
    Err(Error::InvalidArgument(
        "fluid integration exceeded the step budget before reaching the stop".into(),
    ))
}

fn push_sample(path: &mut FluidPath, z: &[f64], u: f64, k: usize) {
    path.times.push(z[1 + k]);
    path.taus.push(u);
    path.sigmas.push(z[0].exp());
    path.freqs.extend_from_slice(&z[1..1 + k]);
}
