//! Time-change machinery and semimartingale diagnostics.
//!
//! The clock of a path is the piecewise-linear integral t ↦ ∫₀ᵗ σ(u) du;
//! its right inverse τ dilates time near 0 so that, from large starts, the
//! frequency path R(t) = r(τ(t)) tracks the replicator flow. The vector
//! y = (r, 1/σ) stopped at absorption decomposes as y(0) + m + α with α the
//! integral of an explicit piecewise-constant density; the residual
//! m = y − y(0) − α is a mean-zero martingale, which gives per-path,
//! tolerance-free diagnostics for the simulators.

use crate::error::{Error, Result};
use crate::model::{victim_rates_counts, PayoffMatrix, RateMatrix};
use crate::replicator::{ess_fixed_point, integrate_on_grid};
use crate::rng::stream_rng;
use crate::simplex::{largest_remainder_counts, SimplexPoint};
use crate::sim::{
    simulate_exact_rng, simulate_hybrid, simulate_tau_leap_rng, FluidPath, HybridConfig,
    StopCriterion, Trajectory,
};
use rayon::prelude::*;

/// Piecewise-linear clock t ↦ ∫₀ᵗ σ(u) du of a trajectory. Strictly
/// increasing and continuous; each segment's slope is the σ held there.
/// Absorbed paths extend past the end with slope 1.
#[derive(Debug, Clone)]
pub struct ClockFunction {
    times: Vec<f64>,
    values: Vec<f64>,
    end_time: f64,
    end_value: f64,
    final_sigma: f64,
    absorbed: bool,
}

impl ClockFunction {
    /// Total clock mass accumulated by the end of the path (finite part;
    /// absorbed paths keep growing at slope 1 afterwards).
    pub fn mass(&self) -> f64 {
        self.end_value
    }

    pub fn is_absorbed_extension(&self) -> bool {
        self.absorbed
    }

    /// ∫₀ᵗ σ(u) du for t in [0, end]; beyond the end only for absorbed paths.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidArgument("clock time must be >= 0".into()));
        }
        if t > self.end_time {
            if self.absorbed {
                return Ok(self.end_value + (t - self.end_time));
            }
            return Err(Error::InvalidArgument(format!(
                "time {t} beyond path end {}",
                self.end_time
            )));
        }
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let slope = self.slope(i);
        Ok(self.values[i] + slope * (t - self.times[i]))
    }

    /// Right inverse: τ(v) = inf{u : ∫₀ᵘ σ > v}. `None` when v exceeds the
    /// accumulated mass of a non-absorbed path.
    pub fn tau(&self, v: f64) -> Option<f64> {
        if v < 0.0 {
            return None;
        }
        if v >= self.end_value {
            if self.absorbed {
                return Some(self.end_time + (v - self.end_value));
            }
            if v == self.end_value {
                return Some(self.end_time);
            }
            return None;
        }
        let i = match self
            .values
            .binary_search_by(|probe| probe.partial_cmp(&v).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        Some(self.times[i] + (v - self.values[i]) / self.slope(i))
    }

    fn slope(&self, i: usize) -> f64 {
        if i + 1 < self.times.len() {
            let dt = self.times[i + 1] - self.times[i];
            (self.values[i + 1] - self.values[i]) / dt
        } else if self.end_time > self.times[i] {
            (self.end_value - self.values[i]) / (self.end_time - self.times[i])
        } else {
            self.final_sigma
        }
    }
}

/// Builds the clock of a trajectory from its recorded samples. Exact for
/// event-resolved paths; for hybrid paths the fluid samples carry their
/// exact clock mass, so only within-step interpolation is approximate.
pub fn clock(traj: &Trajectory) -> ClockFunction {
    let n = traj.len();
    let times: Vec<f64> = (0..n).map(|i| traj.time(i)).collect();
    let values: Vec<f64> = (0..n).map(|i| traj.clock_at(i)).collect();
    let final_sigma = traj.final_sigma() as f64;
    let last_t = times[n - 1];
    let end_time = traj.end_time();
    let end_value = values[n - 1] + final_sigma * (end_time - last_t);
    ClockFunction {
        times,
        values,
        end_time,
        end_value,
        final_sigma,
        absorbed: traj.absorbed(),
    }
}

/// R(t) = r(τ(t)) on the grid; out-of-range grid times (beyond the clock
/// mass of a stopped path) come back as `None`, never extrapolated.
pub fn time_change(traj: &Trajectory, grid: &[f64]) -> Vec<Option<SimplexPoint>> {
    let ck = clock(traj);
    time_change_with(traj, &ck, grid)
}

pub fn time_change_with(
    traj: &Trajectory,
    ck: &ClockFunction,
    grid: &[f64],
) -> Vec<Option<SimplexPoint>> {
    grid.iter()
        .map(|&v| {
            ck.tau(v).map(|u| {
                let i = traj.index_at_time(u.min(traj.end_time()));
                traj.frequencies(i)
            })
        })
        .collect()
}

/// σ at the time-changed instant t, for grid-admissibility checks.
pub fn sigma_at_tau(traj: &Trajectory, ck: &ClockFunction, v: f64) -> Option<u64> {
    ck.tau(v).map(|u| {
        let i = traj.index_at_time(u.min(traj.end_time()));
        traj.sigma(i)
    })
}

/// Density of the bounded-variation part of y = (r, 1/σ): component j < k
/// compensates r_j, the last component compensates 1/σ. Zero in absorbing
/// states.
fn drift_density(c: &RateMatrix, counts: &[u64], sigma: u64, victim: &mut [f64], out: &mut [f64]) {
    let k = c.k();
    if sigma <= 1 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    victim_rates_counts(c, counts, victim);
    let total: f64 = victim.iter().sum();
    let s = sigma as f64;
    for j in 0..k {
        let rj = counts[j] as f64 / s;
        out[j] = (rj * total - victim[j]) / (s - 1.0);
    }
    out[k] = total / (s * (s - 1.0));
}

/// Exact integral of the drift density over [0, t ∧ γ₁]: the compensator of
/// (r, 1/σ). Requires an event-resolved path.
pub fn compensator(traj: &Trajectory, c: &RateMatrix, t: f64) -> Result<Vec<f64>> {
    compensator_between(traj, c, 0.0, t)
}

/// Compensator increment over [t0, t1] ∩ [0, γ₁] along the same path.
pub fn compensator_between(
    traj: &Trajectory,
    c: &RateMatrix,
    t0: f64,
    t1: f64,
) -> Result<Vec<f64>> {
    if !traj.full_events() {
        return Err(Error::NeedsFullTrajectory);
    }
    if t1 < t0 || t0 < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bad compensator window [{t0}, {t1}]"
        )));
    }
    if t1 > traj.end_time() && !traj.absorbed() {
        return Err(Error::InvalidArgument(format!(
            "time {t1} beyond path end {}",
            traj.end_time()
        )));
    }
    let k = traj.k();
    let mut acc = vec![0.0; k + 1];
    let mut victim = vec![0.0; k];
    let mut dens = vec![0.0; k + 1];
    for i in 0..traj.len() {
        let seg_start = traj.time(i);
        let seg_end = if i + 1 < traj.len() {
            traj.time(i + 1)
        } else {
            traj.end_time().max(t1)
        };
        let lo = seg_start.max(t0);
        let hi = seg_end.min(t1);
        if hi <= lo {
            continue;
        }
        if traj.sigma(i) <= 1 {
            break;
        }
        drift_density(c, traj.counts(i), traj.sigma(i), &mut victim, &mut dens);
        let dur = hi - lo;
        for (a, d) in acc.iter_mut().zip(&dens) {
            *a += dur * d;
        }
    }
    Ok(acc)
}

/// y(t) = (r(t ∧ γ₁), 1/σ(t ∧ γ₁)).
fn y_at(traj: &Trajectory, t: f64) -> Vec<f64> {
    let i = traj.index_at_time(t.min(traj.end_time()));
    let counts = traj.counts(i);
    let sigma = traj.sigma(i) as f64;
    let mut y: Vec<f64> = counts.iter().map(|&n| n as f64 / sigma).collect();
    y.push(1.0 / sigma);
    y
}

/// Martingale residual m(t) = y(t) − y(0) − α(t) per grid time; exact along
/// the trajectory (no tolerance involved).
pub fn martingale_residual(
    traj: &Trajectory,
    c: &RateMatrix,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let y0 = y_at(traj, 0.0);
    grid.iter()
        .map(|&t| {
            let alpha = compensator(traj, c, t)?;
            let y = y_at(traj, t);
            Ok(y
                .iter()
                .zip(&y0)
                .zip(&alpha)
                .map(|((yi, y0i), ai)| yi - y0i - ai)
                .collect())
        })
        .collect()
}

/// Martingale residual read in time-changed coordinates: m(τ(t)) per τ-grid
/// time. Grid times past the clock mass of a stopped path are errors.
pub fn martingale_residual_tau(
    traj: &Trajectory,
    ck: &ClockFunction,
    c: &RateMatrix,
    tau_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let wall: Result<Vec<f64>> = tau_grid
        .iter()
        .map(|&v| {
            ck.tau(v).ok_or_else(|| {
                Error::InvalidArgument(format!("tau-time {v} beyond clock mass {}", ck.mass()))
            })
        })
        .collect();
    martingale_residual(traj, c, &wall?)
}

/// ∫₀^{t ∧ γ₁} σ/(σ−1)² ds, the pathwise weight controlling the martingale's
/// second moment (the bound constant is 4·max C).
pub fn intensity_weight_integral(traj: &Trajectory, t: f64) -> Result<f64> {
    if !traj.full_events() {
        return Err(Error::NeedsFullTrajectory);
    }
    if t > traj.end_time() && !traj.absorbed() {
        return Err(Error::InvalidArgument(format!(
            "time {t} beyond path end {}",
            traj.end_time()
        )));
    }
    let mut acc = 0.0;
    for i in 0..traj.len() {
        let seg_start = traj.time(i);
        let seg_end = if i + 1 < traj.len() {
            traj.time(i + 1)
        } else {
            traj.end_time().max(t)
        };
        let hi = seg_end.min(t);
        if hi <= seg_start {
            continue;
        }
        let s = traj.sigma(i) as f64;
        if s <= 1.0 {
            break;
        }
        acc += (hi - seg_start) * s / ((s - 1.0) * (s - 1.0));
    }
    Ok(acc)
}

/// Max-norm residual of y − y(0) − α along a deterministic fluid path, with
/// α integrated by the trapezoid rule on the path's own samples. For the
/// fluid flow this is pure quadrature error.
pub fn fluid_residual(path: &FluidPath, c: &RateMatrix) -> f64 {
    let k = path.k();
    let mut victim = vec![0.0; k];
    let mut dens_prev = vec![0.0; k + 1];
    let mut dens = vec![0.0; k + 1];
    let mut alpha = vec![0.0; k + 1];
    let mut worst: f64 = 0.0;

    let density_at = |i: usize, victim: &mut [f64], out: &mut [f64]| {
        let s = path.sigma(i);
        let r = path.freqs(i);
        // Real-valued counts: the density formulas are polynomial identities,
        // valid verbatim for continuum states.
        let counts_f: Vec<f64> = r.iter().map(|ri| ri * s).collect();
        victim_rates_real(c, &counts_f, victim);
        let total: f64 = victim.iter().sum();
        for j in 0..k {
            out[j] = (r[j] * total - victim[j]) / (s - 1.0);
        }
        out[k] = total / (s * (s - 1.0));
    };

    density_at(0, &mut victim, &mut dens_prev);
    let y0: Vec<f64> = {
        let mut y: Vec<f64> = path.freqs(0).to_vec();
        y.push(1.0 / path.sigma(0));
        y
    };
    for i in 1..path.len() {
        density_at(i, &mut victim, &mut dens);
        let dt = path.time(i) - path.time(i - 1);
        for j in 0..=k {
            alpha[j] += 0.5 * dt * (dens_prev[j] + dens[j]);
        }
        let mut y: Vec<f64> = path.freqs(i).to_vec();
        y.push(1.0 / path.sigma(i));
        for j in 0..=k {
            let res = (y[j] - y0[j] - alpha[j]).abs();
            worst = worst.max(res);
        }
        std::mem::swap(&mut dens_prev, &mut dens);
    }
    worst
}

fn victim_rates_real(c: &RateMatrix, counts: &[f64], out: &mut [f64]) {
    let k = c.k();
    for j in 0..k {
        let nj = counts[j];
        let mut dj = c.get(j, j) * nj * (nj - 1.0) / 2.0;
        for i in 0..k {
            if i != j {
                dj += c.get(i, j) * counts[i] * nj;
            }
        }
        out[j] = dj;
    }
}

/// How ensemble members are simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimMethod {
    Exact,
    TauLeap { eps: f64, floor: u64 },
    Hybrid(HybridConfig),
}

pub(crate) fn run_one(
    c: &RateMatrix,
    sigma0: u64,
    r0: &SimplexPoint,
    stop: StopCriterion,
    seed: u64,
    stream: u64,
    method: SimMethod,
) -> Result<Trajectory> {
    match method {
        SimMethod::Exact => {
            let n0 = crate::model::BlockState::new(largest_remainder_counts(r0.coords(), sigma0))?;
            let mut rng = stream_rng(seed, stream);
            simulate_exact_rng(c, &n0, stop, &mut rng)
        }
        SimMethod::TauLeap { eps, floor } => {
            let n0 = crate::model::BlockState::new(largest_remainder_counts(r0.coords(), sigma0))?;
            let mut rng = stream_rng(seed, stream);
            simulate_tau_leap_rng(c, &n0, stop, &mut rng, eps, floor)
        }
        // Hybrid runs derive their stream through the seed argument: the
        // fluid stage consumes no randomness, the exact tail uses stream 0
        // of (seed + stream) — distinct per run, reproducible.
        SimMethod::Hybrid(cfg) => simulate_hybrid(
            c,
            sigma0,
            r0,
            stop,
            seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            &cfg,
        ),
    }
}

/// Which time axis a summary grid lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeAxis {
    Tau,
    Wall,
}

/// Per-grid-time mean absolute deviations of simplex statistics across runs,
/// with standard errors (sample std / √n).
#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub grid: Vec<f64>,
    pub axis: TimeAxis,
    /// [grid point][type] mean of |R_i(t) − x_i(t)|.
    pub mean_abs_err: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub n_runs: usize,
    /// Runs whose clock mass ended below the last grid time; excluded.
    pub excluded: usize,
    /// Smallest σ(τ(t)) seen at the last grid time across included runs.
    pub min_sigma_at_grid_end: u64,
}

/// Runs `n_runs` simulations from (σ0, r0), applies the time change, and
/// compares R(t) against the replicator solution from the same r0 on the
/// same τ-grid.
pub fn ensemble_vs_ode(
    c: &RateMatrix,
    sigma0: u64,
    r0: &SimplexPoint,
    n_runs: usize,
    grid: &[f64],
    seed: u64,
    method: SimMethod,
    ode_step: f64,
) -> Result<EnsembleSummary> {
    if grid.is_empty() || n_runs == 0 {
        return Err(Error::InvalidArgument(
            "ensemble needs a nonempty grid and at least one run".into(),
        ));
    }
    let a = PayoffMatrix::from_rates(c);
    let x = integrate_on_grid(&a, r0, grid, ode_step)?;
    let k = c.k();
    let grid_end = *grid.last().unwrap();

    let per_run: Vec<Result<Option<(Vec<Vec<f64>>, u64)>>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let traj = run_one(c, sigma0, r0, StopCriterion::Absorb, seed, i, method)?;
            let ck = clock(&traj);
            if !ck.is_absorbed_extension() && ck.mass() < grid_end {
                return Ok(None);
            }
            let rs = time_change_with(&traj, &ck, grid);
            let mut errs = Vec::with_capacity(grid.len());
            for (g, r_opt) in rs.iter().enumerate() {
                let r = match r_opt {
                    Some(r) => r,
                    None => return Ok(None),
                };
                let e: Vec<f64> = (0..k)
                    .map(|ti| (r.coords()[ti] - x[g].coords()[ti]).abs())
                    .collect();
                errs.push(e);
            }
            let sig_end = sigma_at_tau(&traj, &ck, grid_end).unwrap_or(0);
            Ok(Some((errs, sig_end)))
        })
        .collect();

    let mut included: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut excluded = 0usize;
    let mut min_sigma = u64::MAX;
    for r in per_run {
        match r? {
            Some((errs, sig)) => {
                min_sigma = min_sigma.min(sig);
                included.push(errs);
            }
            None => excluded += 1,
        }
    }
    if included.is_empty() {
        return Err(Error::InvalidArgument(
            "every run exhausted its clock mass before the grid end".into(),
        ));
    }

    let n = included.len();
    let mut mean_abs_err = vec![vec![0.0; k]; grid.len()];
    let mut stderr = vec![vec![0.0; k]; grid.len()];
    for g in 0..grid.len() {
        for ti in 0..k {
            let samples: Vec<f64> = included.iter().map(|e| e[g][ti]).collect();
            let (m, se) = crate::stats::mean_stderr(&samples);
            mean_abs_err[g][ti] = m;
            stderr[g][ti] = if se.is_nan() { 0.0 } else { se };
        }
    }
    Ok(EnsembleSummary {
        grid: grid.to_vec(),
        axis: TimeAxis::Tau,
        mean_abs_err,
        stderr,
        n_runs: n,
        excluded,
        min_sigma_at_grid_end: min_sigma,
    })
}

/// Ensemble statistic at the hitting state: mean |r_i(γ_m) − x*_i| with
/// standard errors.
#[derive(Debug, Clone)]
pub struct BottleneckStat {
    pub m: u64,
    pub r0: SimplexPoint,
    pub mean_abs: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_runs: usize,
}

pub fn bottleneck_stat(
    c: &RateMatrix,
    sigma0: u64,
    r0: &SimplexPoint,
    m: u64,
    n_runs: usize,
    seed: u64,
    method: SimMethod,
) -> Result<BottleneckStat> {
    if m < 1 || m > sigma0 {
        return Err(Error::InvalidArgument(format!(
            "hitting level m={m} outside [1, sigma0={sigma0}]"
        )));
    }
    let a = PayoffMatrix::from_rates(c);
    let ess = ess_fixed_point(&a)?;
    let k = c.k();

    let per_run: Vec<Result<Vec<f64>>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let traj = run_one(c, sigma0, r0, StopCriterion::HitSigma(m), seed, i, method)?;
            let idx = traj.hitting_index(m).ok_or_else(|| {
                Error::InvalidArgument(format!("run never reached level {m}"))
            })?;
            let r = traj.frequencies(idx);
            Ok((0..k)
                .map(|ti| (r.coords()[ti] - ess.x_star.coords()[ti]).abs())
                .collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(n_runs);
    for r in per_run {
        rows.push(r?);
    }
    let mut mean_abs = vec![0.0; k];
    let mut stderr = vec![0.0; k];
    for ti in 0..k {
        let samples: Vec<f64> = rows.iter().map(|r| r[ti]).collect();
        let (mean, se) = crate::stats::mean_stderr(&samples);
        mean_abs[ti] = mean;
        stderr[ti] = if se.is_nan() { 0.0 } else { se };
    }
    Ok(BottleneckStat {
        m,
        r0: r0.clone(),
        mean_abs,
        stderr,
        n_runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::BlockState;
    use crate::sim::simulate_exact;

    fn two_segment_toy() -> Trajectory {
        // σ = 3 on [0, 0.5), then 2; built through the exact machinery is
        // overkill, assemble directly via the builder-equivalent path.
        let c = instances::uniform_rates(2, 1.0).unwrap();
        // Deterministic reconstruction: simulate until the samples have the
        // right shape is flaky, so craft the path by hand through TrajBuilder
        // is not public here; instead use a real simulation and then check
        // generic clock identities. Hand case below uses the real path.
        let n0 = BlockState::new(vec![2, 1]).unwrap();
        simulate_exact(&c, &n0, StopCriterion::Absorb, 12).unwrap()
    }

    #[test]
    fn clock_zero_at_origin_and_strictly_increasing() {
        let traj = two_segment_toy();
        let ck = clock(&traj);
        assert_eq!(ck.eval(0.0).unwrap(), 0.0);
        let mut prev = -1.0;
        let step = traj.end_time() / 7.0;
        for i in 0..=7 {
            let v = ck.eval(i as f64 * step).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn clock_inversion_round_trips() {
        let traj = two_segment_toy();
        let ck = clock(&traj);
        for frac in [0.0, 0.1, 0.35, 0.77, 0.99] {
            let t = frac * traj.end_time();
            let v = ck.eval(t).unwrap();
            let back = ck.tau(v).unwrap();
            assert!((back - t).abs() < 1e-12, "t={t} back={back}");
        }
        for frac in [0.05, 0.4, 0.9] {
            let v = frac * ck.mass();
            let t = ck.tau(v).unwrap();
            assert!((ck.eval(t).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_clock_two_segments() {
        // σ=3 on [0, 0.5), σ=2 afterwards: the clock reaches 1.0 at u = 1/3.
        let mut b = crate::sim::TrajBuilder::new(2, crate::sim::PathMode::Exact, &[2, 1]);
        b.push(0.5, &[1, 1], 2, 1.5);
        b.push(2.0, &[1, 0], 1, 4.5);
        let traj = b.finish(2.0, true);
        let ck = clock(&traj);
        assert!((ck.eval(0.5).unwrap() - 1.5).abs() < 1e-15);
        assert!((ck.tau(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // Right-continuity at t=0: R(0) is the initial frequency vector.
        let r = time_change(&traj, &[0.0]);
        assert_eq!(r[0].as_ref().unwrap().coords(), &[2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn compensator_zero_at_zero_and_single_segment_hand_case() {
        let c = instances::uniform_rates(2, 1.0).unwrap();
        let mut b = crate::sim::TrajBuilder::new(2, crate::sim::PathMode::Exact, &[2, 1]);
        b.push(10.0, &[1, 1], 2, 30.0);
        let traj = b.finish(10.0, false);

        let zero = compensator(&traj, &c, 0.0).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));

        // State (2,1), C ≡ 1: victim rates D = (3, 2), λ = 5, σ = 3.
        // Density: ((r·λ − D)/(σ−1), λ/(σ(σ−1))) = ((1/6, −1/6), 5/6).
        let h = 0.25;
        let alpha = compensator(&traj, &c, h).unwrap();
        assert!((alpha[0] - h / 6.0).abs() < 1e-15);
        assert!((alpha[1] + h / 6.0).abs() < 1e-15);
        assert!((alpha[2] - h * 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn compensator_matches_payoff_density_form() {
        // Independent route: the density written through the payoff matrix,
        // (σ/(σ−1))·Σ_i (σ(r−e_i); 1)·r_i·[σ⁻¹diag(A)1 − A r]_i.
        let c = instances::circulant(3, &[2.0, 1.0, 0.5]).unwrap();
        let a = PayoffMatrix::from_rates(&c);
        let n0 = BlockState::new(vec![7, 4, 2]).unwrap();
        let traj = simulate_exact(&c, &n0, StopCriterion::Absorb, 9).unwrap();
        let t = traj.end_time() * 0.7;
        let direct = compensator(&traj, &c, t).unwrap();

        let k = 3;
        let mut alpha = vec![0.0; k + 1];
        for i in 0..traj.len() {
            let seg_start = traj.time(i);
            let seg_end = if i + 1 < traj.len() {
                traj.time(i + 1)
            } else {
                traj.end_time()
            };
            let hi = seg_end.min(t);
            if hi <= seg_start || traj.sigma(i) <= 1 {
                continue;
            }
            let dur = hi - seg_start;
            let s = traj.sigma(i) as f64;
            let r: Vec<f64> = traj.counts(i).iter().map(|&n| n as f64 / s).collect();
            let ar = a.mul_vec(&r);
            let factor = s / (s - 1.0);
            for i_ch in 0..k {
                let bracket = a.get(i_ch, i_ch) / s - ar[i_ch];
                let weight = r[i_ch] * bracket;
                for j in 0..k {
                    let e_ij = if j == i_ch { 1.0 } else { 0.0 };
                    alpha[j] += dur * factor * s * (r[j] - e_ij) * weight;
                }
                alpha[k] += dur * factor * weight;
            }
        }
        for j in 0..=k {
            assert!(
                (direct[j] - alpha[j]).abs() < 1e-10,
                "component {j}: {} vs {}",
                direct[j],
                alpha[j]
            );
        }
    }

    #[test]
    fn compensator_is_additive() {
        let c = instances::demo_rates();
        let n0 = BlockState::new(vec![30, 20, 10]).unwrap();
        let traj = simulate_exact(&c, &n0, StopCriterion::Absorb, 21).unwrap();
        let t_mid = traj.end_time() * 0.4;
        let t_end = traj.end_time() * 0.9;
        let whole = compensator(&traj, &c, t_end).unwrap();
        let first = compensator(&traj, &c, t_mid).unwrap();
        let second = compensator_between(&traj, &c, t_mid, t_end).unwrap();
        for j in 0..whole.len() {
            assert!((whole[j] - first[j] - second[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn martingale_residual_zero_at_zero() {
        let c = instances::demo_rates();
        let n0 = BlockState::new(vec![10, 10, 10]).unwrap();
        let traj = simulate_exact(&c, &n0, StopCriterion::Absorb, 2).unwrap();
        let res = martingale_residual(&traj, &c, &[0.0]).unwrap();
        assert!(res[0].iter().all(|v| v.abs() == 0.0));
    }

    #[test]
    fn coarse_paths_are_rejected_for_exact_diagnostics() {
        let c = instances::demo_rates();
        let n0 = BlockState::new(vec![4000, 3000, 3000]).unwrap();
        let traj = crate::sim::simulate_tau_leap(
            &c,
            &n0,
            StopCriterion::HitSigma(50),
            3,
            0.05,
            500,
        )
        .unwrap();
        assert!(matches!(
            compensator(&traj, &c, 0.1),
            Err(Error::NeedsFullTrajectory)
        ));
    }

    #[test]
    fn bottleneck_at_start_level_is_initial_deviation() {
        let c = instances::demo_rates();
        let r0 = SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap();
        let sigma0 = 1000;
        let stat =
            bottleneck_stat(&c, sigma0, &r0, sigma0, 16, 5, SimMethod::Exact).unwrap();
        let a = PayoffMatrix::from_rates(&c);
        let ess = ess_fixed_point(&a).unwrap();
        let n0 = largest_remainder_counts(r0.coords(), sigma0);
        let r0_actual = SimplexPoint::from_counts(&n0);
        for ti in 0..3 {
            let expect = (r0_actual.coords()[ti] - ess.x_star.coords()[ti]).abs();
            assert!((stat.mean_abs[ti] - expect).abs() < 1e-15);
            assert_eq!(stat.stderr[ti], 0.0);
        }
    }

    #[test]
    fn ensemble_summary_is_sane_for_single_small_run() {
        let c = instances::demo_rates();
        let r0 = SimplexPoint::uniform(3);
        let grid = [0.1, 0.5, 1.0];
        let s = ensemble_vs_ode(&c, 100, &r0, 1, &grid, 3, SimMethod::Exact, 1e-3).unwrap();
        assert_eq!(s.n_runs, 1);
        for row in &s.mean_abs_err {
            for &v in row {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
