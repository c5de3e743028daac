//! Replicator dynamics on the simplex: the vector field induced by a payoff
//! matrix, its interior fixed point, a numerical check of the stability
//! (evolutionary stable state) inequality, and a fixed-step RK4 integrator
//! that renormalizes onto the simplex after every step.

use crate::error::{Error, Result};
use crate::model::PayoffMatrix;
use crate::rng::stream_rng;
use crate::simplex::SimplexPoint;
use rand::Rng;
use rand_distr::StandardNormal;

/// Solution of the replicator flow sampled on an increasing time grid.
#[derive(Debug, Clone)]
pub struct OdePath {
    times: Vec<f64>,
    points: Vec<SimplexPoint>,
}

impl OdePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn point(&self, i: usize) -> &SimplexPoint {
        &self.points[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn final_point(&self) -> &SimplexPoint {
        self.points.last().expect("non-empty path")
    }
}

/// Interior fixed point x* with A x* = c·1, plus the achieved residual
/// ‖A x* − c·1‖∞.
#[derive(Debug, Clone)]
pub struct EssResult {
    pub x_star: SimplexPoint,
    pub c: f64,
    pub residual: f64,
}

/// Right-hand side x_i([A x]_i − xᵀA x). Components sum to zero (tangency).
pub fn replicator_rhs(a: &PayoffMatrix, x: &SimplexPoint) -> Result<Vec<f64>> {
    if x.k() != a.k() {
        return Err(Error::DimensionMismatch {
            expected: a.k(),
            got: x.k(),
        });
    }
    let mut out = vec![0.0; a.k()];
    let mut ax = vec![0.0; a.k()];
    rhs_into(a, x.coords(), &mut ax, &mut out);
    debug_assert!(out.iter().sum::<f64>().abs() < 1e-12);
    Ok(out)
}

#[inline]
fn rhs_into(a: &PayoffMatrix, x: &[f64], ax: &mut [f64], out: &mut [f64]) {
    a.mul_vec_into(x, ax);
    let mean: f64 = x.iter().zip(ax.iter()).map(|(xi, axi)| xi * axi).sum();
    for i in 0..x.len() {
        out[i] = x[i] * (ax[i] - mean);
    }
}

/// Solves A x = 1 and normalizes: x* = A⁻¹1 / (1ᵀA⁻¹1), c = (1ᵀA⁻¹1)⁻¹.
/// No interiority requirement; used directly for payoff matrices that do not
/// come from a rate matrix.
pub fn ess_fixed_point_relaxed(a: &PayoffMatrix) -> Result<(Vec<f64>, f64, f64)> {
    let k = a.k();
    let m = nalgebra::DMatrix::from_row_slice(k, k, a.entries());
    let ones = nalgebra::DVector::from_element(k, 1.0);
    let y = m
        .clone()
        .lu()
        .solve(&ones)
        .ok_or(Error::SingularMatrix)?;
    let denom: f64 = y.iter().sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let c = 1.0 / denom;
    let x: Vec<f64> = y.iter().map(|v| v / denom).collect();
    let ax = a.mul_vec(&x);
    let residual = ax
        .iter()
        .map(|v| (v - c).abs())
        .fold(0.0f64, f64::max);
    Ok((x, c, residual))
}

/// Interior fixed point of the replicator flow. Errors with
/// [`Error::BoundaryFixedPoint`] when any coordinate is ≤ 0 (reported, never
/// clamped) and [`Error::SingularMatrix`] when A is not invertible.
pub fn ess_fixed_point(a: &PayoffMatrix) -> Result<EssResult> {
    let (x, c, residual) = ess_fixed_point_relaxed(a)?;
    if x.iter().any(|&v| v <= 0.0) {
        return Err(Error::BoundaryFixedPoint(format!("{x:?}")));
    }
    let x_star = SimplexPoint::new(x)
        .map_err(|e| Error::InvalidSimplex(format!("fixed point failed validation: {e}")))?;
    Ok(EssResult { x_star, c, residual })
}

/// Outcome of the sampled stability check around x*.
#[derive(Debug, Clone)]
pub struct EssReport {
    /// min over samples of (x*)ᵀA x − xᵀA x; the check passes iff > 0.
    pub min_margin: f64,
    pub pass: bool,
    pub samples: usize,
    /// Radius actually used after any shrinking needed to stay in the simplex.
    pub radius_used: f64,
    pub shrink_count: u32,
}

/// Samples x = x* + ε·u with u uniform on the unit sphere of the tangent
/// space (coordinates summing to zero) and ε uniform in (0, radius], and
/// reports the minimum of (x*)ᵀA x − xᵀA x. If a sample would leave the
/// simplex the radius is halved and sampling restarts.
pub fn verify_ess(
    a: &PayoffMatrix,
    x_star: &SimplexPoint,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<EssReport> {
    let k = a.k();
    if x_star.k() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: x_star.k(),
        });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    if !x_star.is_interior() {
        return Err(Error::BoundaryFixedPoint(format!("{:?}", x_star.coords())));
    }
    if k == 1 {
        // No tangent directions to probe.
        return Ok(EssReport {
            min_margin: f64::INFINITY,
            pass: true,
            samples: 0,
            radius_used: radius,
            shrink_count: 0,
        });
    }

    let mut rng = stream_rng(seed, 0);
    let mut radius_used = radius;
    let mut shrink_count = 0u32;
    let xs = x_star.coords();
    'outer: loop {
        let mut min_margin = f64::INFINITY;
        let mut rng_attempt = rng.clone();
        for _ in 0..samples {
            // Tangent direction: centered Gaussian, normalized.
            let mut u = vec![0.0f64; k];
            loop {
                let mut mean = 0.0;
                for ui in u.iter_mut() {
                    *ui = rng_attempt.sample(StandardNormal);
                    mean += *ui;
                }
                mean /= k as f64;
                for ui in u.iter_mut() {
                    *ui -= mean;
                }
                let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    for ui in u.iter_mut() {
                        *ui /= norm;
                    }
                    break;
                }
            }
            let eps = (1.0 - rng_attempt.random::<f64>()) * radius_used;
            let x: Vec<f64> = xs.iter().zip(&u).map(|(s, ui)| s + eps * ui).collect();
            if x.iter().any(|&v| v < 0.0) {
                if shrink_count >= 60 {
                    return Err(Error::InvalidArgument(
                        "could not shrink radius to stay inside the simplex".into(),
                    ));
                }
                radius_used /= 2.0;
                shrink_count += 1;
                continue 'outer;
            }
            // margin = (x* − x)ᵀ A x = −ε uᵀ A x, free of large-term cancellation.
            let ax = a.mul_vec(&x);
            let margin: f64 = -eps * u.iter().zip(&ax).map(|(ui, v)| ui * v).sum::<f64>();
            min_margin = min_margin.min(margin);
        }
        rng = rng_attempt;
        return Ok(EssReport {
            min_margin,
            pass: min_margin > 0.0,
            samples,
            radius_used,
            shrink_count,
        });
    }
}

fn rk4_step(a: &PayoffMatrix, x: &mut Vec<f64>, h: f64, scratch: &mut RkScratch) -> Result<()> {
    let k = x.len();
    let RkScratch { ax, k1, k2, k3, k4, tmp } = scratch;
    rhs_into(a, x, ax, k1);
    for i in 0..k {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    rhs_into(a, tmp, ax, k2);
    for i in 0..k {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    rhs_into(a, tmp, ax, k3);
    for i in 0..k {
        tmp[i] = x[i] + h * k3[i];
    }
    rhs_into(a, tmp, ax, k4);
    for i in 0..k {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    // Clamp roundoff-level undershoot, refuse anything larger.
    for xi in x.iter_mut() {
        if *xi < 0.0 {
            if *xi > -1e-12 {
                *xi = 0.0;
            } else {
                return Err(Error::CoordinateUnderflow(*xi));
            }
        }
    }
    let sum: f64 = x.iter().sum();
    debug_assert!((sum - 1.0).abs() < 1e-9, "simplex drift {sum}");
    for xi in x.iter_mut() {
        *xi /= sum;
    }
    Ok(())
}

struct RkScratch {
    ax: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl RkScratch {
    fn new(k: usize) -> Self {
        Self {
            ax: vec![0.0; k],
            k1: vec![0.0; k],
            k2: vec![0.0; k],
            k3: vec![0.0; k],
            k4: vec![0.0; k],
            tmp: vec![0.0; k],
        }
    }
}

/// Fixed-step RK4 integration of the replicator flow over [0, t_end],
/// renormalizing onto the simplex after every step. The final step is
/// shortened to land exactly on `t_end`.
pub fn integrate(a: &PayoffMatrix, x0: &SimplexPoint, t_end: f64, step: f64) -> Result<OdePath> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidArgument("t_end must be nonnegative".into()));
    }
    if x0.k() != a.k() {
        return Err(Error::DimensionMismatch {
            expected: a.k(),
            got: x0.k(),
        });
    }
    let mut x = x0.coords().to_vec();
    let mut scratch = RkScratch::new(a.k());
    let mut times = vec![0.0];
    let mut points = vec![x0.clone()];
    let mut t = 0.0;
    while t < t_end {
        let h = step.min(t_end - t);
        rk4_step(a, &mut x, h, &mut scratch)?;
        t += h;
        times.push(t);
        points.push(SimplexPoint::new(x.clone())?);
    }
    Ok(OdePath { times, points })
}

/// Replicator solution evaluated exactly on `grid` (strictly increasing,
/// starting at ≥ 0), taking RK4 substeps of at most `max_step` between
/// consecutive grid times.
pub fn integrate_on_grid(
    a: &PayoffMatrix,
    x0: &SimplexPoint,
    grid: &[f64],
    max_step: f64,
) -> Result<Vec<SimplexPoint>> {
    if !(max_step > 0.0) {
        return Err(Error::InvalidArgument("max_step must be positive".into()));
    }
    let mut x = x0.coords().to_vec();
    let mut scratch = RkScratch::new(a.k());
    let mut out = Vec::with_capacity(grid.len());
    let mut t = 0.0;
    for &g in grid {
        if g < t - 1e-15 {
            return Err(Error::InvalidArgument("grid must be nondecreasing".into()));
        }
        while t < g {
            let remaining = g - t;
            let n_sub = (remaining / max_step).ceil().max(1.0);
            let h = remaining / n_sub;
            rk4_step(a, &mut x, h, &mut scratch)?;
            t += h;
            if n_sub == 1.0 {
                t = g;
            }
        }
        out.push(SimplexPoint::new(x.clone())?);
    }
    Ok(out)
}

/// Result of integrating until the flow settles at the fixed point.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub t_final: f64,
    pub x_final: SimplexPoint,
    pub distance_l1: f64,
}

/// Doubles the horizon (starting at `t_start`) until ‖x(T) − x*‖₁ < `tol`
/// or the horizon exceeds `t_cap`.
pub fn converge_to_ess(
    a: &PayoffMatrix,
    x0: &SimplexPoint,
    tol: f64,
    step: f64,
    t_start: f64,
    t_cap: f64,
) -> Result<ConvergenceReport> {
    let ess = ess_fixed_point(a)?;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut horizon = t_start;
    loop {
        let path = integrate(a, &x, horizon, step)?;
        x = path.final_point().clone();
        t += horizon;
        let d = x.l1_distance(&ess.x_star);
        if d < tol {
            return Ok(ConvergenceReport {
                converged: true,
                t_final: t,
                x_final: x,
                distance_l1: d,
            });
        }
        if t + horizon > t_cap {
            return Ok(ConvergenceReport {
                converged: false,
                t_final: t,
                x_final: x,
                distance_l1: d,
            });
        }
        horizon *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::{payoff_from_rates, RateMatrix};

    #[test]
    fn rhs_vanishes_at_fixed_point_and_vertices() {
        let c = instances::circulant(3, &[4.0, 1.0, 0.5]).unwrap();
        let a = payoff_from_rates(&c);
        let ess = ess_fixed_point(&a).unwrap();
        let rhs = replicator_rhs(&a, &ess.x_star).unwrap();
        assert!(rhs.iter().all(|v| v.abs() < 1e-10), "{rhs:?}");
        for i in 0..3 {
            let v = SimplexPoint::vertex(3, i);
            let rhs = replicator_rhs(&a, &v).unwrap();
            assert!(rhs.iter().all(|v| v.abs() == 0.0));
        }
    }

    #[test]
    fn rhs_zero_at_center_for_symmetric_equal_diagonal() {
        let a = PayoffMatrix::new(2, vec![-1.0, -3.0, -3.0, -1.0]).unwrap();
        let x = SimplexPoint::uniform(2);
        let rhs = replicator_rhs(&a, &x).unwrap();
        assert!(rhs.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn ess_of_single_type_is_trivial() {
        let c = RateMatrix::new(1, vec![2.0]).unwrap();
        let ess = ess_fixed_point(&payoff_from_rates(&c)).unwrap();
        assert_eq!(ess.x_star.coords(), &[1.0]);
    }

    #[test]
    fn ess_of_symmetric_rates_is_uniform() {
        for k in 2..=5usize {
            let c = RateMatrix::new(k, vec![1.7; k * k]).unwrap();
            let ess = ess_fixed_point(&payoff_from_rates(&c)).unwrap();
            for &xi in ess.x_star.coords() {
                assert!((xi - 1.0 / k as f64).abs() < 1e-12);
            }
            assert!(ess.residual < 1e-10);
        }
    }

    #[test]
    fn ess_of_circulant_is_uniform() {
        let c = instances::circulant(3, &[2.0, 0.1, 1.0]).unwrap();
        let ess = ess_fixed_point(&payoff_from_rates(&c)).unwrap();
        for &xi in ess.x_star.coords() {
            assert!((xi - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_payoff_is_reported() {
        let a = PayoffMatrix::new(2, vec![-1.0, -1.0, -1.0, -1.0]).unwrap();
        assert!(matches!(
            ess_fixed_point(&a),
            Err(Error::SingularMatrix) | Err(Error::BoundaryFixedPoint(_))
        ));
    }

    #[test]
    fn boundary_fixed_point_is_reported_not_clamped() {
        // A⁻¹1 = (0, 1) puts the fixed point on the simplex boundary.
        let a = PayoffMatrix::new(2, vec![-1.0, 1.0, 1.0, 1.0]).unwrap();
        match ess_fixed_point(&a) {
            Err(Error::BoundaryFixedPoint(_)) => {}
            other => panic!("expected boundary error, got {other:?}"),
        }
    }

    #[test]
    fn verify_ess_passes_on_stable_class_and_fails_at_vertex() {
        let mut rng = stream_rng(5, 0);
        let c = instances::rand_stable_rates(4, &mut rng);
        let a = payoff_from_rates(&c);
        let ess = ess_fixed_point(&a).unwrap();
        let report = verify_ess(&a, &ess.x_star, 1e-2, 2000, 99).unwrap();
        assert!(report.pass, "min margin {}", report.min_margin);

        // A vertex is not the stable interior state: the margin goes negative.
        let vertex_like = SimplexPoint::new(vec![0.97, 0.01, 0.01, 0.01]).unwrap();
        let report = verify_ess(&a, &vertex_like, 1e-2, 2000, 99).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn verify_ess_detects_unstable_interior_point() {
        // All-ones rates: the interior fixed point is a repeller, the
        // sampled margin must come out negative.
        let c = RateMatrix::new(2, vec![1.0; 4]).unwrap();
        let a = payoff_from_rates(&c);
        let ess = ess_fixed_point(&a).unwrap();
        let report = verify_ess(&a, &ess.x_star, 1e-2, 2000, 7).unwrap();
        assert!(!report.pass, "min margin {}", report.min_margin);
    }

    #[test]
    fn verify_ess_margin_matches_expansion() {
        // The sampled margin equals −ε uᵀA x* − ε² uᵀA u; with u tangent the
        // first term is c·uᵀ1 = 0, so margin = −ε² uᵀA u.
        let mut rng = stream_rng(12, 0);
        let c = instances::rand_stable_rates(3, &mut rng);
        let a = payoff_from_rates(&c);
        let ess = ess_fixed_point(&a).unwrap();
        let u = {
            let mut u = vec![0.7, -0.2, -0.5];
            let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in u.iter_mut() {
                *v /= norm;
            }
            u
        };
        let eps = 1e-3;
        let x: Vec<f64> = ess
            .x_star
            .coords()
            .iter()
            .zip(&u)
            .map(|(s, ui)| s + eps * ui)
            .collect();
        let ax = a.mul_vec(&x);
        let margin: f64 = ess
            .x_star
            .coords()
            .iter()
            .zip(&x)
            .zip(&ax)
            .map(|((s, xi), axi)| (s - xi) * axi)
            .sum();
        let au = a.mul_vec(&u);
        let ax_star = a.mul_vec(ess.x_star.coords());
        let expansion = -eps * u.iter().zip(&ax_star).map(|(ui, v)| ui * v).sum::<f64>()
            - eps * eps * u.iter().zip(&au).map(|(ui, v)| ui * v).sum::<f64>();
        assert!((margin - expansion).abs() < 1e-12);
    }

    #[test]
    fn integrate_keeps_fixed_point_fixed() {
        let c = instances::circulant(3, &[4.0, 1.0, 0.5]).unwrap();
        let a = payoff_from_rates(&c);
        let ess = ess_fixed_point(&a).unwrap();
        let path = integrate(&a, &ess.x_star, 5.0, 0.01).unwrap();
        assert!(path.final_point().l1_distance(&ess.x_star) < 1e-10);
    }

    #[test]
    fn integrate_converges_to_ess_for_circulant() {
        let c = instances::circulant(3, &[4.0, 1.0, 0.5]).unwrap();
        let a = payoff_from_rates(&c);
        let x0 = SimplexPoint::new(vec![0.8, 0.1, 0.1]).unwrap();
        let report = converge_to_ess(&a, &x0, 1e-6, 0.002, 8.0, 1e6).unwrap();
        assert!(report.converged, "distance {}", report.distance_l1);
        let ess = ess_fixed_point(&a).unwrap();
        assert!(report.x_final.l1_distance(&ess.x_star) < 1e-6);
    }

    #[test]
    fn step_halving_agrees() {
        let c = instances::circulant(3, &[4.0, 1.0, 0.5]).unwrap();
        let a = payoff_from_rates(&c);
        let x0 = SimplexPoint::new(vec![0.5, 0.2, 0.3]).unwrap();
        let coarse = integrate(&a, &x0, 4.0, 0.004).unwrap();
        let fine = integrate(&a, &x0, 4.0, 0.002).unwrap();
        let d = coarse.final_point().l1_distance(fine.final_point());
        assert!(d < 1e-8, "step-halving difference {d}");
    }

    #[test]
    fn integrate_rejects_bad_step() {
        let a = PayoffMatrix::new(1, vec![-1.0]).unwrap();
        let x0 = SimplexPoint::uniform(1);
        assert!(integrate(&a, &x0, 1.0, 0.0).is_err());
        assert!(integrate(&a, &x0, 1.0, -0.1).is_err());
    }

    #[test]
    fn path_satisfies_simplex_invariant() {
        let c = instances::circulant(3, &[2.0, 0.1, 1.0]).unwrap();
        let a = payoff_from_rates(&c);
        let x0 = SimplexPoint::new(vec![0.6, 0.3, 0.1]).unwrap();
        let path = integrate(&a, &x0, 10.0, 0.01).unwrap();
        for i in 0..path.len() {
            let sum: f64 = path.point(i).coords().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(path.point(i).coords().iter().all(|&v| v >= 0.0));
        }
    }
}
