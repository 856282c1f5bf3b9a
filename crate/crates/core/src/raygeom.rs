//! Spectral geometry along the segment φ* → φ.
//!
//! The envelope (α(φ), β(φ)) is the infimum of λ_min and supremum of λ_max
//! of the Fisher information over φ_s = φ* + s(φ − φ*), s ∈ [0, 1]. It is
//! estimated on a uniform closed grid with an odd number of nodes, so
//! s ∈ {0, ½, 1} are always sampled. The grid minimum can only overestimate
//! the true infimum (and the grid maximum underestimate the supremum); the
//! size of that bias is bounded by [`RayEnvelope::grid_tolerance`].

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expfam::NaturalParams;
use crate::objective::BregmanObjective;
use crate::verify;

pub const DEFAULT_GRID_SIZE: usize = 257;
pub const DEFAULT_PANELS: usize = 2048;

/// φ_s = φ* + s(φ − φ*). The endpoints are returned exactly.
pub fn ray_point(optimum: &NaturalParams, phi: &NaturalParams, s: f64) -> Result<NaturalParams> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange {
            what: "s",
            value: s,
            range: "[0, 1]",
        });
    }
    if optimum.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: optimum.dim(),
            found: phi.dim(),
        });
    }
    if s == 0.0 {
        return Ok(optimum.clone());
    }
    if s == 1.0 {
        return Ok(phi.clone());
    }
    let v = optimum.as_vector() + s * (phi.as_vector() - optimum.as_vector());
    NaturalParams::from_vector(v)
}

/// Fisher spectrum extremes at one grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RaySample {
    pub s: f64,
    pub lam_min: f64,
    pub lam_max: f64,
}

/// Grid estimate of the ray-wise spectral envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct RayEnvelope {
    pub alpha: f64,
    pub beta: f64,
    pub samples: Vec<RaySample>,
    pub grid_size: usize,
    optimum: DVector<f64>,
    endpoint: DVector<f64>,
}

impl RayEnvelope {
    /// Largest change in λ_min or λ_max between adjacent grid nodes, i.e.
    /// the observed Lipschitz modulus times Δs. Bounds how far the grid
    /// extrema can sit from the continuum ones.
    pub fn grid_tolerance(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                (w[1].lam_min - w[0].lam_min)
                    .abs()
                    .max((w[1].lam_max - w[0].lam_max).abs())
            })
            .fold(0.0, f64::max)
    }

    /// The envelope widened by the grid bias. On each grid interval the
    /// extremum between two nodes can overshoot the nodes by at most half of
    /// the local adjacent jump, estimated from the interval and its two
    /// neighbours. Never wider than (α − tol, β + tol) with the global
    /// [`grid_tolerance`](Self::grid_tolerance).
    pub fn widened(&self) -> (f64, f64) {
        let n = self.samples.len();
        if n < 2 {
            return (self.alpha, self.beta);
        }
        let jumps = |f: fn(&RaySample) -> f64| -> Vec<f64> {
            self.samples.windows(2).map(|w| (f(&w[1]) - f(&w[0])).abs()).collect()
        };
        let local = |j: &[f64], i: usize| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(j.len() - 1);
            j[lo..=hi].iter().copied().fold(0.0, f64::max)
        };
        let jmin = jumps(|r| r.lam_min);
        let jmax = jumps(|r| r.lam_max);
        let mut lo = self.alpha;
        let mut hi = self.beta;
        for i in 0..n - 1 {
            let (a, b) = (&self.samples[i], &self.samples[i + 1]);
            lo = lo.min(a.lam_min.min(b.lam_min) - 0.5 * local(&jmin, i));
            hi = hi.max(a.lam_max.max(b.lam_max) + 0.5 * local(&jmax, i));
        }
        (lo, hi)
    }

    /// Upper bound on the continuum condition number β/α given the grid bias.
    pub fn kappa_upper(&self) -> Result<f64> {
        let (lo, hi) = self.widened();
        if lo <= 0.0 {
            return Err(Error::Precondition(format!(
                "widened alpha {lo} is not positive; refine the grid"
            )));
        }
        Ok(hi / lo)
    }

    pub fn is_for(&self, obj: &BregmanObjective, phi: &NaturalParams) -> bool {
        self.optimum == *obj.optimum().as_vector() && self.endpoint == *phi.as_vector()
    }
}

/// Grid envelope over `grid_size` equally spaced nodes in [0, 1].
pub fn spectral_envelope(
    obj: &BregmanObjective,
    phi: &NaturalParams,
    grid_size: usize,
) -> Result<RayEnvelope> {
    if grid_size < 3 || grid_size % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "envelope grid size must be odd and >= 3, got {grid_size}"
        )));
    }
    obj.check(phi)?;
    let model = obj.model();
    let last = grid_size - 1;
    let mut samples = Vec::with_capacity(grid_size);
    for j in 0..grid_size {
        let s = j as f64 / last as f64;
        let point = ray_point(obj.optimum(), phi, s)?;
        if !model.contains(&point) {
            return Err(Error::OutOfDomain);
        }
        let (lam_min, lam_max) = model.fisher_extremes(&point);
        if !(lam_min.is_finite() && lam_max.is_finite() && lam_min > 0.0) {
            return Err(Error::InvalidModel(format!(
                "Fisher information not positive definite at s = {s}: ({lam_min}, {lam_max})"
            )));
        }
        samples.push(RaySample { s, lam_min, lam_max });
    }
    let alpha = samples.iter().map(|r| r.lam_min).fold(f64::INFINITY, f64::min);
    let beta = samples.iter().map(|r| r.lam_max).fold(f64::NEG_INFINITY, f64::max);
    Ok(RayEnvelope {
        alpha,
        beta,
        samples,
        grid_size,
        optimum: obj.optimum().as_vector().clone(),
        endpoint: phi.as_vector().clone(),
    })
}

/// L(φ) = ∫₀¹ s · δᵀH(φ_s)δ ds by composite Simpson.
pub fn integral_neg_elbo(obj: &BregmanObjective, phi: &NaturalParams, panels: usize) -> Result<f64> {
    obj.check(phi)?;
    let delta = obj.delta(phi)?;
    let model = obj.model();
    verify::simpson(
        |s| match ray_point(obj.optimum(), phi, s) {
            Ok(point) => s * delta.dot(&(model.fisher(&point) * &delta)),
            Err(_) => f64::NAN,
        },
        0.0,
        1.0,
        panels,
    )
}

/// (α/2‖δ‖², β/2‖δ‖²).
pub fn quadratic_bounds(obj: &BregmanObjective, phi: &NaturalParams, env: &RayEnvelope) -> Result<(f64, f64)> {
    obj.check(phi)?;
    if !env.is_for(obj, phi) {
        return Err(Error::MismatchedRay);
    }
    let delta_sq = obj.delta(phi)?.norm_squared();
    Ok((0.5 * env.alpha * delta_sq, 0.5 * env.beta * delta_sq))
}

/// Quantities of the one-point gradient and PL-type inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnePointReport {
    /// ⟨∇L(φ), δ⟩
    pub inner: f64,
    /// ‖δ‖²
    pub delta_sq: f64,
    #[serde(rename = "L")]
    pub loss: f64,
    /// α‖δ‖²
    pub grad_lower: f64,
    /// β‖δ‖²
    pub grad_upper: f64,
    /// (2α/β) L
    pub pl_lower: f64,
    /// (2β/α) L
    pub pl_upper: f64,
    pub kappa: f64,
}

pub fn one_point_report(obj: &BregmanObjective, phi: &NaturalParams, env: &RayEnvelope) -> Result<OnePointReport> {
    if !(env.alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha must be positive, got {}", env.alpha)));
    }
    if !env.is_for(obj, phi) {
        return Err(Error::MismatchedRay);
    }
    let delta = obj.delta(phi)?;
    let inner = obj.grad(phi)?.dot(&delta);
    let delta_sq = delta.norm_squared();
    let loss = obj.neg_elbo(phi)?;
    Ok(OnePointReport {
        inner,
        delta_sq,
        loss,
        grad_lower: env.alpha * delta_sq,
        grad_upper: env.beta * delta_sq,
        pl_lower: 2.0 * env.alpha / env.beta * loss,
        pl_upper: 2.0 * env.beta / env.alpha * loss,
        kappa: env.beta / env.alpha,
    })
}

/// κ = β/α.
pub fn condition_number(env: &RayEnvelope) -> Result<f64> {
    if !(env.alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha must be positive, got {}", env.alpha)));
    }
    Ok(env.beta / env.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::{make_bernoulli_product, make_quadratic_diag, sigmoid_prime};
    use approx::assert_relative_eq;

    fn p(v: &[f64]) -> NaturalParams {
        NaturalParams::new(v.to_vec()).unwrap()
    }

    fn bern1() -> BregmanObjective {
        BregmanObjective::new(make_bernoulli_product(1).unwrap(), p(&[1.0])).unwrap()
    }

    fn quad() -> BregmanObjective {
        BregmanObjective::new(make_quadratic_diag(&[0.2, 1.0]).unwrap(), p(&[0.0, 0.0])).unwrap()
    }

    #[test]
    fn ray_point_examples() {
        let (a, b) = (p(&[1.0]), p(&[-1.0]));
        assert_eq!(ray_point(&a, &b, 0.0).unwrap(), a);
        assert_eq!(ray_point(&a, &b, 1.0).unwrap(), b);
        assert_eq!(ray_point(&a, &b, 0.5).unwrap()[0], 0.0);
        let odd = (p(&[0.1, 0.7]), p(&[0.3, -0.9]));
        assert_eq!(ray_point(&odd.0, &odd.1, 1.0).unwrap(), odd.1);
        assert!(matches!(ray_point(&a, &b, 1.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(ray_point(&a, &b, -0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn envelope_rejects_even_or_small_grids() {
        let obj = bern1();
        assert!(spectral_envelope(&obj, &p(&[-1.0]), 256).is_err());
        assert!(spectral_envelope(&obj, &p(&[-1.0]), 1).is_err());
        assert!(spectral_envelope(&obj, &p(&[-1.0]), 3).is_ok());
    }

    #[test]
    fn quadratic_envelope_is_exact() {
        let env = spectral_envelope(&quad(), &p(&[1.0, 1.0]), 5).unwrap();
        assert_eq!((env.alpha, env.beta), (0.2, 1.0));
        assert_eq!(env.grid_tolerance(), 0.0);
        assert_eq!(condition_number(&env).unwrap(), 5.0);
    }

    #[test]
    fn bernoulli_envelope_reference_ray() {
        let env = spectral_envelope(&bern1(), &p(&[-1.0]), 257).unwrap();
        assert_eq!(env.alpha, sigmoid_prime(-1.0));
        assert!((env.alpha - 0.19661193).abs() < 1e-8);
        assert_eq!(env.beta, 0.25);
        let kappa = condition_number(&env).unwrap();
        assert!((kappa - 1.27154).abs() < 1e-5);
        let ss: Vec<f64> = env.samples.iter().map(|r| r.s).collect();
        assert!(ss.contains(&0.0) && ss.contains(&0.5) && ss.contains(&1.0));
        for r in &env.samples {
            assert!(env.alpha <= r.lam_min && env.beta >= r.lam_max);
        }
    }

    #[test]
    fn degenerate_ray() {
        let env = spectral_envelope(&bern1(), &p(&[1.0]), 9).unwrap();
        assert_eq!(env.alpha, env.beta);
        assert_eq!(env.alpha, sigmoid_prime(1.0));
        let (lo, hi) = quadratic_bounds(&bern1(), &p(&[1.0]), &env).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn integral_representation_examples() {
        assert_eq!(integral_neg_elbo(&bern1(), &p(&[1.0]), 8).unwrap(), 0.0);
        let q = integral_neg_elbo(&quad(), &p(&[1.0, 1.0]), 2).unwrap();
        assert!((q - 0.6).abs() < 1e-15);
        let b = integral_neg_elbo(&bern1(), &p(&[-1.0]), 2048).unwrap();
        assert!((b - 0.5f64.tanh()).abs() <= 1e-8 * 0.5f64.tanh());
        assert!(integral_neg_elbo(&bern1(), &p(&[-1.0]), 7).is_err());
    }

    #[test]
    fn quadratic_bounds_examples() {
        let obj = quad();
        let phi = p(&[1.0, 1.0]);
        let env = spectral_envelope(&obj, &phi, 257).unwrap();
        let (lo, hi) = quadratic_bounds(&obj, &phi, &env).unwrap();
        assert_relative_eq!(lo, 0.2, max_relative = 1e-15);
        assert_relative_eq!(hi, 1.0, max_relative = 1e-15);

        let obj = bern1();
        let phi = p(&[-1.0]);
        let env = spectral_envelope(&obj, &phi, 257).unwrap();
        let (lo, hi) = quadratic_bounds(&obj, &phi, &env).unwrap();
        assert!((lo - 0.3932239).abs() < 1e-7);
        assert_eq!(hi, 0.5);
        let l = obj.neg_elbo(&phi).unwrap();
        assert!(lo <= l && l <= hi);
        assert_eq!(quadratic_bounds(&obj, &p(&[-2.0]), &env), Err(Error::MismatchedRay));
    }

    #[test]
    fn one_point_reference_values() {
        let obj = bern1();
        let phi = p(&[-1.0]);
        let env = spectral_envelope(&obj, &phi, 257).unwrap();
        let r = one_point_report(&obj, &phi, &env).unwrap();
        let h = sigmoid_prime(-1.0);
        let l = 0.5f64.tanh();
        assert_relative_eq!(r.inner, 4.0 * h, max_relative = 1e-15);
        assert!((r.inner - 0.78644773).abs() < 1e-8);
        assert!((r.pl_lower - 0.726862).abs() < 1e-6);
        assert!((r.pl_upper - 1.175201).abs() < 1e-6);
        assert_eq!(r.grad_lower, r.inner);
        assert_eq!(r.grad_upper, 1.0);
        assert!((2.0 * env.alpha / env.beta - 1.57290).abs() < 1e-5);
        assert!((2.0 * env.beta / env.alpha - 2.54308).abs() < 1e-5);
        // (2α/β)L = 8h·tanh(½), (2β/α)L = tanh(½)/(2h)
        assert_relative_eq!(r.pl_lower, 8.0 * h * l, max_relative = 1e-14);
        assert_relative_eq!(r.pl_upper, l / (2.0 * h), max_relative = 1e-14);
        assert!(r.pl_lower <= r.inner && r.inner <= r.pl_upper);
    }

    #[test]
    fn one_point_isotropic_is_tight() {
        let obj = BregmanObjective::new(make_quadratic_diag(&[3.0; 4]).unwrap(), p(&[0.5, 0.0, -1.0, 2.0])).unwrap();
        let phi = p(&[1.0, 2.0, 3.0, 4.0]);
        let env = spectral_envelope(&obj, &phi, 3).unwrap();
        let r = one_point_report(&obj, &phi, &env).unwrap();
        assert_relative_eq!(r.inner, 3.0 * r.delta_sq, max_relative = 1e-15);
        assert_relative_eq!(r.grad_lower, r.inner, max_relative = 1e-15);
        assert_relative_eq!(r.grad_upper, r.inner, max_relative = 1e-15);
    }

    #[test]
    fn one_point_vanishes_at_optimum() {
        let obj = bern1();
        let phi = p(&[1.0]);
        let env = spectral_envelope(&obj, &phi, 3).unwrap();
        let r = one_point_report(&obj, &phi, &env).unwrap();
        assert_eq!((r.inner, r.delta_sq, r.loss, r.pl_lower, r.pl_upper), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn precondition_errors() {
        let obj = bern1();
        let phi = p(&[-1.0]);
        let mut env = spectral_envelope(&obj, &phi, 3).unwrap();
        env.alpha = 0.0;
        assert!(matches!(one_point_report(&obj, &phi, &env), Err(Error::Precondition(_))));
        assert!(matches!(condition_number(&env), Err(Error::Precondition(_))));
    }

    #[test]
    fn refinement_is_monotone() {
        let obj = BregmanObjective::new(make_bernoulli_product(2).unwrap(), p(&[0.7, -2.0])).unwrap();
        let phi = p(&[-3.1, 4.3]);
        let mut prev: Option<RayEnvelope> = None;
        for k in 2..10 {
            let env = spectral_envelope(&obj, &phi, (1 << k) + 1).unwrap();
            if let Some(prev) = prev {
                assert!(env.alpha <= prev.alpha);
                assert!(env.beta >= prev.beta);
                // Lipschitz proxy: the adjacent jump halves with the spacing.
                let ratio = prev.grid_tolerance() / env.grid_tolerance();
                assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
            }
            prev = Some(env);
        }
    }
}
