//! Gradient descent and natural gradient descent on the Bregman objective.
//!
//! Runs are carried out in error coordinates δ_k = φ_k − φ*, which is the
//! quantity every rate statement is about. The iterate φ_k = φ* + δ_k is
//! recorded alongside; keeping δ_k as the primary state means the NGD
//! recursion δ_{k+1} = (1 − η)δ_k is applied without absorption error even
//! when ‖δ_k‖ ≪ ‖φ*‖.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::NaturalParams;
use crate::objective::BregmanObjective;
use crate::raygeom::spectral_envelope;

pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_DIST_TOL: f64 = 1e-10;

/// Contraction ratios are not reported below this distance.
const UNDERFLOW_DIST: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Ngd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Ngd => "ngd",
        }
    }
}

/// Step-size rule. Iterations are numbered from 1: the step taking φ_{i−1}
/// to φ_i uses index i, so the diminishing rule c/i is defined from the
/// first step on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    Diminishing { c: f64 },
    /// GD only: γ_k = 2/(α(φ_k) + β(φ_k)) with the envelope recomputed at
    /// every iterate on a grid of `grid_size` nodes.
    RayOptimal { grid_size: usize },
}

impl StepSchedule {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {value}")));
        }
        Ok(Self::Constant(value))
    }

    pub fn diminishing(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidArgument(format!("diminishing constant must lie in (0, 1), got {c}")));
        }
        Ok(Self::Diminishing { c })
    }

    pub fn ray_optimal(grid_size: usize) -> Result<Self> {
        if grid_size < 3 || grid_size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "envelope grid size must be odd and >= 3, got {grid_size}"
            )));
        }
        Ok(Self::RayOptimal { grid_size })
    }

    /// Checks the schedule against the method it drives.
    pub fn validate_for(&self, method: Method) -> Result<()> {
        match (*self, method) {
            (Self::Constant(eta), Method::Ngd) if !(eta > 0.0 && eta < 2.0) => Err(Error::InvalidArgument(
                format!("constant NGD step must lie in (0, 2), got {eta}"),
            )),
            (Self::Constant(v), _) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::InvalidArgument(format!("step size must be positive, got {v}")))
            }
            (Self::Diminishing { c }, _) if !(c > 0.0 && c < 1.0) => Err(Error::InvalidArgument(format!(
                "diminishing constant must lie in (0, 1), got {c}"
            ))),
            (Self::RayOptimal { .. }, Method::Ngd) => Err(Error::InvalidArgument(
                "ray-optimal step is defined for GD only".into(),
            )),
            (Self::RayOptimal { grid_size }, _) if grid_size < 3 || grid_size % 2 == 0 => Err(
                Error::InvalidArgument(format!("envelope grid size must be odd and >= 3, got {grid_size}")),
            ),
            _ => Ok(()),
        }
    }

    /// Step size for iteration `i >= 1` of a non-adaptive schedule.
    pub fn step(&self, i: usize) -> Option<f64> {
        match *self {
            Self::Constant(v) => Some(v),
            Self::Diminishing { c } => Some(c / i.max(1) as f64),
            Self::RayOptimal { .. } => None,
        }
    }
}

/// Run termination controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    pub dist_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            dist_tol: DEFAULT_DIST_TOL,
        }
    }
}

/// Everything recorded along one optimiser run. Index k refers to φ_k;
/// `steps[k]` and `contraction[k]` describe the transition k → k+1.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub iterates: Vec<NaturalParams>,
    /// δ_k = φ_k − φ*
    pub errors: Vec<DVector<f64>>,
    pub dist: Vec<f64>,
    pub loss: Vec<f64>,
    pub steps: Vec<f64>,
    /// ‖δ_{k+1}‖/‖δ_k‖, absent once ‖δ_k‖ has underflowed.
    pub contraction: Vec<Option<f64>>,
    /// ‖δ_k − (δ_kᵀu)u‖ with u = δ₀/‖δ₀‖.
    pub collinearity: Vec<f64>,
    pub converged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    /// Number of steps taken.
    pub fn iterations(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn recompute_dist(&self, k: usize) -> f64 {
        scaled_norm(&self.errors[k])
    }

    /// First k with dist[k] ≤ tol.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.dist.iter().position(|&d| d <= tol)
    }
}

/// Euclidean norm scaled by the largest entry, so tiny errors do not
/// underflow to zero.
pub fn scaled_norm(v: &DVector<f64>) -> f64 {
    let m = v.amax();
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * (v / m).norm()
}

fn clamp_to_box(obj: &BregmanObjective, delta: &mut DVector<f64>) {
    if let Some(bound) = obj.box_bound() {
        for (d, &star) in delta.iter_mut().zip(obj.optimum().iter()) {
            let phi = star + *d;
            if phi > bound {
                *d = bound - star;
            } else if phi < -bound {
                *d = -bound - star;
            }
        }
    }
}

/// φ − γ∇L(φ), clamped to the objective's box when one is configured.
pub fn gd_step(obj: &BregmanObjective, phi: &NaturalParams, gamma: f64) -> Result<NaturalParams> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("GD step must be positive, got {gamma}")));
    }
    let g = obj.grad(phi)?;
    let mut next = phi.as_vector() - gamma * g;
    if let Some(bound) = obj.box_bound() {
        next.apply(|x| *x = x.clamp(-bound, bound));
    }
    NaturalParams::from_vector(next).map_err(|_| Error::Divergence { iteration: 1 })
}

/// φ* + (1 − η)(φ − φ*).
pub fn ngd_step(obj: &BregmanObjective, phi: &NaturalParams, eta: f64) -> Result<NaturalParams> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("NGD step must be positive, got {eta}")));
    }
    obj.check(phi)?;
    let star = obj.optimum().as_vector();
    NaturalParams::from_vector(star + (1.0 - eta) * (phi.as_vector() - star))
        .map_err(|_| Error::Divergence { iteration: 1 })
}

/// Runs `method` from φ₀ until ‖δ_k‖ ≤ `dist_tol` or `max_iters` steps.
pub fn run(
    obj: &BregmanObjective,
    phi0: &NaturalParams,
    method: Method,
    schedule: StepSchedule,
    opts: RunOptions,
) -> Result<Trajectory> {
    obj.check(phi0)?;
    schedule.validate_for(method)?;
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if !(opts.dist_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("dist_tol must be non-negative, got {}", opts.dist_tol)));
    }

    let model = obj.model();
    let star = obj.optimum().as_vector();
    let mut delta = phi0.as_vector() - star;
    let direction = {
        let n = scaled_norm(&delta);
        (n > 0.0).then(|| &delta / n)
    };

    let mut traj = Trajectory {
        method,
        iterates: Vec::new(),
        errors: Vec::new(),
        dist: Vec::new(),
        loss: Vec::new(),
        steps: Vec::new(),
        contraction: Vec::new(),
        collinearity: Vec::new(),
        converged: false,
    };

    let mut phi = phi0.clone();
    for k in 0.. {
        if k > 0 {
            phi = NaturalParams::from_vector(star + &delta).map_err(|_| Error::Divergence { iteration: k })?;
            if !model.contains(&phi) {
                return Err(Error::OutOfDomain);
            }
        }
        let loss = model.bregman(obj.optimum(), &phi);
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: k });
        }
        let dist = scaled_norm(&delta);
        let residual = match &direction {
            Some(u) => scaled_norm(&(&delta - u * delta.dot(u))),
            None => 0.0,
        };
        if let Some(&prev) = traj.dist.last() {
            traj.contraction.push((prev >= UNDERFLOW_DIST).then(|| dist / prev));
        }
        traj.iterates.push(phi.clone());
        traj.errors.push(delta.clone());
        traj.dist.push(dist);
        traj.loss.push(loss);
        traj.collinearity.push(residual);

        if dist <= opts.dist_tol {
            traj.converged = true;
            break;
        }
        if k == opts.max_iters {
            break;
        }

        let i = k + 1;
        let step = match schedule {
            StepSchedule::RayOptimal { grid_size } => {
                let env = spectral_envelope(obj, &phi, grid_size)?;
                optimal_gd_step(env.alpha, env.beta)?
            }
            _ => schedule.step(i).expect("fixed schedule"),
        };
        match method {
            Method::Ngd => delta *= 1.0 - step,
            Method::Gd => {
                let g = model.fisher(&phi) * &delta;
                delta -= step * g;
                clamp_to_box(obj, &mut delta);
            }
        }
        if delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { iteration: i });
        }
        traj.steps.push(step);
    }
    Ok(traj)
}

/// γ* = 2/(α + β).
pub fn optimal_gd_step(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= beta && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < alpha <= beta, got alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok(2.0 / (alpha + beta))
}

/// ρ = max{|1 − γα|, |1 − γβ|}.
pub fn gd_contraction_factor(alpha: f64, beta: f64, gamma: f64) -> f64 {
    (1.0 - gamma * alpha).abs().max((1.0 - gamma * beta).abs())
}

/// Closed-form NGD guarantees after `k` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NgdBounds {
    /// ‖δ_k‖ (constant step, exact) or its exp(−Σηᵢ) envelope (diminishing).
    pub dist_bound: f64,
    /// Bound on L(φ_k)/L(φ₀).
    pub loss_bound_ratio: f64,
}

/// Constant η: |1−η|^k‖δ₀‖ and κ₀|1−η|^{2k}. Diminishing c/i:
/// exp(−Σ_{i=1}^{k−1} c/i)‖δ₀‖ and κ₀exp(−2Σ_{i=1}^{k−1} c/i).
pub fn ngd_theoretical_bounds(schedule: StepSchedule, k: usize, dist0: f64, kappa0: f64) -> Result<NgdBounds> {
    schedule.validate_for(Method::Ngd)?;
    Ok(match schedule {
        StepSchedule::Constant(eta) => {
            let r = (1.0 - eta).abs();
            NgdBounds {
                dist_bound: r.powi(k as i32) * dist0,
                loss_bound_ratio: kappa0 * r.powi(2 * k as i32),
            }
        }
        StepSchedule::Diminishing { c } => {
            let sum: f64 = (1..k).map(|i| c / i as f64).sum();
            NgdBounds {
                dist_bound: (-sum).exp() * dist0,
                loss_bound_ratio: kappa0 * (-2.0 * sum).exp(),
            }
        }
        StepSchedule::RayOptimal { .. } => unreachable!("rejected by validate_for"),
    })
}
