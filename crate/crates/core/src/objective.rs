//! Negative ELBO in Bregman form, L(φ) = D_A(φ*‖φ), with its gradient and
//! natural gradient, the three-point identity and the monotonicity bound.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expfam::{check_dim, sigmoid, softplus, ExpFamModel, NaturalParams};

/// A family paired with its optimum φ*.
#[derive(Debug, Clone)]
pub struct BregmanObjective {
    model: ExpFamModel,
    optimum: NaturalParams,
    box_bound: Option<f64>,
}

impl BregmanObjective {
    pub fn new(model: ExpFamModel, optimum: NaturalParams) -> Result<Self> {
        check_dim(model.as_ref(), &optimum)?;
        if !model.contains(&optimum) {
            return Err(Error::OutOfDomain);
        }
        Ok(Self {
            model,
            optimum,
            box_bound: None,
        })
    }

    /// Restricts iterates to the box [−B, B]^d. The optimum must lie inside.
    pub fn with_box(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!("box bound must be positive, got {bound}")));
        }
        if self.optimum.amax() > bound {
            return Err(Error::InvalidArgument(format!(
                "optimum lies outside the box [-{bound}, {bound}]^d"
            )));
        }
        self.box_bound = Some(bound);
        Ok(self)
    }

    pub fn model(&self) -> &ExpFamModel {
        &self.model
    }

    pub fn optimum(&self) -> &NaturalParams {
        &self.optimum
    }

    pub fn dim(&self) -> usize {
        self.optimum.dim()
    }

    pub fn box_bound(&self) -> Option<f64> {
        self.box_bound
    }

    pub(crate) fn check(&self, phi: &NaturalParams) -> Result<()> {
        check_dim(self.model.as_ref(), phi)?;
        if !self.model.contains(phi) {
            return Err(Error::OutOfDomain);
        }
        Ok(())
    }

    /// δ = φ − φ*.
    pub fn delta(&self, phi: &NaturalParams) -> Result<DVector<f64>> {
        check_dim(self.model.as_ref(), phi)?;
        Ok(phi.as_vector() - self.optimum.as_vector())
    }

    /// L(φ) = A(φ*) − A(φ) − ⟨μ(φ), φ* − φ⟩.
    pub fn neg_elbo(&self, phi: &NaturalParams) -> Result<f64> {
        self.check(phi)?;
        Ok(self.model.bregman(&self.optimum, phi))
    }

    /// ∇L(φ) = H(φ)(φ − φ*).
    pub fn grad(&self, phi: &NaturalParams) -> Result<DVector<f64>> {
        self.check(phi)?;
        Ok(self.model.fisher(phi) * (phi.as_vector() - self.optimum.as_vector()))
    }

    /// H(φ)⁻¹∇L(φ), which is exactly φ − φ*; no linear solve.
    pub fn nat_grad(&self, phi: &NaturalParams) -> Result<DVector<f64>> {
        self.check(phi)?;
        Ok(phi.as_vector() - self.optimum.as_vector())
    }

    /// Evaluates L(φ′) ≥ L(φ) + ⟨φ − φ*, μ(φ′) − μ(φ)⟩.
    pub fn monotonicity_check(
        &self,
        phi: &NaturalParams,
        phi_prime: &NaturalParams,
    ) -> Result<MonotonicityCheck> {
        let lhs = self.neg_elbo(phi_prime)?;
        let base = self.neg_elbo(phi)?;
        let shift = self
            .delta(phi)?
            .dot(&(self.model.mean(phi_prime) - self.model.mean(phi)));
        let rhs = base + shift;
        Ok(MonotonicityCheck {
            lhs,
            rhs,
            slack: lhs - rhs,
        })
    }
}

/// Both sides of the monotonicity inequality. The slack equals D_A(φ‖φ′).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Both sides of the three-point identity
/// D(u‖v) − D(u‖w) − ⟨μ(w) − μ(v), u − w⟩ = D(w‖v).
pub fn three_point_gap(
    model: &ExpFamModel,
    u: &NaturalParams,
    v: &NaturalParams,
    w: &NaturalParams,
) -> Result<(f64, f64)> {
    for p in [u, v, w] {
        check_dim(model.as_ref(), p)?;
        if !model.contains(p) {
            return Err(Error::OutOfDomain);
        }
    }
    let cross = (model.mean(w) - model.mean(v)).dot(&(u.as_vector() - w.as_vector()));
    let lhs = model.bregman(u, v) - model.bregman(u, w) - cross;
    let rhs = model.bregman(w, v);
    Ok((lhs, rhs))
}

/// KL(Bern(σ(φ)) ‖ Bern(σ(φ*))) summed over coordinates, computed in mean
/// coordinates. Independent of the log-partition route.
pub fn kl_oracle_bernoulli(optimum: &NaturalParams, phi: &NaturalParams) -> Result<f64> {
    if optimum.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: optimum.dim(),
            found: phi.dim(),
        });
    }
    // log σ(x) = −softplus(−x), log(1 − σ(x)) = −softplus(x)
    Ok(optimum
        .iter()
        .zip(phi.iter())
        .map(|(&star, &x)| {
            let p = sigmoid(x);
            let log_ratio_one = softplus(-star) - softplus(-x);
            let log_ratio_zero = softplus(star) - softplus(x);
            p * log_ratio_one + (1.0 - p) * log_ratio_zero
        })
        .sum())
}
