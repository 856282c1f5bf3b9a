//! Exponential families described entirely by their log-partition function.
//!
//! A family is the tuple (A, ∇A, ∇²A, Ω): log-partition, mean map, Fisher
//! map and domain. Base measure and sufficient statistic are never needed
//! downstream, so they are not represented.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::symeig;

/// Natural parameter vector: finite entries, dimension at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams(DVector<f64>);

impl NaturalParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_vector(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for NaturalParams {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<f64> for NaturalParams {
    /// One-dimensional parameter. Panics on a non-finite value.
    fn from(value: f64) -> Self {
        Self::new(vec![value]).expect("finite scalar parameter")
    }
}

/// Symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

const SYMMETRY_RTOL: f64 = 1e-12;

impl SpdMatrix {
    /// Validates symmetry (entrywise relative tolerance 1e-12) and positive
    /// definiteness (Cholesky succeeds). The stored matrix is symmetrized.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if m.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "matrix is {}x{}, not square",
                n,
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("matrix has non-finite entries".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_RTOL * a.abs().max(b.abs()) {
                    return Err(Error::InvalidModel(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let sym = 0.5 * (&m + m.transpose());
        if sym.clone().cholesky().is_none() {
            return Err(Error::InvalidModel("matrix is not positive definite".into()));
        }
        Ok(Self(sym))
    }

    pub fn from_diagonal(spectrum: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A regular exponential family in natural coordinates.
///
/// Methods take parameters of the family's dimension; callers that accept
/// user input go through [`in_domain`] or [`crate::objective::BregmanObjective`],
/// which check dimensions first.
pub trait ExponentialFamily: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Log-partition A(φ).
    fn log_partition(&self, phi: &NaturalParams) -> f64;

    /// Mean parameter μ(φ) = ∇A(φ).
    fn mean(&self, phi: &NaturalParams) -> DVector<f64>;

    /// Fisher information H(φ) = ∇²A(φ).
    fn fisher(&self, phi: &NaturalParams) -> DMatrix<f64>;

    /// Domain predicate Ω. Both shipped families are defined on all of ℝ^d.
    fn contains(&self, _phi: &NaturalParams) -> bool {
        true
    }

    /// Bregman divergence D_A(u‖v) = A(u) − A(v) − ⟨μ(v), u − v⟩.
    ///
    /// Families may override this with an algebraically identical form that
    /// avoids cancellation.
    fn bregman(&self, u: &NaturalParams, v: &NaturalParams) -> f64 {
        self.log_partition(u) - self.log_partition(v) - self.mean(v).dot(&(u.as_vector() - v.as_vector()))
    }

    /// `(λ_min, λ_max)` of the Fisher information at φ.
    fn fisher_extremes(&self, phi: &NaturalParams) -> (f64, f64) {
        symeig::extremes(&self.fisher(phi))
    }

    fn name(&self) -> &'static str;
}

/// Shared handle to a family; cheap to clone across threads.
pub type ExpFamModel = Arc<dyn ExponentialFamily>;

/// Product of `dim` independent Bernoulli laws, A(φ) = Σᵢ log(1 + e^φᵢ).
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliProduct {
    dim: usize,
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// σ′(x) = σ(x)(1 − σ(x)), evaluated as σ(x)σ(−x) to keep precision in the tails.
pub fn sigmoid_prime(x: f64) -> f64 {
    sigmoid(x) * sigmoid(-x)
}

impl BernoulliProduct {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { dim })
    }
}

impl ExponentialFamily for BernoulliProduct {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_partition(&self, phi: &NaturalParams) -> f64 {
        phi.iter().map(|&x| softplus(x)).sum()
    }

    fn mean(&self, phi: &NaturalParams) -> DVector<f64> {
        phi.map(sigmoid)
    }

    fn fisher(&self, phi: &NaturalParams) -> DMatrix<f64> {
        DMatrix::from_diagonal(&phi.map(sigmoid_prime))
    }

    // Coordinatewise sum: A is separable, so each term is a scalar Bregman
    // divergence and no large partial sums cancel.
    fn bregman(&self, u: &NaturalParams, v: &NaturalParams) -> f64 {
        u.iter()
            .zip(v.iter())
            .map(|(&a, &b)| softplus(a) - softplus(b) - sigmoid(b) * (a - b))
            .sum()
    }

    fn fisher_extremes(&self, phi: &NaturalParams) -> (f64, f64) {
        phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            let h = sigmoid_prime(x);
            (lo.min(h), hi.max(h))
        })
    }

    fn name(&self) -> &'static str {
        "bernoulli"
    }
}

/// Quadratic log-partition A(φ) = ½ φᵀMφ: a Gaussian location family with
/// fixed precision M. M = I is the unit-covariance Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFamily {
    m: SpdMatrix,
    extremes: (f64, f64),
}

impl QuadraticFamily {
    pub fn new(m: SpdMatrix) -> Self {
        let extremes = symeig::extremes(m.as_matrix());
        Self { m, extremes }
    }

    pub fn matrix(&self) -> &SpdMatrix {
        &self.m
    }
}

impl ExponentialFamily for QuadraticFamily {
    fn dim(&self) -> usize {
        self.m.dim()
    }

    fn log_partition(&self, phi: &NaturalParams) -> f64 {
        0.5 * phi.dot(&(self.m.as_matrix() * phi.as_vector()))
    }

    fn mean(&self, phi: &NaturalParams) -> DVector<f64> {
        self.m.as_matrix() * phi.as_vector()
    }

    fn fisher(&self, _phi: &NaturalParams) -> DMatrix<f64> {
        self.m.as_matrix().clone()
    }

    fn bregman(&self, u: &NaturalParams, v: &NaturalParams) -> f64 {
        let delta = u.as_vector() - v.as_vector();
        0.5 * delta.dot(&(self.m.as_matrix() * &delta))
    }

    fn fisher_extremes(&self, _phi: &NaturalParams) -> (f64, f64) {
        self.extremes
    }

    fn name(&self) -> &'static str {
        "quadratic"
    }
}

pub fn make_bernoulli_product(dim: usize) -> Result<ExpFamModel> {
    Ok(Arc::new(BernoulliProduct::new(dim)?))
}

/// Quadratic family from a dense matrix; rejects non-symmetric or
/// non-positive-definite input with [`Error::InvalidModel`].
pub fn make_quadratic(m: DMatrix<f64>) -> Result<ExpFamModel> {
    Ok(Arc::new(QuadraticFamily::new(SpdMatrix::new(m)?)))
}

/// Quadratic family with M = diag(spectrum).
pub fn make_quadratic_diag(spectrum: &[f64]) -> Result<ExpFamModel> {
    Ok(Arc::new(QuadraticFamily::new(SpdMatrix::from_diagonal(spectrum)?)))
}

pub(crate) fn check_dim(model: &dyn ExponentialFamily, phi: &NaturalParams) -> Result<()> {
    if phi.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: phi.dim(),
        });
    }
    Ok(())
}

pub fn in_domain(model: &dyn ExponentialFamily, phi: &NaturalParams) -> Result<bool> {
    check_dim(model, phi)?;
    Ok(model.contains(phi))
}
