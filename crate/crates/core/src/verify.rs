//! Independent numerical oracles used to validate the closed forms:
//! central finite differences, composite Simpson quadrature, a full
//! symmetric eigensolve and an SPD linear solve. None of these sit on the
//! optimisation path.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expfam::{ExpFamModel, NaturalParams};
use crate::objective::BregmanObjective;
use crate::symeig;

pub const DEFAULT_GRADIENT_STEP: f64 = 1e-5;
pub const DEFAULT_HESSIAN_STEP: f64 = 1e-4;

fn eval<F>(f: &F, x: DVector<f64>) -> Result<f64>
where
    F: Fn(&NaturalParams) -> f64,
{
    let p = NaturalParams::from_vector(x).map_err(|e| Error::Oracle(e.to_string()))?;
    let v = f(&p);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Oracle(format!("non-finite function value {v}")))
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")))
    }
}

/// Central-difference gradient, (f(φ + h eᵢ) − f(φ − h eᵢ)) / 2h.
pub fn fd_gradient<F>(f: F, phi: &NaturalParams, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&NaturalParams) -> f64,
{
    check_step(h)?;
    let x = phi.as_vector();
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus[i] += h;
        let mut minus = x.clone();
        minus[i] -= h;
        g[i] = (eval(&f, plus)? - eval(&f, minus)?) / (2.0 * h);
    }
    Ok(g)
}

/// Second-order central-difference Hessian, symmetrised.
pub fn fd_hessian<F>(f: F, phi: &NaturalParams, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&NaturalParams) -> f64,
{
    check_step(h)?;
    let x = phi.as_vector();
    let n = x.len();
    let f0 = eval(&f, x.clone())?;
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut y = x.clone();
        y[i] += si * h;
        y[j] += sj * h;
        eval(&f, y)
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = shifted(i, 1.0, i, 0.0)?;
        let fm = shifted(i, -1.0, i, 0.0)?;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            let fpp = shifted(i, 1.0, j, 1.0)?;
            let fpm = shifted(i, 1.0, j, -1.0)?;
            let fmp = shifted(i, -1.0, j, 1.0)?;
            let fmm = shifted(i, -1.0, j, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(0.5 * (&hess + hess.transpose()))
}

/// Composite Simpson rule on `[a, b]` with an even number of panels.
pub fn simpson<F>(f: F, a: f64, b: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if panels < 2 || panels % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "Simpson panel count must be even and >= 2, got {panels}"
        )));
    }
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for i in 0..=panels {
        let x = if i == panels { b } else { a + (b - a) * (i as f64 / panels as f64) };
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::Oracle(format!("non-finite integrand {fx} at {x}")));
        }
        let w = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * fx;
    }
    Ok(sum * h / 3.0)
}

const EIG_SYMMETRY_RTOL: f64 = 1e-12;
const EIG_CROSSCHECK_RTOL: f64 = 1e-10;

/// Extreme eigenvalues from a full symmetric eigensolve (Householder
/// tridiagonalisation + implicit QR). For d ≤ 2 the result is cross-checked
/// against the closed form.
pub fn eig_extremes(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::InvalidArgument(format!("expected a square matrix, got {}x{}", n, m.ncols())));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > EIG_SYMMETRY_RTOL * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if n <= 2 {
        let (clo, chi) = if n == 1 {
            (m[(0, 0)], m[(0, 0)])
        } else {
            symeig::closed_form_2x2(m[(0, 0)], m[(0, 1)], m[(1, 1)])
        };
        let scale = 1.0 + lo.abs().max(hi.abs());
        if (clo - lo).abs() > EIG_CROSSCHECK_RTOL * scale || (chi - hi).abs() > EIG_CROSSCHECK_RTOL * scale {
            return Err(Error::Oracle(format!(
                "eigensolve ({lo}, {hi}) disagrees with closed form ({clo}, {chi})"
            )));
        }
    }
    Ok((lo, hi))
}

/// Solves Mx = b by Cholesky factorisation.
pub fn solve_spd(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() != m.ncols() || m.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: b.len(),
        });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Worst-case agreement between an analytic quantity and its
/// finite-difference estimate over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_point: Vec<f64>,
    pub step: f64,
}

impl FdReport {
    fn new(step: f64) -> Self {
        Self {
            max_rel_err: 0.0,
            worst_point: Vec::new(),
            step,
        }
    }

    fn record(&mut self, err: f64, phi: &NaturalParams) {
        if err > self.max_rel_err || self.worst_point.is_empty() {
            self.max_rel_err = self.max_rel_err.max(err);
            self.worst_point = phi.iter().copied().collect();
        }
    }
}

/// ‖μ(φ) − ∇_fd A(φ)‖ / (1 + ‖μ(φ)‖), maximised over `points`.
pub fn mean_vs_fd(model: &ExpFamModel, points: &[NaturalParams], h: f64) -> Result<FdReport> {
    let mut report = FdReport::new(h);
    for phi in points {
        let analytic = model.mean(phi);
        let numeric = fd_gradient(|x| model.log_partition(x), phi, h)?;
        report.record((&analytic - numeric).norm() / (1.0 + analytic.norm()), phi);
    }
    Ok(report)
}

/// max entrywise |H(φ) − ∇²_fd A(φ)| / (1 + |H(φ)|) over `points`.
pub fn fisher_vs_fd(model: &ExpFamModel, points: &[NaturalParams], h: f64) -> Result<FdReport> {
    let mut report = FdReport::new(h);
    for phi in points {
        let analytic = model.fisher(phi);
        let numeric = fd_hessian(|x| model.log_partition(x), phi, h)?;
        let err = analytic
            .iter()
            .zip(numeric.iter())
            .map(|(a, n)| (a - n).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max);
        report.record(err, phi);
    }
    Ok(report)
}

/// ‖∇L(φ) − ∇_fd L(φ)‖ / (1 + ‖∇L(φ)‖) over `points`. `perturb` is added
/// to every analytic gradient entry; it is zero except in fault-injection runs.
pub fn grad_vs_fd(
    obj: &BregmanObjective,
    points: &[NaturalParams],
    h: f64,
    perturb: f64,
) -> Result<FdReport> {
    let mut report = FdReport::new(h);
    for phi in points {
        let analytic = obj.grad(phi)?.add_scalar(perturb);
        let numeric = fd_gradient(|x| obj.neg_elbo(x).unwrap_or(f64::NAN), phi, h)?;
        report.record((&analytic - numeric).norm() / (1.0 + analytic.norm()), phi);
    }
    Ok(report)
}

/// Deterministic point sampler for sweeps (ChaCha8, seeded).
#[derive(Debug, Clone)]
pub struct SweepRng(ChaCha8Rng);

impl SweepRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.random_range(lo..hi)
    }

    /// A point uniformly distributed in [lo, hi)^dim.
    pub fn point(&mut self, dim: usize, lo: f64, hi: f64) -> NaturalParams {
        let v = DVector::from_fn(dim, |_, _| self.uniform(lo, hi));
        NaturalParams::from_vector(v).expect("finite sample")
    }

    pub fn points(&mut self, count: usize, dim: usize, lo: f64, hi: f64) -> Vec<NaturalParams> {
        (0..count).map(|_| self.point(dim, lo, hi)).collect()
    }

    /// A standard-normal sample via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1: f64 = 1.0 - self.0.random::<f64>();
        let u2: f64 = self.0.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// A random orthogonal matrix (QR of a Gaussian matrix).
    pub fn orthogonal(&mut self, dim: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(dim, dim, |_, _| self.normal());
        g.qr().q()
    }
}
