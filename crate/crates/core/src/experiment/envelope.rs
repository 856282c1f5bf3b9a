use serde_json::json;

use super::spec::ExperimentSpec;
use super::{ExperimentOutcome, ExperimentResult, Row};
use crate::expfam::NaturalParams;
use crate::objective::BregmanObjective;
use crate::raygeom::{one_point_report, quadratic_bounds, spectral_envelope};
use crate::suite::linspace;

/// Per-point sandwich bounds over an interval, plus the spectral samples
/// along the ray φ* → φ₀. For d > 1 the interval parameterises
/// φ(t) = φ* + t·u with u the unit vector from φ* towards φ₀.
pub fn cmd_envelope(spec: &ExperimentSpec) -> ExperimentOutcome<ExperimentResult> {
    let obj = spec.objective()?;
    let phi0 = spec.phi0()?;
    let star = obj.optimum().as_vector().clone();
    let d = obj.dim();
    let dir = {
        let v = phi0.as_vector() - &star;
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            v
        }
    };
    let at = |t: f64| -> crate::Result<NaturalParams> {
        if d == 1 {
            NaturalParams::new(vec![t])
        } else {
            NaturalParams::from_vector(&star + &dir * t)
        }
    };

    let [lo, hi] = spec.interval;
    let mut table = Row::header(&[if d == 1 { "phi" } else { "t" }, "L", "alpha", "beta", "lower", "upper", "sandwich_ok"]);
    let mut violations = 0;
    for t in linspace(lo, hi, spec.points) {
        let phi = at(t)?;
        let (l, env_row) = sandwich_row(&obj, &phi, spec.grid)?;
        if !env_row.ok {
            violations += 1;
        }
        table.push(
            Row::new()
                .num(t)
                .num(l)
                .num(env_row.alpha)
                .num(env_row.beta)
                .num(env_row.lower)
                .num(env_row.upper)
                .flag(env_row.ok),
        );
    }

    let env = spectral_envelope(&obj, &phi0, spec.grid)?;
    let mut samples = Row::header(&["kind", "s", "lam_min", "lam_max", "kappa"]);
    for r in &env.samples {
        samples.push(Row::new().text("sample").num(r.s).num(r.lam_min).num(r.lam_max).blank());
    }
    let kappa = env.beta / env.alpha;
    samples.push(Row::new().text("summary").blank().num(env.alpha).num(env.beta).num(kappa));

    let (lower, upper) = quadratic_bounds(&obj, &phi0, &env)?;
    let (alpha_w, beta_w) = env.widened();
    let summary = json!({
        "ray": {
            "alpha": env.alpha,
            "beta": env.beta,
            "kappa": kappa,
            "tol_grid": env.grid_tolerance(),
            "alpha_widened": alpha_w,
            "beta_widened": beta_w,
            "L_phi0": obj.neg_elbo(&phi0)?,
            "lower": lower,
            "upper": upper,
            "one_point": one_point_report(&obj, &phi0, &env)?,
        },
        "rows": spec.points,
        "sandwich_violations": violations,
    });
    Ok(ExperimentResult {
        spec: spec.clone(),
        csv: vec![("bounds".into(), table.finish()), ("samples".into(), samples.finish())],
        summary,
        violations,
    })
}

struct SandwichRow {
    alpha: f64,
    beta: f64,
    lower: f64,
    upper: f64,
    ok: bool,
}

/// Bounds at one point; `ok` uses the envelope widened by its grid bias.
fn sandwich_row(obj: &BregmanObjective, phi: &NaturalParams, grid: usize) -> crate::Result<(f64, SandwichRow)> {
    let l = obj.neg_elbo(phi)?;
    let env = spectral_envelope(obj, phi, grid)?;
    let (lower, upper) = quadratic_bounds(obj, phi, &env)?;
    let dsq = obj.delta(phi)?.norm_squared();
    let (lo, hi) = env.widened();
    let ok = 0.5 * lo * dsq <= l + 1e-12 * (1.0 + l) && l <= 0.5 * hi * dsq + 1e-12 * (1.0 + l);
    Ok((
        l,
        SandwichRow {
            alpha: env.alpha,
            beta: env.beta,
            lower,
            upper,
            ok,
        },
    ))
}
