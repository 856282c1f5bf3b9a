use serde_json::{json, Value};

use super::spec::ExperimentSpec;
use super::{trajectory_csv, ExperimentOutcome, ExperimentResult, Row};
use crate::expfam::NaturalParams;
use crate::objective::BregmanObjective;
use crate::optimizers::{gd_contraction_factor, run, Method, RunOptions, StepSchedule, Trajectory};
use crate::raygeom::spectral_envelope;
use crate::suite::{linspace, LOSS_FLOOR};

/// NGD at each constant η, optionally NGD with η_i = c/i, and GD with the
/// ray-optimal step (or a fixed γ), all from φ₀ on a 2-d model; plus a
/// lattice of L values for contour plots.
pub fn cmd_trajectory(spec: &ExperimentSpec) -> ExperimentOutcome<ExperimentResult> {
    let obj = spec.objective()?;
    let phi0 = spec.phi0()?;
    let opts = RunOptions {
        max_iters: spec.max_iters,
        dist_tol: spec.tol,
    };
    let kappa0 = spectral_envelope(&obj, &phi0, spec.grid)?.kappa_upper()?;

    let mut csv = Vec::new();
    let mut curves = Vec::new();
    let mut violations = 0;
    let mut all = Vec::new();

    for &eta in &spec.eta {
        let t = run(&obj, &phi0, Method::Ngd, StepSchedule::Constant(eta), opts)?;
        let (exact_err, bad) = ngd_recursion(&t);
        let decay_bad = if eta <= 1.0 { ngd_decay_violations(&t, eta, kappa0) } else { 0 };
        violations += bad + decay_bad;
        let name = format!("ngd_eta{eta}");
        curves.push(json!({
            "curve": name,
            "method": "ngd",
            "eta": eta,
            "run": run_summary(&t),
            "recursion_max_rel_err": exact_err,
            "recursion_violations": bad,
            "decay_violations": decay_bad,
            "one_step_to_optimum": t.dist.get(1).is_some_and(|&d| d <= 1e-12 * (1.0 + t.dist[0])),
        }));
        csv.push((name, trajectory_csv(&t, true)));
        all.push(t);
    }

    if let Some(c) = spec.c {
        let t = run(&obj, &phi0, Method::Ngd, StepSchedule::Diminishing { c }, opts)?;
        let (exact_err, bad) = ngd_recursion(&t);
        violations += bad;
        let name = format!("ngd_diminishing_c{c}");
        curves.push(json!({
            "curve": name,
            "method": "ngd",
            "c": c,
            "run": run_summary(&t),
            "recursion_max_rel_err": exact_err,
            "recursion_violations": bad,
        }));
        csv.push((name, trajectory_csv(&t, true)));
        all.push(t);
    }

    let (sched, name) = match spec.gamma {
        Some(g) => (StepSchedule::Constant(g), format!("gd_gamma{g}")),
        None => (StepSchedule::RayOptimal { grid_size: spec.grid }, "gd_ray_optimal".to_string()),
    };
    let t = run(&obj, &phi0, Method::Gd, sched, opts)?;
    let bad = gd_step_violations(&obj, &t, spec.grid)?;
    violations += bad;
    curves.push(json!({
        "curve": name,
        "method": "gd",
        "run": run_summary(&t),
        "step_bound_violations": bad,
        "curves_off_ray": max_collinearity_ratio(&t) > 1e-3,
    }));
    csv.push((name, trajectory_csv(&t, true)));
    all.push(t);

    csv.push(("contour".into(), contour(&obj, &all, spec.contour_points)?));
    Ok(ExperimentResult {
        spec: spec.clone(),
        csv,
        summary: json!({ "kappa0_upper": kappa0, "curves": curves }),
        violations,
    })
}

pub(crate) fn max_collinearity_ratio(t: &Trajectory) -> f64 {
    if t.dist[0] == 0.0 {
        return 0.0;
    }
    t.collinearity.iter().fold(0.0, |m: f64, &c| m.max(c / t.dist[0]))
}

pub(crate) fn run_summary(t: &Trajectory) -> Value {
    json!({
        "iterations": t.iterations(),
        "converged": t.converged,
        "final_dist": t.dist.last(),
        "final_loss": t.loss.last(),
        "iterations_to_1e-6": t.first_below(1e-6),
        "max_collinearity_ratio": max_collinearity_ratio(t),
    })
}

/// Max relative error of ‖δ_{k+1}‖ = |1 − η_k|‖δ_k‖ and the count above 1e-12.
pub(crate) fn ngd_recursion(t: &Trajectory) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut bad = 0;
    for k in 0..t.iterations() {
        if t.dist[k] > 0.0 {
            let e = (t.dist[k + 1] - (1.0 - t.steps[k]).abs() * t.dist[k]).abs() / t.dist[k];
            worst = worst.max(e);
            if e > 1e-12 {
                bad += 1;
            }
        }
    }
    (worst, bad)
}

fn ngd_decay_violations(t: &Trajectory, eta: f64, kappa0: f64) -> usize {
    t.loss
        .iter()
        .enumerate()
        .filter(|&(k, &l)| l > kappa0 * (1.0 - eta).powi(2 * k as i32) * t.loss[0] + LOSS_FLOOR)
        .count()
}

/// Steps where ‖δ_{k+1}‖ > ρ_k‖δ_k‖ + 1e-12 with ρ_k from the envelope at φ_k.
fn gd_step_violations(obj: &BregmanObjective, t: &Trajectory, grid: usize) -> crate::Result<usize> {
    let mut bad = 0;
    for k in 0..t.iterations() {
        let env = spectral_envelope(obj, &t.iterates[k], grid)?;
        let rho = gd_contraction_factor(env.alpha, env.beta, t.steps[k]);
        if t.dist[k + 1] > rho * t.dist[k] + 1e-12 {
            bad += 1;
        }
    }
    Ok(bad)
}

/// L on a square lattice covering φ*, φ₀ and every iterate, with a margin.
fn contour(obj: &BregmanObjective, runs: &[Trajectory], n: usize) -> crate::Result<String> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let pts = runs.iter().flat_map(|t| t.iterates.iter()).chain(std::iter::once(obj.optimum()));
    for p in pts {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let axes: Vec<Vec<f64>> = (0..2)
        .map(|i| {
            let margin = (0.2 * (hi[i] - lo[i])).max(1.0);
            linspace(lo[i] - margin, hi[i] + margin, n)
        })
        .collect();
    let mut table = Row::header(&["phi_0", "phi_1", "L"]);
    for &x in &axes[0] {
        for &y in &axes[1] {
            let l = obj.neg_elbo(&NaturalParams::new(vec![x, y])?)?;
            table.push(Row::new().num(x).num(y).num(l));
        }
    }
    Ok(table.finish())
}
