use nalgebra::DVector;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::spec::ExperimentSpec;
use super::trajectory::{ngd_recursion, run_summary};
use super::{trajectory_csv, ExperimentOutcome, ExperimentResult};
use crate::expfam::{make_quadratic_diag, NaturalParams};
use crate::objective::BregmanObjective;
use crate::optimizers::{gd_contraction_factor, optimal_gd_step, run, Method, RunOptions, StepSchedule, Trajectory};
use crate::suite::linspace;

use super::spec::SWEEP_RADIUS;

#[derive(Debug, Clone, Copy)]
enum Cell {
    Gd,
    Ngd(f64),
}

/// GD with γ* = 2/(α + β) and NGD at each η on d-dimensional quadratics
/// with spectrum linspace(α, 1) for every ratio α/β. Cells run in parallel;
/// output order follows the spec.
pub fn cmd_sweep(spec: &ExperimentSpec) -> ExperimentOutcome<ExperimentResult> {
    let d = spec.model.dim;
    let star = NaturalParams::new(spec.phi_star.clone())?;
    let phi0 = if spec.worst_case {
        // all of δ₀ on the eigenvectors of λ_min and λ_max
        let mut v = DVector::zeros(d);
        let w = SWEEP_RADIUS / if d > 1 { 2f64.sqrt() } else { 1.0 };
        v[0] = w;
        v[d - 1] = w;
        NaturalParams::from_vector(star.as_vector() + v)?
    } else {
        spec.phi0()?
    };
    let opts = RunOptions {
        max_iters: spec.max_iters,
        dist_tol: spec.tol,
    };

    let cells: Vec<(f64, Cell)> = spec
        .ratios
        .iter()
        .flat_map(|&r| std::iter::once((r, Cell::Gd)).chain(spec.eta.iter().map(move |&e| (r, Cell::Ngd(e)))))
        .collect();

    let results: Vec<crate::Result<(String, Trajectory, Value, usize)>> = cells
        .par_iter()
        .map(|&(ratio, cell)| {
            let beta = 1.0;
            let alpha = ratio * beta;
            let model = make_quadratic_diag(&linspace(alpha, beta, d))?;
            let mut obj = BregmanObjective::new(model, star.clone())?;
            if let Some(b) = spec.box_bound {
                obj = obj.with_box(b)?;
            }
            match cell {
                Cell::Gd => {
                    let gamma = match spec.gamma {
                        Some(g) => g,
                        None => optimal_gd_step(alpha, beta)?,
                    };
                    let t = run(&obj, &phi0, Method::Gd, StepSchedule::Constant(gamma), opts)?;
                    let rho = gd_contraction_factor(alpha, beta, gamma);
                    let bad = (0..t.iterations()).filter(|&k| t.dist[k + 1] > rho * t.dist[k] + 1e-12).count();
                    let summary = json!({
                        "ratio": ratio,
                        "alpha": alpha,
                        "beta": beta,
                        "method": "gd",
                        "gamma": gamma,
                        "run": run_summary(&t),
                        "empirical_contraction": last_contraction(&t),
                        "theoretical_contraction": rho,
                        "bound_violations": bad,
                    });
                    Ok((format!("ratio{ratio}_gd"), t, summary, bad))
                }
                Cell::Ngd(eta) => {
                    let t = run(&obj, &phi0, Method::Ngd, StepSchedule::Constant(eta), opts)?;
                    let (err, bad) = ngd_recursion(&t);
                    let summary = json!({
                        "ratio": ratio,
                        "alpha": alpha,
                        "beta": beta,
                        "method": "ngd",
                        "eta": eta,
                        "run": run_summary(&t),
                        "empirical_contraction": last_contraction(&t),
                        "theoretical_contraction": (1.0 - eta).abs(),
                        "recursion_max_rel_err": err,
                        "bound_violations": bad,
                    });
                    Ok((format!("ratio{ratio}_ngd_eta{eta}"), t, summary, bad))
                }
            }
        })
        .collect();

    let mut csv = Vec::new();
    let mut cells_json = Vec::new();
    let mut violations = 0;
    let mut ngd_iters: Vec<(f64, Option<usize>)> = Vec::new();
    for r in results {
        let (name, t, summary, bad) = r?;
        violations += bad;
        if let Some(eta) = summary.get("eta").and_then(Value::as_f64) {
            ngd_iters.push((eta, t.first_below(1e-6)));
        }
        csv.push((name, trajectory_csv(&t, false)));
        cells_json.push(summary);
    }
    let ngd_uniform = spec.eta.iter().all(|&eta| {
        let mut it = ngd_iters.iter().filter(|(e, _)| *e == eta).map(|(_, k)| *k);
        match it.next() {
            Some(first) => it.all(|k| k == first),
            None => true,
        }
    });

    Ok(ExperimentResult {
        spec: spec.clone(),
        csv,
        summary: json!({
            "phi_0": phi0.iter().collect::<Vec<_>>(),
            "worst_case": spec.worst_case,
            "cells": cells_json,
            "ngd_iterations_uniform_across_ratios": ngd_uniform,
        }),
        violations,
    })
}

/// The last recorded per-step contraction, i.e. the asymptotic rate.
fn last_contraction(t: &Trajectory) -> Option<f64> {
    t.contraction.iter().rev().find_map(|c| *c)
}
