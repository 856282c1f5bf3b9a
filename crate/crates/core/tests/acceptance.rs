//! Acceptance criteria. Runs as a plain binary (no libtest harness) so that
//! every criterion prints one PASS/FAIL line on each `cargo test` run.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use bregman_vi::experiment::{cmd_sweep, Experiment, ExperimentSpec};
use bregman_vi::expfam::{make_bernoulli_product, make_quadratic, make_quadratic_diag, ExpFamModel, NaturalParams};
use bregman_vi::objective::{kl_oracle_bernoulli, three_point_gap, BregmanObjective};
use bregman_vi::optimizers::{
    gd_contraction_factor, ngd_step, optimal_gd_step, run, Method, RunOptions, StepSchedule, Trajectory,
};
use bregman_vi::raygeom::{integral_neg_elbo, one_point_report, quadratic_bounds, spectral_envelope};
use bregman_vi::suite::{kl_rel_err, linspace, log_log_slope, rotated_spd, LOSS_FLOOR};
use bregman_vi::verify::{fisher_vs_fd, grad_vs_fd, mean_vs_fd, SweepRng, DEFAULT_GRADIENT_STEP, DEFAULT_HESSIAN_STEP};

const SEED: u64 = 20_240_611;
const RATIOS: [f64; 5] = [0.02, 0.05, 0.10, 0.20, 0.30];
const GRID: usize = 257;

type Outcome = Result<String, String>;

fn p(v: &[f64]) -> NaturalParams {
    NaturalParams::new(v.to_vec()).unwrap()
}

struct Fam {
    label: &'static str,
    obj: BregmanObjective,
    bernoulli: bool,
}

fn obj(model: ExpFamModel, star: NaturalParams) -> BregmanObjective {
    BregmanObjective::new(model, star).unwrap()
}

fn families(rng: &mut SweepRng) -> Vec<Fam> {
    let q20 = rotated_spd(rng, &linspace(0.02, 1.0, 20));
    let q20_star = rng.point(20, -1.0, 1.0);
    let b20_star = rng.point(20, -2.0, 2.0);
    vec![
        Fam {
            label: "bernoulli d=1",
            obj: obj(make_bernoulli_product(1).unwrap(), p(&[1.0])),
            bernoulli: true,
        },
        Fam {
            label: "bernoulli d=2",
            obj: obj(make_bernoulli_product(2).unwrap(), p(&[0.5, -1.0])),
            bernoulli: true,
        },
        Fam {
            label: "bernoulli d=20",
            obj: obj(make_bernoulli_product(20).unwrap(), b20_star),
            bernoulli: true,
        },
        Fam {
            label: "quadratic d=2",
            obj: obj(make_quadratic_diag(&[0.2, 1.0]).unwrap(), p(&[0.3, -0.7])),
            bernoulli: false,
        },
        Fam {
            label: "quadratic d=20",
            obj: obj(make_quadratic(q20).unwrap(), q20_star),
            bernoulli: false,
        },
    ]
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sweep_objective(ratio: f64) -> BregmanObjective {
    obj(make_quadratic_diag(&linspace(ratio, 1.0, 20)).unwrap(), NaturalParams::zeros(20).unwrap())
}

fn generic_start() -> NaturalParams {
    p(&[10.0 / 20f64.sqrt(); 20])
}

fn worst_case_start() -> NaturalParams {
    let mut v = vec![0.0; 20];
    v[0] = 10.0 / 2f64.sqrt();
    v[19] = 10.0 / 2f64.sqrt();
    p(&v)
}

fn run_opts(max_iters: usize, dist_tol: f64) -> RunOptions {
    RunOptions { max_iters, dist_tol }
}

fn c01_ngd_one_step() -> Outcome {
    let mut rng = SweepRng::new(SEED);
    let fams = families(&mut rng);
    let mut worst = 0.0f64;
    for f in fams.iter().filter(|f| matches!(f.label, "bernoulli d=1" | "bernoulli d=2" | "quadratic d=20")) {
        for _ in 0..20 {
            let phi0 = rng.point(f.obj.dim(), -6.0, 6.0);
            let d0 = f.obj.delta(&phi0).unwrap().norm();
            let next = ngd_step(&f.obj, &phi0, 1.0).unwrap();
            let t = run(&f.obj, &phi0, Method::Ngd, StepSchedule::Constant(1.0), run_opts(1, 0.0)).unwrap();
            let d1 = f.obj.delta(&next).unwrap().norm().max(t.dist[1]);
            worst = worst.max(d1 / (1.0 + d0));
        }
    }
    check(worst <= 1e-12, format!("max ‖δ₁‖/(1+‖δ₀‖) = {worst:.3e} (tol 1e-12)"))
}

fn c02_ngd_exact_rate() -> Outcome {
    let mut rng = SweepRng::new(SEED + 2);
    let fams = families(&mut rng);
    let mut worst = 0.0f64;
    for f in &fams {
        for _ in 0..20 {
            let phi0 = rng.point(f.obj.dim(), -6.0, 6.0);
            let t = run(&f.obj, &phi0, Method::Ngd, StepSchedule::Constant(0.5), run_opts(40, 0.0)).unwrap();
            for k in 0..=40 {
                let r = t.dist[k] / (0.5f64.powi(k as i32) * t.dist[0]);
                worst = worst.max((r - 1.0).abs());
            }
        }
    }
    check(worst <= 1e-10, format!("max |ratio − 1| over k ≤ 40 = {worst:.3e} (tol 1e-10)"))
}

fn c03_ngd_condition_free() -> Outcome {
    let iters: Vec<Option<usize>> = RATIOS
        .iter()
        .map(|&r| {
            run(&sweep_objective(r), &generic_start(), Method::Ngd, StepSchedule::Constant(0.5), run_opts(100_000, 1e-10))
                .unwrap()
                .first_below(1e-6)
        })
        .collect();
    let same = iters[0].is_some() && iters.iter().all(|k| *k == iters[0]);
    check(same, format!("iterations to 1e-6 per ratio: {iters:?}"))
}

fn c04_gd_optimal_contraction() -> Outcome {
    let mut worst = 0.0f64;
    let mut asymptotic = Vec::new();
    for &a in &RATIOS {
        let gamma = 2.0 / (1.0 + a);
        let t = run(&sweep_objective(a), &worst_case_start(), Method::Gd, StepSchedule::Constant(gamma), run_opts(100_000, 1e-10))
            .unwrap();
        let rho = (1.0 - a) / (1.0 + a);
        for c in t.contraction.iter().flatten() {
            worst = worst.max((c - rho).abs());
        }
        asymptotic.push(*t.contraction.iter().flatten().last().unwrap());
    }
    let spot = (asymptotic[0] - 0.960784).abs() < 1e-6 && (asymptotic[4] - 0.538462).abs() < 1e-6;
    check(
        worst <= 1e-6 && spot,
        format!(
            "max |contraction − (1−α)/(1+α)| = {worst:.3e} (tol 1e-6); α=0.02 → {:.6}, α=0.30 → {:.6}",
            asymptotic[0], asymptotic[4]
        ),
    )
}

fn c05_gd_bound() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for &a in &RATIOS {
        let gamma = optimal_gd_step(a, 1.0).unwrap();
        let rho = gd_contraction_factor(a, 1.0, gamma);
        let t = run(&sweep_objective(a), &generic_start(), Method::Gd, StepSchedule::Constant(gamma), run_opts(100_000, 1e-10))
            .unwrap();
        for k in 0..t.iterations() {
            worst = worst.max(t.dist[k + 1] - rho * t.dist[k]);
            steps += 1;
        }
    }
    check(worst <= 1e-12, format!("max ‖δ_k+1‖ − ρ*‖δ_k‖ = {worst:.3e} over {steps} steps (tol 1e-12)"))
}

fn c06_monotonicity() -> Outcome {
    let o = obj(make_bernoulli_product(1).unwrap(), p(&[1.0]));
    let model = o.model().clone();
    let mut rng = SweepRng::new(SEED + 6);
    let mut viol = f64::NEG_INFINITY;
    let mut rel = 0.0f64;
    for _ in 0..10_000 {
        let phi = rng.point(1, -6.0, 6.0);
        let phi_p = rng.point(1, -6.0, 6.0);
        let m = o.monotonicity_check(&phi, &phi_p).unwrap();
        viol = viol.max(-m.slack / (1.0 + m.lhs.abs()));
        let div = model.bregman(&phi, &phi_p);
        // below 1e-5 of the cancelled magnitudes, compare against that scale
        let scale = m.lhs.abs() + m.rhs.abs() + o.neg_elbo(&phi).unwrap();
        rel = rel.max((m.slack - div).abs() / div.abs().max(1e-5 * scale));
    }
    check(
        viol <= 1e-12 && rel <= 1e-10,
        format!("max −slack/(1+|L|) = {viol:.3e} (tol 1e-12); slack vs D_A rel err = {rel:.3e} (tol 1e-10)"),
    )
}

fn c07_three_point() -> Outcome {
    let mut rng = SweepRng::new(SEED + 7);
    let fams = families(&mut rng);
    let mut worst = 0.0f64;
    for f in &fams {
        let d = f.obj.dim();
        for _ in 0..1000 {
            let (u, v, w) = (rng.point(d, -6.0, 6.0), rng.point(d, -6.0, 6.0), rng.point(d, -6.0, 6.0));
            let (lhs, rhs) = three_point_gap(f.obj.model(), &u, &v, &w).unwrap();
            worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
        }
    }
    check(worst <= 1e-10, format!("max |lhs − rhs|/(1+|rhs|) = {worst:.3e} over 5 families (tol 1e-10)"))
}

fn c08_kl_oracle() -> Outcome {
    let mut rng = SweepRng::new(SEED + 8);
    let fams = families(&mut rng);
    let mut worst = 0.0f64;
    for f in fams.iter().filter(|f| f.bernoulli) {
        for _ in 0..1000 {
            let phi = rng.point(f.obj.dim(), -6.0, 6.0);
            let kl = kl_oracle_bernoulli(f.obj.optimum(), &phi).unwrap();
            worst = worst.max(kl_rel_err(f.obj.optimum(), &phi, f.obj.neg_elbo(&phi).unwrap(), kl));
        }
    }
    let spot = obj(make_bernoulli_product(1).unwrap(), p(&[1.0])).neg_elbo(&p(&[-1.0])).unwrap();
    check(
        worst <= 1e-10 && (spot - 0.4621172).abs() <= 1e-6,
        format!("max rel err vs KL = {worst:.3e} (tol 1e-10); L(−1; φ*=1) = {spot:.7}"),
    )
}

fn c09_integral() -> Outcome {
    let mut rng = SweepRng::new(SEED + 9);
    let fams = families(&mut rng);
    let (mut bern, mut quad) = (0.0f64, 0.0f64);
    for f in &fams {
        for _ in 0..100 {
            let phi = rng.point(f.obj.dim(), -6.0, 6.0);
            let l = f.obj.neg_elbo(&phi).unwrap();
            if f.bernoulli {
                bern = bern.max((integral_neg_elbo(&f.obj, &phi, 2048).unwrap() - l).abs() / l);
            } else {
                quad = quad.max((integral_neg_elbo(&f.obj, &phi, 2).unwrap() - l).abs() / l);
            }
        }
    }
    check(
        bern <= 1e-8 && quad <= 1e-13,
        format!("Bernoulli (2048 panels) rel err = {bern:.3e} (tol 1e-8); quadratic (2 panels) = {quad:.3e} (tol 1e-13)"),
    )
}

fn c10_sandwich() -> Outcome {
    let mut rng = SweepRng::new(SEED + 10);
    let fams = families(&mut rng);
    let (mut bern, mut quad) = (0.0f64, 0.0f64);
    for f in &fams {
        for _ in 0..1000 {
            let phi = rng.point(f.obj.dim(), -6.0, 6.0);
            let env = spectral_envelope(&f.obj, &phi, GRID).unwrap();
            let l = f.obj.neg_elbo(&phi).unwrap();
            let dsq = f.obj.delta(&phi).unwrap().norm_squared();
            if f.bernoulli {
                let (lo, hi) = env.widened();
                bern = bern.max((0.5 * lo * dsq - l).max(l - 0.5 * hi * dsq));
            } else {
                let (lower, upper) = quadratic_bounds(&f.obj, &phi, &env).unwrap();
                quad = quad.max((lower - l).max(l - upper));
            }
        }
    }
    let o = obj(make_bernoulli_product(1).unwrap(), p(&[1.0]));
    let phi = p(&[-1.0]);
    let (lower, upper) = quadratic_bounds(&o, &phi, &spectral_envelope(&o, &phi, GRID).unwrap()).unwrap();
    let l = o.neg_elbo(&phi).unwrap();
    let spot = (lower - 0.3932239).abs() < 1e-7 && (l - 0.4621172).abs() < 1e-7 && (upper - 0.5).abs() < 1e-12;
    check(
        bern <= 0.0 && quad <= 1e-12 && spot,
        format!(
            "Bernoulli max violation beyond tol_grid = {bern:.3e}; quadratic = {quad:.3e} (tol 1e-12); spot ({lower:.7}, {l:.7}, {upper:.7})"
        ),
    )
}

fn c11_one_point() -> Outcome {
    let mut rng = SweepRng::new(SEED + 11);
    let fams = families(&mut rng);
    let (mut eq19, mut eq20) = (0.0f64, 0.0f64);
    for f in &fams {
        for _ in 0..1000 {
            let phi = rng.point(f.obj.dim(), -6.0, 6.0);
            let env = spectral_envelope(&f.obj, &phi, GRID).unwrap();
            let r = one_point_report(&f.obj, &phi, &env).unwrap();
            eq19 = eq19.max((r.grad_lower - r.inner).max(r.inner - r.grad_upper));
            let kappa = env.kappa_upper().unwrap();
            eq20 = eq20.max((2.0 / kappa * r.loss - r.inner).max(r.inner - 2.0 * kappa * r.loss));
        }
    }
    check(
        eq19 <= 1e-12 && eq20 <= 1e-12,
        format!("gradient pair violation = {eq19:.3e} (tol 1e-12); PL pair violation with tol_grid = {eq20:.3e}"),
    )
}

fn c12_value_decay() -> Outcome {
    let mut rng = SweepRng::new(SEED + 12);
    let fams = families(&mut rng);
    let mut worst = f64::NEG_INFINITY;
    for f in &fams {
        for _ in 0..10 {
            let phi0 = rng.point(f.obj.dim(), -6.0, 6.0);
            let kappa0 = spectral_envelope(&f.obj, &phi0, GRID).unwrap().kappa_upper().unwrap();
            for eta in [0.25, 0.5, 0.75, 1.0] {
                let t = run(&f.obj, &phi0, Method::Ngd, StepSchedule::Constant(eta), run_opts(200, 1e-8)).unwrap();
                for (k, &l) in t.loss.iter().enumerate() {
                    worst = worst.max(l - kappa0 * (1.0 - eta).powi(2 * k as i32) * t.loss[0]);
                }
            }
        }
    }
    check(
        worst <= LOSS_FLOOR,
        format!("max L(φ_k) − κ₀|1−η|^2k L(φ₀) = {worst:.3e} (κ₀ with tol_grid; rounding floor {LOSS_FLOOR:.0e})"),
    )
}

fn c13_diminishing() -> Outcome {
    let c = 0.5;
    let mut rng = SweepRng::new(SEED + 13);
    let fams = families(&mut rng);
    let (mut slope_err, mut bound) = (0.0f64, f64::NEG_INFINITY);
    let mut slopes = Vec::new();
    for f in fams.iter().take(2) {
        let phi0 = rng.point(f.obj.dim(), -6.0, 6.0);
        let t: Trajectory =
            run(&f.obj, &phi0, Method::Ngd, StepSchedule::Diminishing { c }, run_opts(10_000, 0.0)).unwrap();
        let slope = log_log_slope(&t.dist, 100, 10_000);
        slopes.push(slope);
        slope_err = slope_err.max((slope + c).abs());
        let mut harmonic = 0.0;
        for k in 1..t.len() {
            bound = bound.max(t.dist[k] / ((-c * harmonic).exp() * t.dist[0]) - 1.0);
            harmonic += 1.0 / k as f64;
        }
    }
    check(
        slope_err <= 0.05 && bound <= 1e-10,
        format!("log-log slopes {slopes:.4?} (target −0.5 ± 0.05); max dist_k/envelope − 1 = {bound:.3e} (tol 1e-10)"),
    )
}

fn c14_oracles() -> Outcome {
    let mut rng = SweepRng::new(SEED + 14);
    let fams = families(&mut rng);
    let (mut mean, mut fisher, mut grad) = (0.0f64, 0.0f64, 0.0f64);
    for f in &fams {
        let pts = rng.points(200, f.obj.dim(), -5.0, 5.0);
        mean = mean.max(mean_vs_fd(f.obj.model(), &pts, DEFAULT_GRADIENT_STEP).unwrap().max_rel_err);
        fisher = fisher.max(fisher_vs_fd(f.obj.model(), &pts, DEFAULT_HESSIAN_STEP).unwrap().max_rel_err);
        grad = grad.max(grad_vs_fd(&f.obj, &pts, DEFAULT_GRADIENT_STEP, 0.0).unwrap().max_rel_err);
    }
    check(
        mean <= 1e-6 && fisher <= 1e-4 && grad <= 1e-6,
        format!("μ {mean:.3e} (1e-6), H {fisher:.3e} (1e-4), ∇L {grad:.3e} (1e-6)"),
    )
}

fn c15_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut spec = ExperimentSpec::defaults(Experiment::Sweep);
    for d in &dirs {
        spec.out = d.path().to_path_buf();
        cmd_sweep(&spec).unwrap().write(d.path()).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut differing = Vec::new();
    for n in &names {
        let a = fs::read(dirs[0].path().join(n)).unwrap();
        let b = fs::read(dirs[1].path().join(n));
        if b.ok().as_ref() != Some(&a) {
            differing.push(n.to_string_lossy().into_owned());
        }
    }
    check(
        differing.is_empty() && names.len() > 1,
        format!("{} files compared, differing: {differing:?}", names.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("NGD one-step optimality", c01_ngd_one_step),
        ("NGD exact geometric rate", c02_ngd_exact_rate),
        ("NGD rate independent of conditioning", c03_ngd_condition_free),
        ("GD optimal contraction", c04_gd_optimal_contraction),
        ("GD per-step bound", c05_gd_bound),
        ("Monotonicity", c06_monotonicity),
        ("Three-point identity", c07_three_point),
        ("Bregman equals KL", c08_kl_oracle),
        ("Integral representation", c09_integral),
        ("Quadratic sandwich", c10_sandwich),
        ("One-point inequalities", c11_one_point),
        ("Function-value decay", c12_value_decay),
        ("Diminishing steps", c13_diminishing),
        ("Gradient/Hessian oracles", c14_oracles),
        ("Determinism", c15_determinism),
    ];
    let mut failed = 0;
    let start = Instant::now();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:2} {name}: {detail} [{:.2}s]", i + 1, t.elapsed().as_secs_f64());
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
