use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{spec_err, ExperimentError, ExperimentOutcome};
use crate::expfam::{make_bernoulli_product, make_quadratic_diag, ExpFamModel, NaturalParams};
use crate::objective::BregmanObjective;
use crate::raygeom::{spectral_envelope, DEFAULT_GRID_SIZE, DEFAULT_PANELS};
use crate::optimizers::{DEFAULT_DIST_TOL, DEFAULT_MAX_ITERS};

pub const SWEEP_RATIOS: [f64; 5] = [0.02, 0.05, 0.10, 0.20, 0.30];
pub const SWEEP_DIM: usize = 20;
/// ‖φ₀ − φ*‖ for the sweep.
pub const SWEEP_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Landscape,
    Envelope,
    Trajectory,
    Sweep,
    Verify,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Landscape => "landscape",
            Self::Envelope => "envelope",
            Self::Trajectory => "trajectory",
            Self::Sweep => "sweep",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bernoulli,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub family: Family,
    pub dim: usize,
    /// Quadratic only: the diagonal of M. Defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

impl ModelDescriptor {
    pub fn bernoulli(dim: usize) -> Self {
        Self {
            family: Family::Bernoulli,
            dim,
            spectrum: None,
        }
    }

    pub fn quadratic(spectrum: Vec<f64>) -> Self {
        Self {
            family: Family::Quadratic,
            dim: spectrum.len(),
            spectrum: Some(spectrum),
        }
    }

    pub fn build(&self) -> crate::Result<ExpFamModel> {
        match self.family {
            Family::Bernoulli => make_bernoulli_product(self.dim),
            Family::Quadratic => match &self.spectrum {
                Some(s) => make_quadratic_diag(s),
                None => make_quadratic_diag(&vec![1.0; self.dim]),
            },
        }
    }

    fn validate(&self) -> ExperimentOutcome<()> {
        if self.dim == 0 {
            return spec_err("model.dim must be at least 1");
        }
        match (self.family, &self.spectrum) {
            (Family::Bernoulli, Some(_)) => spec_err("model.spectrum applies to the quadratic family only"),
            (Family::Quadratic, Some(s)) if s.len() != self.dim => {
                spec_err(format!("model.spectrum has {} entries, model.dim is {}", s.len(), self.dim))
            }
            (Family::Quadratic, Some(s)) if s.iter().any(|&x| !(x > 0.0 && x.is_finite())) => {
                spec_err("model.spectrum entries must be positive and finite")
            }
            _ => Ok(()),
        }
    }
}

/// The JSON config file. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: Option<Experiment>,
    pub model: Option<ModelDescriptor>,
    pub phi_star: Option<Vec<f64>>,
    pub phi_0: Option<Vec<f64>>,
    /// Constant NGD steps.
    pub eta: Option<Vec<f64>>,
    /// Fixed GD step; the ray-optimal γ* is used when absent.
    pub gamma: Option<f64>,
    /// Diminishing NGD constant; adds an η_i = c/i curve to `trajectory`.
    pub c: Option<f64>,
    pub grid: Option<usize>,
    pub panels: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub interval: Option<[f64; 2]>,
    pub points: Option<usize>,
    pub ratios: Option<Vec<f64>>,
    pub box_bound: Option<f64>,
    pub allow_divergent: Option<bool>,
    pub worst_case: Option<bool>,
    pub contour_points: Option<usize>,
    pub inject_fault: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> ExperimentOutcome<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Spec(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> ExperimentOutcome<Self> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Spec(format!("config: {e}")))
    }
}

/// Command-line values; each one that is set wins over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub panels: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub allow_divergent: bool,
    pub worst_case: bool,
    pub inject_fault: bool,
}

/// A fully resolved, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: Experiment,
    pub model: ModelDescriptor,
    pub phi_star: Vec<f64>,
    pub phi_0: Vec<f64>,
    pub eta: Vec<f64>,
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    pub grid: usize,
    pub panels: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub interval: [f64; 2],
    pub points: usize,
    pub ratios: Vec<f64>,
    pub box_bound: Option<f64>,
    pub allow_divergent: bool,
    pub worst_case: bool,
    pub contour_points: usize,
    pub inject_fault: bool,
    #[serde(skip)]
    pub out: PathBuf,
}

impl ExperimentSpec {
    /// Built-in defaults for `name`.
    pub fn defaults(name: Experiment) -> Self {
        let (model, phi_star, phi_0, eta) = match name {
            Experiment::Landscape | Experiment::Envelope | Experiment::Verify => {
                (ModelDescriptor::bernoulli(1), vec![1.0], vec![-1.0], vec![0.5, 1.0])
            }
            Experiment::Trajectory => (ModelDescriptor::bernoulli(2), vec![1.0, -1.0], vec![-3.0, 2.5], vec![0.5, 1.0]),
            Experiment::Sweep => {
                let v = SWEEP_RADIUS / (SWEEP_DIM as f64).sqrt();
                (
                    ModelDescriptor {
                        family: Family::Quadratic,
                        dim: SWEEP_DIM,
                        spectrum: None,
                    },
                    vec![0.0; SWEEP_DIM],
                    vec![v; SWEEP_DIM],
                    vec![0.5],
                )
            }
        };
        Self {
            name,
            model,
            phi_star,
            phi_0,
            eta,
            gamma: None,
            c: None,
            grid: DEFAULT_GRID_SIZE,
            panels: DEFAULT_PANELS,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_DIST_TOL,
            seed: 0,
            interval: [-6.0, 6.0],
            points: 601,
            ratios: SWEEP_RATIOS.to_vec(),
            box_bound: None,
            allow_divergent: false,
            worst_case: false,
            contour_points: 81,
            inject_fault: false,
            out: PathBuf::from("out"),
        }
    }

    /// Defaults, then the config file, then command-line overrides.
    pub fn resolve(name: Experiment, config: ConfigFile, ov: &Overrides) -> ExperimentOutcome<Self> {
        if let Some(n) = config.name {
            if n != name {
                return spec_err(format!(
                    "config is for experiment '{}', not '{}'",
                    n.as_str(),
                    name.as_str()
                ));
            }
        }
        let mut s = Self::defaults(name);
        if let Some(m) = config.model {
            // A new model invalidates the default optimum and start.
            if m.dim != s.model.dim {
                s.phi_star = vec![0.0; m.dim];
                s.phi_0 = vec![1.0; m.dim];
            }
            s.model = m;
        }
        let star_given = config.phi_star.is_some();
        let start_given = config.phi_0.is_some();
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = config.$f { s.$f = v; } )* };
        }
        take!(phi_star, phi_0, eta, grid, panels, max_iters, tol, seed, out, interval, points, ratios, contour_points);
        s.gamma = config.gamma;
        s.c = config.c;
        s.box_bound = config.box_bound;
        s.allow_divergent = config.allow_divergent.unwrap_or(false);
        s.worst_case = config.worst_case.unwrap_or(false);
        s.inject_fault = config.inject_fault.unwrap_or(false);
        if name == Experiment::Sweep && star_given && !start_given {
            // keep the start at distance SWEEP_RADIUS from a moved optimum
            let v = SWEEP_RADIUS / (s.model.dim as f64).sqrt();
            s.phi_0 = s.phi_star.iter().map(|x| x + v).collect();
        }

        if let Some(v) = &ov.out {
            s.out = v.clone();
        }
        macro_rules! flag {
            ($($f:ident),*) => { $( if let Some(v) = ov.$f { s.$f = v; } )* };
        }
        flag!(seed, grid, panels, max_iters, tol);
        s.allow_divergent |= ov.allow_divergent;
        s.worst_case |= ov.worst_case;
        s.inject_fault |= ov.inject_fault;

        s.validate()?;
        Ok(s)
    }

    pub fn model(&self) -> ExperimentOutcome<ExpFamModel> {
        Ok(self.model.build()?)
    }

    /// The objective at `phi_star`, with the box if one is configured.
    pub fn objective(&self) -> ExperimentOutcome<BregmanObjective> {
        let obj = BregmanObjective::new(self.model()?, NaturalParams::new(self.phi_star.clone())?)?;
        Ok(match self.box_bound {
            Some(b) => obj.with_box(b)?,
            None => obj,
        })
    }

    pub fn phi0(&self) -> ExperimentOutcome<NaturalParams> {
        Ok(NaturalParams::new(self.phi_0.clone())?)
    }

    /// Checks every field before anything is computed.
    pub fn validate(&self) -> ExperimentOutcome<()> {
        self.model.validate()?;
        let d = self.model.dim;
        for (key, v) in [("phi_star", &self.phi_star), ("phi_0", &self.phi_0)] {
            if v.len() != d {
                return spec_err(format!("{key} has {} entries, model.dim is {d}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return spec_err(format!("{key} must be finite"));
            }
        }
        if self.grid < 3 || self.grid % 2 == 0 {
            return spec_err(format!("grid must be odd and at least 3, got {}", self.grid));
        }
        if self.panels < 2 || self.panels % 2 == 1 {
            return spec_err(format!("panels must be even and at least 2, got {}", self.panels));
        }
        if self.max_iters == 0 {
            return spec_err("max_iters must be at least 1");
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return spec_err(format!("tol must be finite and non-negative, got {}", self.tol));
        }
        if let Some(&bad) = self.eta.iter().find(|&&e| !(e > 0.0 && e < 2.0)) {
            return spec_err(format!("constant NGD step eta must lie in (0, 2), got {bad}"));
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c < 1.0) {
                return spec_err(format!("diminishing constant c must lie in (0, 1), got {c}"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return spec_err(format!("gamma must be positive, got {g}"));
            }
        }
        let [lo, hi] = self.interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return spec_err(format!("interval must satisfy lo < hi, got [{lo}, {hi}]"));
        }
        if self.points < 2 {
            return spec_err("points must be at least 2");
        }
        if self.contour_points < 2 {
            return spec_err("contour_points must be at least 2");
        }
        if let Some(&bad) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return spec_err(format!("ratios must lie in (0, 1], got {bad}"));
        }
        if let Some(b) = self.box_bound {
            if !(b > 0.0 && b.is_finite()) {
                return spec_err(format!("box_bound must be positive, got {b}"));
            }
            if self.phi_star.iter().chain(&self.phi_0).any(|x| x.abs() > b) {
                return spec_err(format!("phi_star and phi_0 must lie inside the box [-{b}, {b}]"));
            }
        }

        match self.name {
            Experiment::Landscape if d != 1 => spec_err(format!("landscape needs a 1-dimensional model, got dim {d}")),
            Experiment::Trajectory if d != 2 => spec_err(format!("trajectory needs a 2-dimensional model, got dim {d}")),
            Experiment::Trajectory | Experiment::Sweep if self.eta.is_empty() => spec_err("eta must list at least one step"),
            Experiment::Sweep if self.model.family != Family::Quadratic => spec_err("sweep needs the quadratic family"),
            Experiment::Sweep if self.model.spectrum.is_some() => {
                spec_err("sweep derives its spectra from `ratios`; drop model.spectrum")
            }
            Experiment::Sweep if self.ratios.is_empty() => spec_err("ratios must not be empty"),
            _ => Ok(()),
        }?;
        self.check_gamma()
    }

    /// Rejects γ ≥ 2/β unless divergence was explicitly allowed.
    fn check_gamma(&self) -> ExperimentOutcome<()> {
        let Some(gamma) = self.gamma else { return Ok(()) };
        if self.allow_divergent {
            return Ok(());
        }
        let beta = match self.name {
            // every sweep spectrum ends at β = 1
            Experiment::Sweep => 1.0,
            Experiment::Trajectory => {
                let obj = self.objective()?;
                spectral_envelope(&obj, &self.phi0()?, self.grid)?.beta
            }
            _ => return Ok(()),
        };
        if gamma >= 2.0 / beta {
            return spec_err(format!(
                "gamma = {gamma} is at or above the stability limit 2/beta = {}; pass --allow-divergent to run it anyway",
                2.0 / beta
            ));
        }
        Ok(())
    }
}
