use serde_json::json;

use super::spec::ExperimentSpec;
use super::{ExperimentOutcome, ExperimentResult, Row};
use crate::expfam::NaturalParams;
use crate::suite::linspace;

/// L over a 1-d interval next to the monotonicity bound anchored at φ₀.
pub fn cmd_landscape(spec: &ExperimentSpec) -> ExperimentOutcome<ExperimentResult> {
    let obj = spec.objective()?;
    let phi0 = spec.phi0()?;
    let [lo, hi] = spec.interval;

    let mut table = Row::header(&["phi", "L", "monotonicity_bound_from_phi0", "slack"]);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for x in linspace(lo, hi, spec.points) {
        let phi = NaturalParams::new(vec![x])?;
        let m = obj.monotonicity_check(&phi0, &phi)?;
        if m.slack < -1e-12 * (1.0 + m.lhs.abs()) {
            violations += 1;
        }
        min_slack = min_slack.min(m.slack);
        table.push(Row::new().num(x).num(m.lhs).num(m.rhs).num(m.slack));
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        csv: vec![("curve".into(), table.finish())],
        summary: json!({
            "L_phi0": obj.neg_elbo(&phi0)?,
            "rows": spec.points,
            "min_slack": min_slack,
            "slack_violations": violations,
        }),
        violations,
    })
}
