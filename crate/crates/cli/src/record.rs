use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Anchors every full verification run must report.
pub const REQUIRED_ANCHORS: &[&str] = &[
    "field.essential-range",
    "metric.sentinel",
    "metric.cone-bounds",
    "metric.symmetry",
    "metric.subadditivity",
    "shape.monotonicity",
    "shape.strict-gap",
    "shape.evenness",
    "effham.sandwich",
    "effham.flat-hilltop",
    "effham.flat-valley",
    "effham.partition",
    "effham.evenness",
    "effham.coercivity",
    "effham.path-consistency",
    "cell.bounds",
    "cell.lipschitz-uniform",
    "cell.ladder-decay",
    "cell.final-error",
    "cell.liminf-nonnegative",
    "cell.limsup-hilltop",
    "cell.liminf-plus-branch",
    "cell.p-continuity",
    "evolve.ladder-decay",
    "evolve.homogenized-plane-wave",
    "evolve.constants-commute",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub anchor: String,
    pub description: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub errors: Vec<String>,
    /// Stages left out because the configuration has no section for them.
    #[serde(default)]
    pub skipped: Vec<String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunRecord {
    /// `measured <= tolerance`.
    pub fn at_most(&mut self, anchor: &str, description: &str, measured: f64, tolerance: f64) {
        self.push(anchor, description, measured, tolerance, measured <= tolerance, None);
    }

    pub fn push(
        &mut self,
        anchor: &str,
        description: &str,
        measured: f64,
        tolerance: f64,
        pass: bool,
        note: Option<String>,
    ) {
        self.checks.push(Check {
            anchor: anchor.into(),
            description: description.into(),
            measured,
            tolerance,
            pass,
            note,
        });
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn all_passed(&self) -> bool {
        self.failed().next().is_none()
    }

    pub fn missing_anchors(&self) -> Vec<&'static str> {
        REQUIRED_ANCHORS
            .iter()
            .copied()
            .filter(|a| !self.skipped.iter().any(|s| a.split('.').next() == Some(s.as_str())))
            .filter(|a| !self.checks.iter().any(|c| c.anchor == *a))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skipped_stages_are_not_missing() {
        let mut r = RunRecord::default();
        assert_eq!(r.missing_anchors().len(), REQUIRED_ANCHORS.len());
        r.skipped = vec!["cell".into(), "evolve".into()];
        assert!(r.missing_anchors().iter().all(|a| !a.starts_with("cell.") && !a.starts_with("evolve.")));
        r.at_most("field.essential-range", "", 0.0, 0.0);
        assert!(!r.missing_anchors().contains(&"field.essential-range"));
        r.at_most("x", "", 1.0, 0.0);
        assert!(!r.all_passed());
    }
}
