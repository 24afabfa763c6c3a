//! Experiment configuration, read from TOML with at most two levels of
//! nesting (top-level keys and one table per stage).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use homogen_core::field::{EnsembleKind, EnsembleSpec, Profile};
use homogen_core::metric::ParamPair;

#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "malformed config: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleType {
    Constant,
    ShiftedPeriodic,
    PoissonBumps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(rename = "type")]
    pub kind: EnsembleType,
    pub dimension: usize,
    #[serde(default)]
    pub level: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub period: f64,
    #[serde(default)]
    pub intensity: f64,
    #[serde(default)]
    pub radius: f64,
    #[serde(default)]
    pub height: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub spacing: f64,
    pub half_extent: f64,
    /// `[mu, sigma]` pairs.
    pub params: Vec<[f64; 2]>,
    #[serde(default = "half")]
    pub margin: f64,
    #[serde(default = "two_hundred")]
    pub pairs: usize,
    #[serde(default = "two_hundred")]
    pub triples: usize,
}

fn half() -> f64 {
    0.5
}

fn two_hundred() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub spacing: f64,
    pub radii: Vec<f64>,
    pub realizations: usize,
    #[serde(default = "thirty_two")]
    pub directions: usize,
    #[serde(default = "half")]
    pub margin: f64,
    #[serde(default)]
    pub richardson: bool,
    /// `[mu, sigma]` ladder for the monotonicity checks.
    pub params: Vec<[f64; 2]>,
}

fn thirty_two() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffhamConfig {
    pub pmax: f64,
    /// Nodes per axis of the p-grid.
    pub points: usize,
    /// Lattice nodes per branch for two-dimensional shape interpolation.
    #[serde(default = "seventeen")]
    pub lattice_points: usize,
}

fn seventeen() -> usize {
    17
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub spacing: f64,
    /// Decreasing.
    pub deltas: Vec<f64>,
    /// Momentum magnitudes along the first axis.
    pub momenta: Vec<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    /// Decreasing.
    pub epsilons: Vec<f64>,
    pub momenta: Vec<f64>,
    /// `eps / h`.
    pub resolution: f64,
    #[serde(default = "one")]
    pub final_time: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "half")]
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_mu")]
    pub tol_mu: f64,
    #[serde(default = "tol_gap")]
    pub tol_gap: f64,
    #[serde(default = "tol_h")]
    pub tol_h: f64,
    #[serde(default = "tol_cell")]
    pub tol_cell: f64,
    #[serde(default = "tol_hom")]
    pub tol_hom: f64,
}

fn tol_mu() -> f64 {
    1e-3
}
fn tol_gap() -> f64 {
    1e-9
}
fn tol_h() -> f64 {
    0.05
}
fn tol_cell() -> f64 {
    1e-6
}
fn tol_hom() -> f64 {
    0.05
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_mu: tol_mu(),
            tol_gap: tol_gap(),
            tol_h: tol_h(),
            tol_cell: tol_cell(),
            tol_hom: tol_hom(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    pub ensemble: EnsembleConfig,
    pub metric: MetricConfig,
    pub shape: ShapeConfig,
    pub effham: EffhamConfig,
    #[serde(default)]
    pub cell: Option<CellConfig>,
    #[serde(default)]
    pub evolve: Option<EvolveConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_output() -> String {
    "out".into()
}

fn strictly(v: &[f64], increasing: bool) -> bool {
    v.windows(2).all(|w| if increasing { w[0] < w[1] } else { w[0] > w[1] })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dimension(&self) -> usize {
        self.ensemble.dimension
    }

    pub fn with_overrides(mut self, seed: Option<u64>, dim: Option<usize>) -> Result<Self, ConfigError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(d) = dim {
            self.ensemble.dimension = d;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        let e = &self.ensemble;
        let d = e.dimension;
        match e.kind {
            EnsembleType::Constant => EnsembleSpec::constant(d, e.level),
            EnsembleType::ShiftedPeriodic => EnsembleSpec::cosine(d, e.amplitude, e.period, self.seed),
            EnsembleType::PoissonBumps => EnsembleSpec::bumps(d, e.intensity, e.radius, e.height, self.seed),
        }
    }

    pub fn metric_params(&self) -> Result<Vec<ParamPair>, ConfigError> {
        pairs(&self.metric.params)
    }

    pub fn shape_params(&self) -> Result<Vec<ParamPair>, ConfigError> {
        pairs(&self.shape.params)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.ensemble.dimension != 1 && self.ensemble.dimension != 2 {
            return bad("ensemble.dimension must be 1 or 2");
        }
        let spec = self.ensemble_spec();
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if matches!(spec.kind, EnsembleKind::ShiftedPeriodic { profile: Profile::Cosine { .. }, .. })
            && self.ensemble.amplitude < 0.0
        {
            return bad("ensemble.amplitude must be nonnegative");
        }
        let t = &self.tolerances;
        if [t.tol_mu, t.tol_gap, t.tol_h, t.tol_cell, t.tol_hom].iter().any(|x| !(*x > 0.0)) {
            return bad("all tolerances must be positive");
        }
        if !(self.metric.spacing > 0.0 && self.metric.half_extent > 0.0) || self.metric.params.is_empty() {
            return bad("metric needs positive spacing, half_extent and a nonempty params list");
        }
        self.metric_params()?;
        let s = &self.shape;
        if s.radii.is_empty() || !strictly(&s.radii, true) || s.radii[0] <= 0.0 {
            return bad("shape.radii must be nonempty, positive and increasing");
        }
        if s.realizations == 0 || s.directions < 4 || s.params.is_empty() || !(s.spacing > 0.0) {
            return bad("shape needs realizations >= 1, directions >= 4, spacing > 0 and params");
        }
        self.shape_params()?;
        if !(self.effham.pmax > 0.0) || self.effham.points < 2 || self.effham.lattice_points < 2 {
            return bad("effham needs pmax > 0, points >= 2 and lattice_points >= 2");
        }
        if let Some(c) = &self.cell {
            if c.deltas.is_empty() || !strictly(&c.deltas, false) || c.deltas.iter().any(|d| !(*d > 0.0)) {
                return bad("cell.deltas must be nonempty, positive and decreasing");
            }
            if c.momenta.is_empty() || !strictly(&c.momenta, true) || !(c.spacing > 0.0) {
                return bad("cell.momenta must be nonempty and increasing; spacing > 0");
            }
        }
        if let Some(e) = &self.evolve {
            if e.epsilons.is_empty() || !strictly(&e.epsilons, false) || e.epsilons.iter().any(|x| !(*x > 0.0)) {
                return bad("evolve.epsilons must be nonempty, positive and decreasing");
            }
            if e.momenta.is_empty() || !strictly(&e.momenta, true) || !(e.resolution >= 8.0) {
                return bad("evolve.momenta must be increasing and resolution >= 8");
            }
            if !(e.final_time > 0.0 && e.k > 0.0) {
                return bad("evolve.final_time and evolve.k must be positive");
            }
        }
        Ok(())
    }
}

fn pairs(raw: &[[f64; 2]]) -> Result<Vec<ParamPair>, ConfigError> {
    raw.iter()
        .map(|[m, s]| ParamPair::new(*m, *s).map_err(|e| ConfigError::Invalid(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FLAT: &str = include_str!("../../../configs/v0.toml");
    const PERIODIC: &str = include_str!("../../../configs/periodic1d.toml");
    const BUMPS: &str = include_str!("../../../configs/bumps2d.toml");

    #[test]
    fn reference_configs_parse_and_round_trip() {
        for text in [FLAT, PERIODIC, BUMPS] {
            let cfg = ExperimentConfig::parse(text).unwrap();
            let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(cfg.hash(), again.hash());
        }
    }

    #[test]
    fn rejects_bad_ladders() {
        let cfg = ExperimentConfig::parse(PERIODIC).unwrap();
        let mut bad = cfg.clone();
        bad.shape.radii = vec![10.0, 5.0];
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.tolerances.tol_h = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.cell.as_mut().unwrap().deltas = vec![0.05, 0.1];
        assert!(bad.validate().is_err());
        assert!(matches!(ExperimentConfig::parse("name = 3"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn overrides() {
        let cfg = ExperimentConfig::parse(PERIODIC).unwrap();
        let c2 = cfg.clone().with_overrides(Some(77), None).unwrap();
        assert_eq!(c2.ensemble_spec().seed, 77);
        assert_ne!(cfg.hash(), c2.hash());
        assert!(cfg.with_overrides(None, Some(3)).is_err());
    }
}
