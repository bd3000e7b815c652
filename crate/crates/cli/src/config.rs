//! Pipeline configuration: one JSON document, optionally patched from the
//! command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use segdyn::{BoxDomain, CalibrationConfig, FlowModel, IntegratorConfig, QuantitySpec, StateVector};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: FlowModel,
    pub domain: DomainSpec,
    pub epsilon: f64,
    /// Window length `T`.
    pub horizon: f64,
    pub n_t: usize,
    pub resolution: Vec<usize>,
    pub samples_per_cell: usize,
    pub tensor_order: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    pub word_length: usize,
    #[serde(default = "default_quantities")]
    pub quantities: Vec<QuantitySpec>,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    #[serde(default = "default_collocation_cap")]
    pub collocation_cap: usize,
    #[serde(default)]
    pub orbits: OrbitSettings,
    #[serde(default)]
    pub enumeration: EnumerationSettings,
    /// Uniform domain samples behind the cell measure.
    #[serde(default = "default_measure_samples")]
    pub measure_samples: usize,
    /// Central-difference step for Jacobian norms.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    pub boundary_samples: Option<usize>,
    pub time_samples: Option<usize>,
    /// Defaults to `epsilon / 2`.
    pub max_radius: Option<f64>,
    pub min_radius: Option<f64>,
    pub rel_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSettings {
    /// Explicit starting points; otherwise points are drawn inside cells.
    #[serde(default)]
    pub initial_points: Option<Vec<Vec<f64>>>,
    /// Complete encodings wanted from drawn points.
    #[serde(default = "default_orbit_count")]
    pub count: usize,
    /// Draw budget; defaults to `count`.
    #[serde(default)]
    pub max_draws: Option<usize>,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        OrbitSettings {
            initial_points: None,
            count: default_orbit_count(),
            max_draws: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnumerationMode {
    #[default]
    Markov,
    Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationSettings {
    /// Defaults to every cell.
    #[serde(default)]
    pub start_cells: Option<Vec<usize>>,
    #[serde(default = "default_enumeration_cap")]
    pub cap: usize,
    #[serde(default)]
    pub mode: EnumerationMode,
}

impl Default for EnumerationSettings {
    fn default() -> Self {
        EnumerationSettings {
            start_cells: None,
            cap: default_enumeration_cap(),
            mode: EnumerationMode::Markov,
        }
    }
}

fn default_m_max() -> usize {
    2
}
fn default_quantities() -> Vec<QuantitySpec> {
    vec![QuantitySpec::Energy]
}
fn default_collocation_cap() -> usize {
    1_000_000
}
fn default_measure_samples() -> usize {
    100_000
}
fn default_fd_step() -> f64 {
    1e-6
}
fn default_orbit_count() -> usize {
    100
}
fn default_enumeration_cap() -> usize {
    10_000
}

/// Command-line patches applied before the document is parsed.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `key=value` pairs; dotted keys reach nested fields, values parse as
    /// JSON and fall back to plain strings.
    pub set: Vec<String>,
}

fn patch(doc: &mut Value, key: &str, value: Value) -> Result<(), String> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| format!("{key}: parent is not an object"))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| format!("{key}: parent is not an object"))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| CliError::Config(vec![format!("config: {e}")]))?;
        let mut problems = Vec::new();
        if let Some(seed) = overrides.seed {
            patch(&mut doc, "rng_seed", seed.into()).map_err(|e| CliError::Config(vec![e]))?;
        }
        if let Some(out) = &overrides.out {
            patch(&mut doc, "output_dir", out.display().to_string().into()).map_err(|e| CliError::Config(vec![e]))?;
        }
        for kv in &overrides.set {
            let Some((key, raw)) = kv.split_once('=') else {
                problems.push(format!("--set {kv}: expected key=value"));
                continue;
            };
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            if let Err(e) = patch(&mut doc, key.trim(), value) {
                problems.push(e);
            }
        }
        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        let cfg: PipelineConfig =
            serde_json::from_value(doc).map_err(|e| CliError::Config(vec![format!("config: {e}")]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut p = Vec::new();
        let d = self.model.dimension();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                p.push(format!("{name}: must be a positive number (got {v})"));
            }
        };
        positive("epsilon", self.epsilon);
        positive("horizon", self.horizon);
        positive("integrator.step", self.integrator.step);
        positive("fd_step", self.fd_step);
        if let Some(v) = self.calibration.max_radius {
            positive("calibration.max_radius", v);
        }
        if let Some(v) = self.calibration.min_radius {
            positive("calibration.min_radius", v);
        }
        if let Some(v) = self.calibration.rel_tol {
            positive("calibration.rel_tol", v);
        }
        if self.n_t < 2 {
            p.push(format!("n_t: must be >= 2 (got {})", self.n_t));
        }
        if self.samples_per_cell == 0 {
            p.push("samples_per_cell: must be >= 1".into());
        }
        if self.tensor_order < 2 {
            p.push(format!("tensor_order: must be >= 2 (got {})", self.tensor_order));
        }
        if self.m_max == 0 {
            p.push("m_max: must be >= 1".into());
        }
        if self.word_length < 2 {
            p.push(format!("word_length: must be >= 2 (got {})", self.word_length));
        }
        if self.collocation_cap == 0 {
            p.push("collocation_cap: must be >= 1".into());
        }
        if self.measure_samples == 0 {
            p.push("measure_samples: must be >= 1".into());
        }
        if matches!(self.calibration.time_samples, Some(t) if t < 2) {
            p.push("calibration.time_samples: must be >= 2".into());
        }
        if self.orbits.count == 0 {
            p.push("orbits.count: must be >= 1".into());
        }
        if matches!(self.orbits.max_draws, Some(m) if m < self.orbits.count) {
            p.push("orbits.max_draws: must be >= orbits.count".into());
        }
        if self.enumeration.cap == 0 {
            p.push("enumeration.cap: must be >= 1".into());
        }
        if self.resolution.len() != d {
            p.push(format!(
                "resolution: expected {d} entries (model dimension), got {}",
                self.resolution.len()
            ));
        }
        if self.resolution.contains(&0) {
            p.push("resolution: every entry must be >= 1".into());
        }
        if self.domain.lower.len() != d || self.domain.upper.len() != d {
            p.push(format!("domain: lower and upper need {d} entries"));
        } else if let Err(e) = self.domain() {
            p.push(format!("domain: {e}"));
        }
        if let Some(points) = &self.orbits.initial_points {
            if points.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
                p.push(format!(
                    "orbits.initial_points: every point needs {d} finite coordinates"
                ));
            }
        }
        if self.enumeration.start_cells.iter().flatten().any(|c| *c == 0) {
            p.push("enumeration.start_cells: cell ids start at 1".into());
        }
        for (i, q) in self.quantities.iter().enumerate() {
            if let Err(e) = q.validate(d) {
                p.push(format!("quantities[{i}]: {e}"));
            }
        }
        if self.quantities.is_empty() {
            p.push("quantities: at least one quantity is required".into());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p))
        }
    }

    pub fn domain(&self) -> segdyn::Result<BoxDomain> {
        BoxDomain::new(
            StateVector::new(self.domain.lower.clone()),
            StateVector::new(self.domain.upper.clone()),
        )
    }

    pub fn calibration(&self) -> CalibrationConfig {
        let c = &self.calibration;
        let mut out = CalibrationConfig::new(c.max_radius.unwrap_or(self.epsilon / 2.0));
        if let Some(v) = c.boundary_samples {
            out.boundary_samples = v;
        }
        out.time_samples = c.time_samples.unwrap_or(self.n_t);
        if let Some(v) = c.min_radius {
            out.min_radius = v;
        }
        if let Some(v) = c.rel_tol {
            out.rel_tol = v;
        }
        out.seed = self.rng_seed;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": {"model_id": "Lorenz", "dimension": 3, "parameters": {}},
        "domain": {"lower": [-25, -30, -5], "upper": [25, 30, 50]},
        "epsilon": 1.0, "horizon": 0.5, "n_t": 51, "resolution": [12, 12, 12],
        "samples_per_cell": 200, "tensor_order": 3, "word_length": 20,
        "rng_seed": 7, "output_dir": "out"
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = PipelineConfig::parse(BASE, &Overrides::default()).unwrap();
        assert_eq!(c.m_max, 2);
        assert_eq!(c.quantities, vec![QuantitySpec::Energy]);
        assert_eq!(c.integrator, IntegratorConfig::rk4(1e-3));
        let cal = c.calibration();
        assert_eq!((cal.max_radius, cal.time_samples, cal.seed), (0.5, 51, 7));
    }

    #[test]
    fn overrides_patch_scalars_and_nested_fields() {
        let o = Overrides {
            seed: Some(99),
            out: Some("elsewhere".into()),
            set: vec!["epsilon=2.5".into(), "calibration.boundary_samples=8".into()],
        };
        let c = PipelineConfig::parse(BASE, &o).unwrap();
        assert_eq!(c.rng_seed, 99);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.epsilon, 2.5);
        assert_eq!(c.calibration().boundary_samples, 8);
    }

    #[test]
    fn validation_lists_every_offending_field() {
        let o = Overrides {
            set: vec![
                "epsilon=-1".into(),
                "n_t=1".into(),
                "resolution=[3,3]".into(),
                "tensor_order=1".into(),
            ],
            ..Default::default()
        };
        match PipelineConfig::parse(BASE, &o) {
            Err(CliError::Config(p)) => {
                let joined = p.join("\n");
                for field in ["epsilon", "n_t", "resolution", "tensor_order"] {
                    assert!(joined.contains(field), "{field} missing from {joined}");
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_fields_and_bad_boxes() {
        let o = Overrides {
            set: vec!["bogus=1".into()],
            ..Default::default()
        };
        assert!(matches!(PipelineConfig::parse(BASE, &o), Err(CliError::Config(_))));
        let o = Overrides {
            set: vec!["domain.lower=[30,-30,-5]".into()],
            ..Default::default()
        };
        assert!(matches!(PipelineConfig::parse(BASE, &o), Err(CliError::Config(_))));
    }
}
