//! Pipeline stages. Each reads its inputs from the run directory, writes
//! its outputs there, and returns the output names for the manifest.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use segdyn::cover::{calibrated_cover, cell_measure, metric_entropy};
use segdyn::quantities::ReachableBounds;
use segdyn::quantities::{fixpoint_bounds, library_radius, reachable_bounds, segment_envelope};
use segdyn::segments::{build_segments, max_difference};
use segdyn::symbolic::ShadowReport;
use segdyn::symbolic::{
    encode_batch, enumerate_admissible, ks_entropy, reconstruct_pseudo_orbit, shadow_batch, Admissibility,
    EntropyReport, Enumeration,
};
use segdyn::transitions::{
    ball_admissibility, draw_in_cells, estimate_tensors, estimate_transitions, expanding_to_depth, gradient_norms,
    row_sensitivity, BallRule, ExpansionVerdict,
};
use segdyn::{
    io, CalibrationConfig, CellId, CellMeasure, MarkovMatrix, Partition, QuantityEnvelope, QuantitySpec,
    SegmentLibrary, StateVector, SymbolSequence, TransitionMatrix, TransitionTensor,
};

use crate::config::{EnumerationMode, PipelineConfig};
use crate::error::CliError;

pub const COVER_JSON: &str = "cover.json";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const LIBRARY_DIR: &str = "library";
pub const MD_CSV: &str = "md.csv";
pub const GAMMA_JSON: &str = "gamma.json";
pub const MARKOV_JSON: &str = "markov.json";
pub const TENSORS_JSON: &str = "tensors.json";
pub const PREDICATES_JSON: &str = "predicates.json";
pub const BALL_RULE_JSON: &str = "ball_rule.json";
pub const WORDS_JSON: &str = "words.json";
pub const STARTS_CSV: &str = "starts.csv";
pub const SHADOW_JSON: &str = "shadow.json";
pub const PSEUDO_ORBIT_CSV: &str = "pseudo_orbit.csv";
pub const ENUMERATION_JSON: &str = "enumeration.json";
pub const ENTROPY_JSON: &str = "entropy.json";
pub const BOUNDS_JSON: &str = "bounds.json";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Seed offsets so stages sharing `rng_seed` draw independent streams.
const ORBIT_STREAM: u64 = 0x6f72_6269_7473;
const MEASURE_STREAM: u64 = 0x6d65_6173_7572;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Calibrate,
    Segments,
    Transitions,
    Encode,
    Shadow,
    Enumerate,
    Entropy,
    Bounds,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Calibrate,
        Stage::Segments,
        Stage::Transitions,
        Stage::Encode,
        Stage::Shadow,
        Stage::Enumerate,
        Stage::Entropy,
        Stage::Bounds,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Calibrate => "calibrate",
            Stage::Segments => "segments",
            Stage::Transitions => "transitions",
            Stage::Encode => "encode",
            Stage::Shadow => "shadow",
            Stage::Enumerate => "enumerate",
            Stage::Entropy => "entropy",
            Stage::Bounds => "bounds",
            Stage::Report => "report",
        }
    }

    pub fn run(self, cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
        match self {
            Stage::Calibrate => calibrate(cfg, dir),
            Stage::Segments => segments(cfg, dir),
            Stage::Transitions => transitions(cfg, dir),
            Stage::Encode => encode(cfg, dir),
            Stage::Shadow => shadow(cfg, dir),
            Stage::Enumerate => enumerate(cfg, dir),
            Stage::Entropy => entropy(cfg, dir),
            Stage::Bounds => bounds(cfg, dir),
            Stage::Report => report(cfg, dir),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationDocument {
    pub settings: CalibrationConfig,
    pub n_centers: usize,
    pub n_cells: usize,
    pub radius_min: f64,
    pub radius_median: f64,
    pub radius_max: f64,
    /// Calibrated radius of every collocation centre, in grid order.
    pub radii: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredicatesDocument {
    pub n_cells: usize,
    pub n_admissible: usize,
    pub unsupported_rows: usize,
    pub mean_escape_fraction: f64,
    pub row_sensitivity: bool,
    pub expansion: ExpansionVerdict,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BallRuleEntry {
    pub rule: BallRule,
    /// Successors observed by sampling, for comparison.
    pub sampled: BTreeSet<CellId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BallRuleDocument {
    pub gradient_norms: Vec<f64>,
    pub rules: Vec<BallRuleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EncodedOrbit {
    pub x0: StateVector,
    pub sequence: SymbolSequence,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WordsDocument {
    pub length: usize,
    pub horizon: f64,
    pub complete: usize,
    /// Start points that lay outside every cell.
    pub outside: usize,
    pub orbits: Vec<EncodedOrbit>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnumerationDocument {
    pub mode: EnumerationMode,
    pub length: usize,
    pub cap: usize,
    pub per_start: Vec<Enumeration>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntropyDocument {
    pub metric_entropy: f64,
    pub measure_samples: usize,
    pub measure: CellMeasure,
    pub ks: EntropyReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuantityBounds {
    pub name: String,
    /// Added on both sides of `[q_lo, q_hi]` when comparing true orbits.
    pub slack: f64,
    pub envelope: QuantityEnvelope,
    pub word_length: usize,
    pub reachable: Vec<ReachableBounds>,
    pub fixpoint: Vec<ReachableBounds>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundsDocument {
    pub library_radius: f64,
    pub quantities: Vec<QuantityBounds>,
}

fn need(dir: &Path, name: &str, stage: Stage) -> Result<std::path::PathBuf, CliError> {
    io::require(dir, name).map_err(|_| CliError::MissingArtifact {
        path: dir.join(name),
        stage: stage.name(),
    })
}

pub fn load_partition(dir: &Path) -> Result<Partition, CliError> {
    Ok(io::read_json(&need(dir, COVER_JSON, Stage::Calibrate)?)?)
}

pub fn load_library(dir: &Path) -> Result<SegmentLibrary, CliError> {
    need(dir, &format!("{LIBRARY_DIR}/{}", io::LIBRARY_JSON), Stage::Segments)?;
    need(dir, &format!("{LIBRARY_DIR}/{}", io::SEGMENTS_CSV), Stage::Segments)?;
    Ok(io::read_library(&dir.join(LIBRARY_DIR))?)
}

pub fn load_gamma(dir: &Path) -> Result<TransitionMatrix, CliError> {
    Ok(io::read_gamma(&need(dir, GAMMA_JSON, Stage::Transitions)?)?)
}

pub fn load_markov(dir: &Path) -> Result<MarkovMatrix, CliError> {
    Ok(io::read_markov(&need(dir, MARKOV_JSON, Stage::Transitions)?)?)
}

pub fn load_tensors(dir: &Path) -> Result<Vec<TransitionTensor>, CliError> {
    Ok(io::read_tensors(&need(dir, TENSORS_JSON, Stage::Transitions)?)?)
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn calibrate(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let settings = cfg.calibration();
    let cc = calibrated_cover(
        &cfg.model,
        &cfg.domain()?,
        &cfg.resolution,
        cfg.collocation_cap,
        cfg.horizon,
        cfg.epsilon,
        &cfg.integrator,
        &settings,
    )?;
    let mut sorted = cc.radii.clone();
    sorted.sort_by(f64::total_cmp);
    let doc = CalibrationDocument {
        settings,
        n_centers: cc.centers.len(),
        n_cells: cc.cover.len(),
        radius_min: sorted[0],
        radius_median: sorted[sorted.len() / 2],
        radius_max: sorted[sorted.len() - 1],
        radii: cc.radii,
    };
    io::write_json(&dir.join(COVER_JSON), &cc.cover)?;
    io::write_json(&dir.join(CALIBRATION_JSON), &doc)?;
    println!(
        "calibrate: {} centres, {} cells, radius min {:.4} median {:.4} max {:.4}",
        doc.n_centers, doc.n_cells, doc.radius_min, doc.radius_median, doc.radius_max
    );
    Ok(names(&[COVER_JSON, CALIBRATION_JSON]))
}

fn segments(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let partition = load_partition(dir)?;
    let lib = build_segments(
        &cfg.model,
        partition.cover(),
        cfg.horizon,
        cfg.n_t,
        cfg.epsilon,
        &cfg.integrator,
    )?;
    let md = max_difference(&lib);
    io::write_library(&dir.join(LIBRARY_DIR), &lib)?;
    io::write_max_difference_csv(&dir.join(MD_CSV), lib.times(), &md)?;
    println!(
        "segments: {} segments of {} samples, M_d(0) = {:.4}, M_d(T) = {:.4}",
        lib.n_cells(),
        cfg.n_t,
        md[0],
        md[md.len() - 1]
    );
    Ok(vec![
        format!("{LIBRARY_DIR}/{}", io::LIBRARY_JSON),
        format!("{LIBRARY_DIR}/{}", io::SEGMENTS_CSV),
        MD_CSV.to_string(),
    ])
}

fn transitions(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let partition = load_partition(dir)?;
    let lib = load_library(dir)?;
    let (gamma, markov) = estimate_transitions(
        &cfg.model,
        &partition,
        cfg.horizon,
        cfg.samples_per_cell,
        &cfg.integrator,
        cfg.rng_seed,
    )?;
    let tensors = estimate_tensors(
        &cfg.model,
        &partition,
        cfg.horizon,
        cfg.tensor_order,
        cfg.samples_per_cell,
        &cfg.integrator,
        cfg.rng_seed,
    )?;
    let expansion = expanding_to_depth(&tensors, cfg.m_max)?;
    let n = gamma.n_cells();
    let predicates = PredicatesDocument {
        n_cells: n,
        n_admissible: gamma.n_admissible(),
        unsupported_rows: gamma.unsupported_rows().len(),
        mean_escape_fraction: gamma.cells().map(|c| gamma.escape_fraction(c)).sum::<f64>() / n as f64,
        row_sensitivity: row_sensitivity(&gamma),
        expansion,
    };
    let rules = if lib.n_cells() < 2 {
        BallRuleDocument {
            gradient_norms: Vec::new(),
            rules: Vec::new(),
        }
    } else {
        let rho = gradient_norms(&cfg.model, &lib, &cfg.integrator, cfg.fd_step)?;
        let rules = gamma
            .cells()
            .map(|c| {
                Ok(BallRuleEntry {
                    rule: ball_admissibility(&lib, &rho, c)?,
                    sampled: gamma.successors(c).clone(),
                })
            })
            .collect::<segdyn::Result<Vec<_>>>()?;
        BallRuleDocument {
            gradient_norms: rho,
            rules,
        }
    };
    io::write_gamma(&dir.join(GAMMA_JSON), &gamma)?;
    io::write_markov(&dir.join(MARKOV_JSON), &markov)?;
    io::write_tensors(&dir.join(TENSORS_JSON), &tensors)?;
    io::write_json(&dir.join(PREDICATES_JSON), &predicates)?;
    io::write_json(&dir.join(BALL_RULE_JSON), &rules)?;
    println!(
        "row sensitivity: {} ({} cells, {} admissible pairs, {} unsupported rows, mean escape {:.4})",
        predicates.row_sensitivity,
        n,
        predicates.n_admissible,
        predicates.unsupported_rows,
        predicates.mean_escape_fraction
    );
    let e = &predicates.expansion;
    println!(
        "expanding to depth {}: {} (order {}, {} tuples checked, {} failing, {} undetermined)",
        e.m_max,
        e.expanding_up_to_depth,
        e.max_order,
        e.checked,
        e.witness_failures.len(),
        e.undetermined
    );
    Ok(names(&[
        GAMMA_JSON,
        MARKOV_JSON,
        TENSORS_JSON,
        PREDICATES_JSON,
        BALL_RULE_JSON,
    ]))
}

/// Start points for `encode` and `shadow`: the configured list, or points
/// drawn inside cells until `orbits.count` complete encodings are found or
/// the draw budget runs out.
fn orbit_words(cfg: &PipelineConfig, partition: &Partition) -> Result<WordsDocument, CliError> {
    let (starts, stop_at) = match &cfg.orbits.initial_points {
        Some(points) => (points.iter().cloned().map(StateVector::new).collect(), usize::MAX),
        None => {
            let budget = cfg.orbits.max_draws.unwrap_or(cfg.orbits.count);
            (
                draw_in_cells(partition, budget, cfg.rng_seed ^ ORBIT_STREAM)?,
                cfg.orbits.count,
            )
        }
    };
    let words = encode_batch(
        &cfg.model,
        partition,
        &starts,
        cfg.word_length,
        cfg.horizon,
        &cfg.integrator,
    );
    let mut doc = WordsDocument {
        length: cfg.word_length,
        horizon: cfg.horizon,
        complete: 0,
        outside: 0,
        orbits: Vec::new(),
    };
    for (x0, w) in starts.into_iter().zip(words) {
        match w {
            Ok(sequence) => {
                doc.complete += usize::from(sequence.complete);
                doc.orbits.push(EncodedOrbit { x0, sequence });
            }
            Err(segdyn::Error::StartOutsidePartition { .. }) => doc.outside += 1,
            Err(e) => return Err(e.into()),
        }
        if doc.complete == stop_at {
            break;
        }
    }
    Ok(doc)
}

fn encode(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let partition = load_partition(dir)?;
    let doc = orbit_words(cfg, &partition)?;
    let starts: Vec<StateVector> = doc.orbits.iter().map(|o| o.x0.clone()).collect();
    io::write_json(&dir.join(WORDS_JSON), &doc)?;
    io::write_samples_csv(&dir.join(STARTS_CSV), &starts)?;
    println!(
        "encode: {} orbits encoded, {} complete at length {}, {} starts outside the partition",
        doc.orbits.len(),
        doc.complete,
        doc.length,
        doc.outside
    );
    Ok(names(&[WORDS_JSON, STARTS_CSV]))
}

fn shadow(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let partition = load_partition(dir)?;
    let lib = load_library(dir)?;
    let words = orbit_words(cfg, &partition)?;
    let starts: Vec<StateVector> = words.orbits.iter().map(|o| o.x0.clone()).collect();
    let report = shadow_batch(&lib, &partition, &starts, cfg.word_length)?;
    // the longest word gives the most informative pseudo-orbit
    let mut longest: Option<&segdyn::symbolic::OrbitShadow> = None;
    for o in &report.per_orbit {
        if longest.is_none_or(|l| o.word.len() > l.word.len()) {
            longest = Some(o);
        }
    }
    let mut outputs = names(&[SHADOW_JSON]);
    if let Some(o) = longest {
        io::write_pseudo_orbit_csv(&dir.join(PSEUDO_ORBIT_CSV), &reconstruct_pseudo_orbit(&lib, &o.word)?)?;
        outputs.push(PSEUDO_ORBIT_CSV.into());
    }
    io::write_json(&dir.join(SHADOW_JSON), &report)?;
    println!(
        "shadow: max error {:.6} over {} complete encodings (epsilon {}), {:.6} over all {} prefixes",
        report.max_error,
        report.complete_orbits,
        report.epsilon,
        report.max_error_any,
        report.per_orbit.len()
    );
    Ok(outputs)
}

fn enumerate(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let gamma;
    let tensors;
    let rule = match cfg.enumeration.mode {
        EnumerationMode::Markov => {
            gamma = load_gamma(dir)?;
            Admissibility::Markov(&gamma)
        }
        EnumerationMode::Tensor => {
            tensors = load_tensors(dir)?;
            Admissibility::Tensor(
                tensors
                    .last()
                    .ok_or(segdyn::Error::MissingTensorOrder(cfg.tensor_order))?,
            )
        }
    };
    let starts: Vec<CellId> = match &cfg.enumeration.start_cells {
        Some(cells) => cells.iter().map(|c| CellId::new(*c)).collect(),
        None => (1..=rule.n_cells()).map(CellId::new).collect(),
    };
    let per_start = starts
        .iter()
        .map(|n0| enumerate_admissible(rule, *n0, cfg.word_length, cfg.enumeration.cap))
        .collect::<segdyn::Result<Vec<_>>>()?;
    let total: usize = per_start.iter().map(|e| e.words.len()).sum();
    let overflow = per_start.iter().filter(|e| e.overflow).count();
    let doc = EnumerationDocument {
        mode: cfg.enumeration.mode,
        length: cfg.word_length,
        cap: cfg.enumeration.cap,
        per_start,
    };
    io::write_json(&dir.join(ENUMERATION_JSON), &doc)?;
    println!(
        "enumerate: {} admissible words of length {} from {} start cells ({} capped)",
        total,
        cfg.word_length,
        starts.len(),
        overflow
    );
    Ok(names(&[ENUMERATION_JSON]))
}

fn entropy(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let partition = load_partition(dir)?;
    let markov = load_markov(dir)?;
    let cloud = cfg
        .domain()?
        .uniform_cloud(cfg.measure_samples, cfg.rng_seed ^ MEASURE_STREAM);
    let measure = cell_measure(&partition, &cloud)?;
    let doc = EntropyDocument {
        metric_entropy: metric_entropy(&measure)?,
        measure_samples: cfg.measure_samples,
        measure,
        ks: ks_entropy(&markov),
    };
    io::write_json(&dir.join(ENTROPY_JSON), &doc)?;
    println!(
        "entropy: H = {:.6}, H_mu (row sum) = {:.6}, H_mu (stationary) = {:.6}",
        doc.metric_entropy, doc.ks.unweighted_sum, doc.ks.stationary_weighted
    );
    Ok(names(&[ENTROPY_JSON]))
}

fn bounds(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let lib = load_library(dir)?;
    let gamma = load_gamma(dir)?;
    let radius = library_radius(&lib);
    let quantities = cfg
        .quantities
        .iter()
        .map(|q: &QuantitySpec| -> Result<QuantityBounds, CliError> {
            let envelope = segment_envelope(&lib, q)?;
            let mut reachable = Vec::new();
            let mut fixpoint = Vec::new();
            for c in gamma.cells() {
                reachable.push(reachable_bounds(&envelope, &gamma, c, cfg.word_length)?);
                fixpoint.push(fixpoint_bounds(&envelope, &gamma, c)?);
            }
            Ok(QuantityBounds {
                name: q.name(),
                slack: q.lipschitz_slack(radius, cfg.epsilon),
                envelope,
                word_length: cfg.word_length,
                reachable,
                fixpoint,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    for q in &quantities {
        let lo = q.reachable.iter().map(|b| b.q_lo).fold(f64::INFINITY, f64::min);
        let hi = q.reachable.iter().map(|b| b.q_hi).fold(f64::NEG_INFINITY, f64::max);
        println!(
            "bounds: {} in [{lo:.4}, {hi:.4}] over all starts, slack {:.4}",
            q.name, q.slack
        );
    }
    io::write_json(
        &dir.join(BOUNDS_JSON),
        &BoundsDocument {
            library_radius: radius,
            quantities,
        },
    )?;
    Ok(names(&[BOUNDS_JSON]))
}

fn optional<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>, CliError> {
    let path = dir.join(name);
    if path.exists() {
        Ok(Some(io::read_json(&path)?))
    } else {
        Ok(None)
    }
}

/// Aggregates whatever earlier stages produced; needs at least the cover.
fn report(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let partition = load_partition(dir)?;
    let calibration: Option<CalibrationDocument> = optional(dir, CALIBRATION_JSON)?;
    let predicates: Option<PredicatesDocument> = optional(dir, PREDICATES_JSON)?;
    let words: Option<WordsDocument> = optional(dir, WORDS_JSON)?;
    let shadow: Option<ShadowReport> = optional(dir, SHADOW_JSON)?;
    let entropy: Option<EntropyDocument> = optional(dir, ENTROPY_JSON)?;
    let bounds: Option<BoundsDocument> = optional(dir, BOUNDS_JSON)?;
    let md = if dir.join(MD_CSV).exists() {
        Some(io::read_max_difference_csv(&dir.join(MD_CSV))?)
    } else {
        None
    };

    let mut text = String::new();
    let mut doc = json!({
        "model": cfg.model.model_id(),
        "epsilon": cfg.epsilon,
        "horizon": cfg.horizon,
        "n_cells": partition.n_cells(),
        "max_radius": partition.cover().max_radius(),
    });
    writeln!(
        text,
        "model {:?}, epsilon {}, T {}, {} cells",
        cfg.model.model_id(),
        cfg.epsilon,
        cfg.horizon,
        partition.n_cells()
    )
    .unwrap();
    if let Some(c) = &calibration {
        doc["calibration"] = json!({
            "n_centers": c.n_centers,
            "radius_min": c.radius_min,
            "radius_median": c.radius_median,
            "radius_max": c.radius_max,
        });
        writeln!(
            text,
            "radii: min {:.4}, median {:.4}, max {:.4} over {} centres",
            c.radius_min, c.radius_median, c.radius_max, c.n_centers
        )
        .unwrap();
    }
    if let Some((_, md)) = &md {
        let peak = md.iter().copied().fold(0.0, f64::max);
        doc["max_difference_peak"] = json!(peak);
        writeln!(text, "largest segment separation M_d: {peak:.4}").unwrap();
    }
    if let Some(p) = &predicates {
        doc["predicates"] = serde_json::to_value(p).map_err(json_err)?;
        writeln!(
            text,
            "row sensitivity {}, expanding to depth {} {}, {} admissible pairs, mean escape {:.4}",
            p.row_sensitivity,
            p.expansion.m_max,
            p.expansion.expanding_up_to_depth,
            p.n_admissible,
            p.mean_escape_fraction
        )
        .unwrap();
    }
    if let Some(w) = &words {
        doc["encode"] = json!({"orbits": w.orbits.len(), "complete": w.complete, "length": w.length});
        writeln!(
            text,
            "{} encoded orbits, {} complete at length {}",
            w.orbits.len(),
            w.complete,
            w.length
        )
        .unwrap();
    }
    if let Some(s) = &shadow {
        doc["shadow"] = json!({
            "epsilon": s.epsilon,
            "max_error": s.max_error,
            "complete_orbits": s.complete_orbits,
            "max_error_any": s.max_error_any,
            "within_epsilon": s.max_error_any <= s.epsilon + 1e-6,
        });
        writeln!(
            text,
            "shadowing error {:.6} (complete) / {:.6} (all prefixes), epsilon {}",
            s.max_error, s.max_error_any, s.epsilon
        )
        .unwrap();
    }
    if let Some(e) = &entropy {
        doc["entropy"] = json!({
            "metric_entropy": e.metric_entropy,
            "ks_unweighted_sum": e.ks.unweighted_sum,
            "ks_stationary_weighted": e.ks.stationary_weighted,
        });
        writeln!(
            text,
            "H = {:.6}, H_mu = {:.6} (row sum) / {:.6} (stationary)",
            e.metric_entropy, e.ks.unweighted_sum, e.ks.stationary_weighted
        )
        .unwrap();
    }
    if let Some(b) = &bounds {
        let mut list = Vec::new();
        for q in &b.quantities {
            let lo = q.reachable.iter().map(|r| r.q_lo).fold(f64::INFINITY, f64::min);
            let hi = q.reachable.iter().map(|r| r.q_hi).fold(f64::NEG_INFINITY, f64::max);
            list.push(json!({"name": q.name, "q_lo": lo, "q_hi": hi, "slack": q.slack}));
            writeln!(text, "{} within [{lo:.4}, {hi:.4}] +- {:.4}", q.name, q.slack).unwrap();
        }
        doc["bounds"] = Value::Array(list);
    }
    io::write_json(&dir.join(REPORT_JSON), &doc)?;
    std::fs::write(dir.join(SUMMARY_TXT), &text).map_err(|source| segdyn::Error::Io {
        path: dir.join(SUMMARY_TXT),
        source,
    })?;
    print!("{text}");
    Ok(names(&[REPORT_JSON, SUMMARY_TXT]))
}

fn json_err(source: serde_json::Error) -> segdyn::Error {
    segdyn::Error::Json {
        context: "report".into(),
        source,
    }
}

/// Parses one recorded output with the loader for its schema.
pub fn validate_output(dir: &Path, name: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    match name {
        COVER_JSON => drop(io::read_json::<Partition>(&path)?),
        CALIBRATION_JSON => drop(io::read_json::<CalibrationDocument>(&path)?),
        MD_CSV => drop(io::read_max_difference_csv(&path)?),
        GAMMA_JSON => drop(io::read_gamma(&path)?),
        MARKOV_JSON => drop(io::read_markov(&path)?),
        TENSORS_JSON => drop(io::read_tensors(&path)?),
        PREDICATES_JSON => drop(io::read_json::<PredicatesDocument>(&path)?),
        BALL_RULE_JSON => drop(io::read_json::<BallRuleDocument>(&path)?),
        WORDS_JSON => drop(io::read_json::<WordsDocument>(&path)?),
        STARTS_CSV => drop(io::read_samples_csv(&path)?),
        SHADOW_JSON => drop(io::read_json::<ShadowReport>(&path)?),
        ENUMERATION_JSON => drop(io::read_json::<EnumerationDocument>(&path)?),
        ENTROPY_JSON => drop(io::read_json::<EntropyDocument>(&path)?),
        BOUNDS_JSON => drop(io::read_json::<BoundsDocument>(&path)?),
        REPORT_JSON => drop(io::read_json::<Value>(&path)?),
        _ if name.starts_with(LIBRARY_DIR) => drop(io::read_library(&dir.join(LIBRARY_DIR))?),
        // plain text and pseudo-orbit CSV: the digest is the check
        _ => {}
    }
    Ok(())
}
