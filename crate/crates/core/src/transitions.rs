//! Sampled transition structure of the partition under the time-`T` map.
//!
//! `Γ[m][n] = 1` when some sample of cell `m` lands in cell `n` after time
//! `T`; `p[m][n]` is the fraction of cell `m`'s landed samples that end in
//! `n`. Higher-order tensors record full cell itineraries of the same samples.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cover::{CellId, Partition};
use crate::error::{Error, Result};
use crate::flow::{self, FlowModel, IntegratorConfig, StateVector};
use crate::par;
use crate::segments::SegmentLibrary;

/// Rejection-sampling attempts allowed per requested sample.
pub const DEFAULT_ATTEMPTS_PER_SAMPLE: usize = 1000;

/// Boolean transition pattern `Γ` plus the sample counts behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    admissible: Vec<BTreeSet<CellId>>,
    counts: Vec<BTreeMap<CellId, u64>>,
    escaped: Vec<u64>,
}

impl TransitionMatrix {
    /// Hand-specified pattern, row `m` listing `Γ[m][·]` as 0/1 entries.
    pub fn from_pattern(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("transition matrix needs at least one row"));
        }
        let mut admissible = Vec::with_capacity(n);
        for (m, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {} has length {}, expected {n}",
                    m + 1,
                    row.len()
                )));
            }
            admissible.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0)
                    .map(|(j, _)| CellId::from_slot(j))
                    .collect(),
            );
        }
        Ok(TransitionMatrix {
            admissible,
            counts: vec![BTreeMap::new(); n],
            escaped: vec![0; n],
        })
    }

    /// Pattern and counts from observed landings; `Γ` is the support of `counts`.
    pub fn from_counts(counts: Vec<BTreeMap<CellId, u64>>, escaped: Vec<u64>) -> Result<Self> {
        let n = counts.len();
        if escaped.len() != n || n == 0 {
            return Err(Error::invalid("counts and escape tallies need one entry per cell"));
        }
        let admissible = counts
            .iter()
            .map(|row| row.iter().filter(|(_, c)| **c > 0).map(|(k, _)| *k).collect())
            .collect();
        let tm = TransitionMatrix {
            admissible,
            counts,
            escaped,
        };
        tm.validate()?;
        Ok(tm)
    }

    /// Explicit pattern together with counts (counts must be supported by the pattern).
    pub fn with_counts(
        admissible: Vec<BTreeSet<CellId>>,
        counts: Vec<BTreeMap<CellId, u64>>,
        escaped: Vec<u64>,
    ) -> Result<Self> {
        let tm = TransitionMatrix {
            admissible,
            counts,
            escaped,
        };
        tm.validate()?;
        Ok(tm)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.admissible.len();
        let bad = |reason: String| Error::InvalidArtifact {
            context: "transition matrix".into(),
            reason,
        };
        if self.counts.len() != n || self.escaped.len() != n {
            return Err(bad("row tables have inconsistent lengths".into()));
        }
        for (m, (row, counts)) in self.admissible.iter().zip(&self.counts).enumerate() {
            if let Some(c) = row.iter().chain(counts.keys()).find(|c| c.get() > n) {
                return Err(bad(format!("row {} references cell {c} of {n}", m + 1)));
            }
            if let Some((c, _)) = counts.iter().find(|(c, k)| **k > 0 && !row.contains(c)) {
                return Err(bad(format!("count for ({}, {c}) without admissibility", m + 1)));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.admissible.len()
    }

    pub fn is_admissible(&self, from: CellId, to: CellId) -> bool {
        self.admissible[from.slot()].contains(&to)
    }

    pub fn successors(&self, from: CellId) -> &BTreeSet<CellId> {
        &self.admissible[from.slot()]
    }

    pub fn count(&self, from: CellId, to: CellId) -> u64 {
        self.counts[from.slot()].get(&to).copied().unwrap_or(0)
    }

    pub fn row_counts(&self, from: CellId) -> &BTreeMap<CellId, u64> {
        &self.counts[from.slot()]
    }

    /// Samples of `from` that landed in some cell.
    pub fn landed(&self, from: CellId) -> u64 {
        self.counts[from.slot()].values().sum()
    }

    pub fn escaped(&self, from: CellId) -> u64 {
        self.escaped[from.slot()]
    }

    /// Fraction of the samples of `from` that left every cell; 0 without samples.
    pub fn escape_fraction(&self, from: CellId) -> f64 {
        let total = self.landed(from) + self.escaped(from);
        if total == 0 {
            0.0
        } else {
            self.escaped(from) as f64 / total as f64
        }
    }

    pub fn is_supported(&self, from: CellId) -> bool {
        !self.admissible[from.slot()].is_empty()
    }

    /// Rows with no admissible successor (no landed samples when sampled).
    pub fn unsupported_rows(&self) -> Vec<CellId> {
        self.cells().filter(|c| !self.is_supported(*c)).collect()
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> {
        (0..self.n_cells()).map(CellId::from_slot)
    }

    pub fn n_admissible(&self) -> usize {
        self.admissible.iter().map(BTreeSet::len).sum()
    }
}

/// Row-stochastic (on supported rows) matrix `p`, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovMatrix {
    rows: Vec<BTreeMap<CellId, f64>>,
}

impl MarkovMatrix {
    pub fn from_rows(rows: Vec<BTreeMap<CellId, f64>>) -> Result<Self> {
        let p = MarkovMatrix { rows };
        p.validate()?;
        Ok(p)
    }

    pub fn from_dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("Markov matrix must be square"));
        }
        Self::from_rows(
            rows.into_iter()
                .map(|r| {
                    r.into_iter()
                        .enumerate()
                        .filter(|(_, v)| *v != 0.0)
                        .map(|(j, v)| (CellId::from_slot(j), v))
                        .collect()
                })
                .collect(),
        )
    }

    /// `p[m][n] = counts[m][n] / landed(m)`.
    pub fn from_transitions(gamma: &TransitionMatrix) -> Self {
        let rows = gamma
            .counts
            .iter()
            .map(|row| {
                let total: u64 = row.values().sum();
                row.iter()
                    .filter(|(_, c)| **c > 0)
                    .map(|(k, c)| (*k, *c as f64 / total as f64))
                    .collect()
            })
            .collect();
        MarkovMatrix { rows }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows.len();
        let bad = |reason: String| Error::InvalidArtifact {
            context: "Markov matrix".into(),
            reason,
        };
        if n == 0 {
            return Err(bad("empty matrix".into()));
        }
        for (m, row) in self.rows.iter().enumerate() {
            if let Some((c, v)) = row
                .iter()
                .find(|(c, v)| c.get() > n || !(**v >= 0.0 && **v <= 1.0 + 1e-12))
            {
                return Err(bad(format!("entry ({}, {c}) = {v} is invalid", m + 1)));
            }
            let sum: f64 = row.values().sum();
            if !row.is_empty() && (sum - 1.0).abs() > 1e-9 {
                return Err(bad(format!("row {} sums to {sum}", m + 1)));
            }
        }
        Ok(())
    }

    /// Checks `p[m][n] > 0 ⇒ Γ[m][n] = 1`.
    pub fn check_support(&self, gamma: &TransitionMatrix) -> Result<()> {
        for (m, row) in self.rows.iter().enumerate() {
            let from = CellId::from_slot(m);
            if let Some((to, _)) = row.iter().find(|(to, v)| **v > 0.0 && !gamma.is_admissible(from, **to)) {
                return Err(Error::InvalidArtifact {
                    context: "Markov matrix".into(),
                    reason: format!("p[{from}][{to}] > 0 but Γ[{from}][{to}] = 0"),
                });
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, from: CellId, to: CellId) -> f64 {
        self.rows[from.slot()].get(&to).copied().unwrap_or(0.0)
    }

    pub fn row(&self, from: CellId) -> &BTreeMap<CellId, f64> {
        &self.rows[from.slot()]
    }

    pub fn rows(&self) -> &[BTreeMap<CellId, f64>] {
        &self.rows
    }
}

/// Admissible cell itineraries of length `order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTensor {
    pub order: usize,
    pub n_cells: usize,
    pub tuples: BTreeSet<Vec<CellId>>,
}

impl TransitionTensor {
    pub fn new(order: usize, n_cells: usize, tuples: BTreeSet<Vec<CellId>>) -> Result<Self> {
        let t = TransitionTensor { order, n_cells, tuples };
        t.validate()?;
        Ok(t)
    }

    /// The order-2 tensor of a transition matrix.
    pub fn from_matrix(gamma: &TransitionMatrix) -> Self {
        let tuples = gamma
            .cells()
            .flat_map(|m| gamma.successors(m).iter().map(move |n| vec![m, *n]))
            .collect();
        TransitionTensor {
            order: 2,
            n_cells: gamma.n_cells(),
            tuples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::invalid(format!("tensor order must be >= 2, got {}", self.order)));
        }
        if let Some(t) = self
            .tuples
            .iter()
            .find(|t| t.len() != self.order || t.iter().any(|c| c.get() > self.n_cells))
        {
            return Err(Error::InvalidArtifact {
                context: format!("order-{} tensor", self.order),
                reason: format!("malformed tuple {t:?}"),
            });
        }
        Ok(())
    }

    pub fn contains(&self, tuple: &[CellId]) -> bool {
        self.tuples.contains(tuple)
    }

    /// Admissible tuples starting with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a [CellId]) -> impl Iterator<Item = &'a Vec<CellId>> + 'a {
        self.tuples
            .range(prefix.to_vec()..)
            .take_while(move |t| t.starts_with(prefix))
    }

    /// True when every tuple's `(order-1)`-prefix is admissible in `lower`.
    pub fn is_prefix_closed_over(&self, lower: &TransitionTensor) -> bool {
        lower.order + 1 == self.order && self.tuples.iter().all(|t| lower.contains(&t[..lower.order]))
    }
}

/// Uniform sample of ball `cell` restricted to its partition cell.
pub fn sample_cell(
    partition: &Partition,
    cell: CellId,
    count: usize,
    seed: u64,
    attempts_per_sample: usize,
) -> Result<Vec<StateVector>> {
    cell.check(partition.n_cells())?;
    let ball = partition.cover().ball(cell);
    let d = ball.center.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell.get() as u64);
    let budget = count.saturating_mul(attempts_per_sample).max(attempts_per_sample);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < budget {
        attempts += 1;
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            continue;
        }
        let r = ball.radius * rng.random::<f64>().powf(1.0 / d as f64);
        let x: Vec<f64> = ball.center.iter().zip(&dir).map(|(c, u)| c + r * u / norm).collect();
        if partition.assign_cell(&x) == Some(cell) {
            out.push(x.into());
        }
    }
    if out.len() < count {
        return Err(Error::SamplingFailed {
            cell,
            accepted: out.len(),
            wanted: count,
            attempts,
        });
    }
    Ok(out)
}

/// `count` points, each drawn uniformly inside a uniformly chosen cell.
pub fn draw_in_cells(partition: &Partition, count: usize, seed: u64) -> Result<Vec<StateVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let cell = CellId::from_slot(rng.random_range(0..partition.n_cells()));
            let sub_seed = rng.random::<u64>();
            Ok(sample_cell(partition, cell, 1, sub_seed, DEFAULT_ATTEMPTS_PER_SAMPLE)?.remove(0))
        })
        .collect()
}

/// Cell itinerary of one sample: `steps` applications of `F^T`, stopping at
/// the first landing outside the partition.
fn itinerary(
    model: &FlowModel,
    partition: &Partition,
    start: CellId,
    x: &StateVector,
    horizon: f64,
    steps: usize,
    cfg: &IntegratorConfig,
) -> Result<(Vec<CellId>, bool)> {
    let mut word = vec![start];
    let mut y = x.clone();
    for _ in 0..steps {
        y = flow::advance(model, &y, horizon, cfg)?;
        match partition.assign_cell(&y) {
            Some(c) => word.push(c),
            None => return Ok((word, true)),
        }
    }
    Ok((word, false))
}

fn sampled_itineraries(
    model: &FlowModel,
    partition: &Partition,
    horizon: f64,
    steps: usize,
    samples_per_cell: usize,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<Vec<Vec<(Vec<CellId>, bool)>>> {
    if samples_per_cell == 0 {
        return Err(Error::invalid("samples_per_cell must be >= 1"));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be >= 0, got {horizon}")));
    }
    par::map_range(partition.n_cells(), |slot| {
        let cell = CellId::from_slot(slot);
        let points = sample_cell(partition, cell, samples_per_cell, seed, DEFAULT_ATTEMPTS_PER_SAMPLE)?;
        points
            .iter()
            .map(|x| itinerary(model, partition, cell, x, horizon, steps, cfg))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::CellIntegration {
                cell,
                source: Box::new(e),
            })
    })
    .into_iter()
    .collect()
}

/// Sampled `Γ` and `p` for the time-`horizon` map.
pub fn estimate_transitions(
    model: &FlowModel,
    partition: &Partition,
    horizon: f64,
    samples_per_cell: usize,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<(TransitionMatrix, MarkovMatrix)> {
    let runs = sampled_itineraries(model, partition, horizon, 1, samples_per_cell, cfg, seed)?;
    let mut counts = Vec::with_capacity(runs.len());
    let mut escaped = Vec::with_capacity(runs.len());
    for cell_runs in runs {
        let mut row = BTreeMap::new();
        let mut lost = 0;
        for (word, _) in cell_runs {
            match word.get(1) {
                Some(to) => *row.entry(*to).or_insert(0) += 1,
                None => lost += 1,
            }
        }
        counts.push(row);
        escaped.push(lost);
    }
    let gamma = TransitionMatrix::from_counts(counts, escaped)?;
    let p = MarkovMatrix::from_transitions(&gamma);
    Ok((gamma, p))
}

/// Tensors of every order `2..=max_order` from one shared set of itineraries,
/// so lower orders are exact prefixes of higher ones.
pub fn estimate_tensors(
    model: &FlowModel,
    partition: &Partition,
    horizon: f64,
    max_order: usize,
    samples_per_cell: usize,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<Vec<TransitionTensor>> {
    if max_order < 2 {
        return Err(Error::invalid(format!("tensor order must be >= 2, got {max_order}")));
    }
    let runs = sampled_itineraries(model, partition, horizon, max_order - 1, samples_per_cell, cfg, seed)?;
    let n = partition.n_cells();
    let mut tensors: Vec<TransitionTensor> = (2..=max_order)
        .map(|order| TransitionTensor {
            order,
            n_cells: n,
            tuples: BTreeSet::new(),
        })
        .collect();
    for (word, _) in runs.iter().flatten() {
        for t in tensors.iter_mut() {
            if word.len() >= t.order {
                t.tuples.insert(word[..t.order].to_vec());
            }
        }
    }
    Ok(tensors)
}

/// The order-`k` tensor alone.
pub fn estimate_tensor(
    model: &FlowModel,
    partition: &Partition,
    horizon: f64,
    order: usize,
    samples_per_cell: usize,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<TransitionTensor> {
    let mut all = estimate_tensors(model, partition, horizon, order, samples_per_cell, cfg, seed)?;
    Ok(all.pop().expect("order >= 2 yields at least one tensor"))
}

/// Every supported row of `Γ` has at least two admissible successors.
pub fn row_sensitivity(gamma: &TransitionMatrix) -> bool {
    gamma.cells().all(|m| gamma.successors(m).len() != 1)
}

/// Two admissible one-symbol extensions of `prefix` that differ in their
/// last symbol, if the prefix is admissible and its last row branches.
pub fn sensitivity_witness(gamma: &TransitionMatrix, prefix: &[CellId]) -> Option<(Vec<CellId>, Vec<CellId>)> {
    let last = *prefix.last()?;
    if prefix.iter().any(|c| c.get() > gamma.n_cells()) || prefix.windows(2).any(|w| !gamma.is_admissible(w[0], w[1])) {
        return None;
    }
    let mut succ = gamma.successors(last).iter();
    let (a, b) = (*succ.next()?, *succ.next()?);
    let mut wa = prefix.to_vec();
    wa.push(a);
    let mut wb = prefix.to_vec();
    wb.push(b);
    Some((wa, wb))
}

/// Finite-depth verdict on the branching of transition tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionVerdict {
    pub expanding_up_to_depth: bool,
    pub max_order: usize,
    pub m_max: usize,
    /// Tuples with no branching continuation within the full `m_max` window.
    pub witness_failures: Vec<Vec<CellId>>,
    /// Tuples whose search window was cut short by `max_order` without finding a branch.
    pub undetermined: usize,
    pub checked: usize,
}

/// For every admissible tuple of order `j < K` (order 1 meaning the symbols
/// that start an order-2 tuple), looks for `m <= min(m_max, K - j)` such that
/// the admissible order-`(j + m)` extensions end in at least two distinct
/// symbols. A tuple fails only when the whole `m_max` window was available
/// and no branch was found; tuples truncated by `K` are counted as
/// undetermined.
pub fn expanding_to_depth(tensors: &[TransitionTensor], m_max: usize) -> Result<ExpansionVerdict> {
    if m_max == 0 {
        return Err(Error::invalid("m_max must be >= 1"));
    }
    if tensors.is_empty() {
        return Err(Error::MissingTensorOrder(2));
    }
    for (i, t) in tensors.iter().enumerate() {
        if t.order != i + 2 {
            return Err(Error::MissingTensorOrder(i + 2));
        }
    }
    let k = tensors.len() + 1;
    let by_order = |order: usize| &tensors[order - 2];

    let order_one: BTreeSet<Vec<CellId>> = by_order(2).tuples.iter().map(|t| vec![t[0]]).collect();
    let mut failures = Vec::new();
    let mut undetermined = 0;
    let mut checked = 0;
    for j in 1..k {
        let tuples = if j == 1 { &order_one } else { &by_order(j).tuples };
        for t in tuples {
            checked += 1;
            let limit = m_max.min(k - j);
            let branches = (1..=limit).any(|m| {
                let mut last: Option<CellId> = None;
                by_order(j + m).with_prefix(t).any(|ext| {
                    let sym = ext[ext.len() - 1];
                    match last {
                        Some(prev) if prev != sym => true,
                        _ => {
                            last = Some(sym);
                            false
                        }
                    }
                })
            });
            if !branches {
                if limit < m_max {
                    undetermined += 1;
                } else {
                    failures.push(t.clone());
                }
            }
        }
    }
    Ok(ExpansionVerdict {
        expanding_up_to_depth: failures.is_empty(),
        max_order: k,
        m_max,
        witness_failures: failures,
        undetermined,
        checked,
    })
}

/// Successor set predicted by the nearest-centre ball rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRule {
    pub cell: CellId,
    /// Distance from `s_n(0)` to the nearest other segment start.
    pub r_n: f64,
    /// Segment start closest to `s_n(T)`.
    pub n_star: CellId,
    pub rho: f64,
    pub radius: f64,
    pub successors: BTreeSet<CellId>,
}

/// Every `m` whose start `s_m(0)` lies within `ρ_n r_n` of `s_{n*}(0)`.
pub fn ball_admissibility(lib: &SegmentLibrary, rho: &[f64], n: CellId) -> Result<BallRule> {
    let count = lib.n_cells();
    n.check(count)?;
    if count < 2 {
        return Err(Error::SingleSegment);
    }
    if rho.len() != count {
        return Err(Error::invalid(format!(
            "need {count} gradient norms, got {}",
            rho.len()
        )));
    }
    let start = lib.start(n);
    let r_n = lib
        .segments
        .iter()
        .filter(|s| s.cell != n)
        .map(|s| start.distance(s.samples.first()))
        .fold(f64::INFINITY, f64::min);
    let end = lib.end(n);
    let mut n_star = CellId::from_slot(0);
    let mut best = f64::INFINITY;
    for s in &lib.segments {
        let d = end.distance(s.samples.first());
        if d < best {
            best = d;
            n_star = s.cell;
        }
    }
    let radius = rho[n.slot()] * r_n;
    let anchor = lib.start(n_star);
    let successors = lib
        .segments
        .iter()
        .filter(|s| s.samples.first().distance(anchor) <= radius)
        .map(|s| s.cell)
        .collect();
    Ok(BallRule {
        cell: n,
        r_n,
        n_star,
        rho: rho[n.slot()],
        radius,
        successors,
    })
}

/// `ρ_n = ‖DF^T(s_n(T))‖` for every segment.
pub fn gradient_norms(
    model: &FlowModel,
    lib: &SegmentLibrary,
    cfg: &IntegratorConfig,
    fd_step: f64,
) -> Result<Vec<f64>> {
    par::map(&lib.segments, |s| {
        flow::jacobian_norm(model, s.samples.last(), lib.horizon, cfg, fd_step).map_err(|e| Error::CellIntegration {
            cell: s.cell,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect()
}
