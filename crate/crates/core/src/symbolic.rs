//! Orbit words, pseudo-orbits built from stored segments, admissible-word
//! enumeration, cylinder measures and entropies.
//!
//! An orbit is encoded by applying the time-`T` map repeatedly with the
//! same fixed-step integrator; because the step sequence restarts exactly
//! at each window boundary, the chain is identical to one continuous
//! integration and shifting a word matches encoding the shifted point bit
//! for bit.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::cover::{CellId, Partition};
use crate::error::{Error, Result};
use crate::flow::{self, FlowModel, IntegratorConfig, StateVector};
use crate::par;
use crate::segments::SegmentLibrary;
use crate::transitions::{MarkovMatrix, TransitionMatrix, TransitionTensor};

/// Finite cell itinerary `n_0 n_1 … n_{m-1}` with step `horizon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub word: Vec<CellId>,
    pub horizon: f64,
    /// False if the orbit left the partition before the requested length.
    pub complete: bool,
}

impl SymbolSequence {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// Drops the first symbol.
    pub fn shifted(&self) -> SymbolSequence {
        SymbolSequence {
            word: self.word[1..].to_vec(),
            horizon: self.horizon,
            complete: self.complete,
        }
    }
}

/// Window starts `F^{jT}(x0)` for `j = 0..m`.
fn window_starts(
    model: &FlowModel,
    x0: &StateVector,
    m: usize,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<StateVector>> {
    let mut out = Vec::with_capacity(m);
    out.push(x0.clone());
    for _ in 1..m {
        let next = flow::advance(model, out.last().unwrap(), horizon, cfg)?;
        out.push(next);
    }
    Ok(out)
}

/// Word of length `m` for the orbit of `x0`, truncated (with `complete =
/// false`) at the first window start outside every cell.
pub fn encode_orbit(
    model: &FlowModel,
    partition: &Partition,
    x0: &StateVector,
    m: usize,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<SymbolSequence> {
    if m == 0 {
        return Err(Error::invalid("word length m must be >= 1"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
    }
    let first = partition
        .assign_cell(x0)
        .ok_or_else(|| Error::StartOutsidePartition { point: x0.to_vec() })?;
    let mut word = vec![first];
    let mut y = x0.clone();
    while word.len() < m {
        y = flow::advance(model, &y, horizon, cfg)?;
        match partition.assign_cell(&y) {
            Some(c) => word.push(c),
            None => {
                return Ok(SymbolSequence {
                    word,
                    horizon,
                    complete: false,
                })
            }
        }
    }
    Ok(SymbolSequence {
        word,
        horizon,
        complete: true,
    })
}

/// `encode_orbit` over many starting points, in input order.
pub fn encode_batch(
    model: &FlowModel,
    partition: &Partition,
    starts: &[StateVector],
    m: usize,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Vec<Result<SymbolSequence>> {
    par::map(starts, |x| encode_orbit(model, partition, x, m, horizon, cfg))
}

/// Stored segments laid end to end; window `j` covers `[jT, (j+1)T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    pub word: SymbolSequence,
    /// Segment grid `t_0 = 0 .. t_{n_t-1} = T` shared by every window.
    pub local_times: Vec<f64>,
    pub windows: Vec<Vec<StateVector>>,
}

impl PseudoOrbit {
    /// `(window, global time, state)` for every stored sample; junction
    /// times appear twice, once per adjacent window.
    pub fn samples(&self) -> impl Iterator<Item = (usize, f64, &StateVector)> {
        let horizon = self.word.horizon;
        self.windows.iter().enumerate().flat_map(move |(j, w)| {
            self.local_times
                .iter()
                .zip(w)
                .map(move |(t, x)| (j, j as f64 * horizon + t, x))
        })
    }

    /// `‖s_{n_j}(T) − s_{n_{j+1}}(0)‖` at each junction.
    pub fn junction_gaps(&self) -> Vec<f64> {
        self.windows
            .windows(2)
            .map(|w| w[0].last().unwrap().distance(&w[1][0]))
            .collect()
    }
}

pub fn reconstruct_pseudo_orbit(lib: &SegmentLibrary, word: &SymbolSequence) -> Result<PseudoOrbit> {
    if word.is_empty() {
        return Err(Error::invalid("cannot reconstruct an empty word"));
    }
    for c in &word.word {
        c.check(lib.n_cells())?;
    }
    Ok(PseudoOrbit {
        word: word.clone(),
        local_times: lib.times().to_vec(),
        windows: word
            .word
            .iter()
            .map(|c| lib.segment(*c).samples.states.clone())
            .collect(),
    })
}

/// Per-window maxima of `‖F^t(x0) − η(t)‖` over the sample grid.
pub fn shadowing_profile(
    model: &FlowModel,
    x0: &StateVector,
    pseudo: &PseudoOrbit,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let horizon = pseudo.word.horizon;
    let n_t = pseudo.local_times.len();
    let starts = window_starts(model, x0, pseudo.windows.len(), horizon, cfg)?;
    starts
        .iter()
        .zip(&pseudo.windows)
        .map(|(y, seg)| {
            let truth = flow::sample_trajectory(model, y, horizon, n_t, cfg)?;
            Ok(truth
                .states
                .iter()
                .zip(seg)
                .map(|(a, b)| a.distance(b))
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Largest distance between the true orbit of `x0` and the pseudo-orbit.
/// Both one-sided values at every junction are compared, since each window
/// includes its own endpoints.
pub fn shadowing_error(
    model: &FlowModel,
    x0: &StateVector,
    pseudo: &PseudoOrbit,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    Ok(shadowing_profile(model, x0, pseudo, cfg)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// True orbit of `x0` sampled on the pseudo-orbit's window grid.
pub fn true_orbit_windows(
    model: &FlowModel,
    x0: &StateVector,
    windows: usize,
    horizon: f64,
    n_t: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<StateVector>>> {
    window_starts(model, x0, windows, horizon, cfg)?
        .iter()
        .map(|y| Ok(flow::sample_trajectory(model, y, horizon, n_t, cfg)?.states))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitShadow {
    pub x0: StateVector,
    pub word: SymbolSequence,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub epsilon: f64,
    /// Over complete encodings only.
    pub max_error: f64,
    pub complete_orbits: usize,
    /// Over every encoded prefix, complete or not.
    pub max_error_any: f64,
    pub per_orbit: Vec<OrbitShadow>,
}

/// Encodes, reconstructs and measures every start point. Points outside the
/// partition are skipped; `max_error` covers complete encodings only.
pub fn shadow_batch(
    lib: &SegmentLibrary,
    partition: &Partition,
    starts: &[StateVector],
    m: usize,
) -> Result<ShadowReport> {
    let per = par::map(starts, |x0| -> Result<Option<OrbitShadow>> {
        let word = match encode_orbit(&lib.model, partition, x0, m, lib.horizon, &lib.integrator) {
            Ok(w) => w,
            Err(Error::StartOutsidePartition { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let pseudo = reconstruct_pseudo_orbit(lib, &word)?;
        let max_error = shadowing_error(&lib.model, x0, &pseudo, &lib.integrator)?;
        Ok(Some(OrbitShadow {
            x0: x0.clone(),
            word,
            max_error,
        }))
    });
    let per_orbit: Vec<OrbitShadow> = per
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let max_error = per_orbit
        .iter()
        .filter(|o| o.word.complete)
        .map(|o| o.max_error)
        .fold(0.0, f64::max);
    Ok(ShadowReport {
        epsilon: lib.epsilon,
        max_error,
        complete_orbits: per_orbit.iter().filter(|o| o.word.complete).count(),
        max_error_any: per_orbit.iter().map(|o| o.max_error).fold(0.0, f64::max),
        per_orbit,
    })
}

/// Admissibility rule for words: pairs under `Γ`, or windows under an
/// order-`k` tensor (shorter prefixes must start some admissible tuple).
#[derive(Clone, Copy, Debug)]
pub enum Admissibility<'a> {
    Markov(&'a TransitionMatrix),
    Tensor(&'a TransitionTensor),
}

impl Admissibility<'_> {
    pub fn n_cells(&self) -> usize {
        match self {
            Admissibility::Markov(g) => g.n_cells(),
            Admissibility::Tensor(t) => t.n_cells,
        }
    }

    /// Symbols that may follow `word` (non-empty, itself admissible).
    fn continuations(&self, word: &[CellId]) -> Vec<CellId> {
        match self {
            Admissibility::Markov(g) => g.successors(*word.last().unwrap()).iter().copied().collect(),
            Admissibility::Tensor(t) => {
                let ctx = if word.len() >= t.order {
                    &word[word.len() + 1 - t.order..]
                } else {
                    word
                };
                let mut next: Vec<CellId> = t.with_prefix(ctx).map(|tuple| tuple[ctx.len()]).collect();
                next.dedup();
                next
            }
        }
    }

    /// Memory carried between steps: the whole word under `Γ` reduces to
    /// its last symbol, under a tensor to its last `k − 1` symbols.
    fn context(&self, word: &[CellId]) -> Vec<CellId> {
        let keep = match self {
            Admissibility::Markov(_) => 1,
            Admissibility::Tensor(t) => t.order - 1,
        };
        word[word.len().saturating_sub(keep)..].to_vec()
    }

    pub fn is_admissible(&self, word: &[CellId]) -> bool {
        if word.is_empty() || word.iter().any(|c| c.get() > self.n_cells()) {
            return false;
        }
        (1..word.len()).all(|i| self.continuations(&word[..i]).contains(&word[i]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub start: CellId,
    pub length: usize,
    pub words: Vec<Vec<CellId>>,
    /// Set when more than `cap` words exist; `words` then holds the first `cap`.
    pub overflow: bool,
    /// Symbols on any admissible word of length at most `length` from `start`.
    pub reachable: BTreeSet<CellId>,
}

/// Depth-first enumeration of admissible words of length `m` from `n0`, in
/// lexicographic order, plus the exact reachable symbol set.
pub fn enumerate_admissible(rule: Admissibility<'_>, n0: CellId, m: usize, cap: usize) -> Result<Enumeration> {
    n0.check(rule.n_cells())?;
    if m == 0 {
        return Err(Error::invalid("word length m must be >= 1"));
    }
    let mut words = Vec::new();
    let mut overflow = false;
    let mut stack = vec![vec![n0]];
    while let Some(w) = stack.pop() {
        if w.len() == m {
            if words.len() == cap {
                overflow = true;
                break;
            }
            words.push(w);
            continue;
        }
        for c in rule.continuations(&w).into_iter().rev() {
            let mut e = w.clone();
            e.push(c);
            stack.push(e);
        }
    }
    Ok(Enumeration {
        start: n0,
        length: m,
        words,
        overflow,
        reachable: reachable_set(rule, n0, Some(m))?,
    })
}

/// Symbols on admissible words from `n0` of length at most `m`, by
/// breadth-first propagation of contexts; `None` runs to the fixpoint.
///
/// Branches that die out before length `m` still contribute, which keeps
/// the set monotone in `m`.
pub fn reachable_set(rule: Admissibility<'_>, n0: CellId, m: Option<usize>) -> Result<BTreeSet<CellId>> {
    n0.check(rule.n_cells())?;
    if m == Some(0) {
        return Err(Error::invalid("word length m must be >= 1"));
    }
    let mut seen: HashSet<Vec<CellId>> = HashSet::new();
    let mut reach = BTreeSet::from([n0]);
    let mut frontier = vec![vec![n0]];
    seen.insert(vec![n0]);
    let mut depth = 1;
    while !frontier.is_empty() && m.is_none_or(|m| depth < m) {
        let mut next = Vec::new();
        for ctx in &frontier {
            for c in rule.continuations(ctx) {
                reach.insert(c);
                let mut w = ctx.clone();
                w.push(c);
                let key = rule.context(&w);
                if seen.insert(key.clone()) {
                    next.push(key);
                }
            }
        }
        frontier = next;
        depth += 1;
    }
    Ok(reach)
}

/// `μ(W) = p[n_0][n_1] ⋯ p[n_{j-2}][n_{j-1}]`; 1 for a single symbol.
pub fn cylinder_measure(p: &MarkovMatrix, prefix: &[CellId]) -> Result<f64> {
    if prefix.is_empty() {
        return Err(Error::invalid("cylinder prefix must be non-empty"));
    }
    for c in prefix {
        c.check(p.n_cells())?;
    }
    Ok(prefix.windows(2).map(|w| p.get(w[0], w[1])).product())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// `−Σ_m Σ_n p_mn log p_mn`, every row weighted equally.
    pub unweighted_sum: f64,
    /// `−Σ_m π_m Σ_n p_mn log p_mn` with `π` stationary.
    pub stationary_weighted: f64,
    pub stationary: Vec<f64>,
}

fn row_entropy(row: impl Iterator<Item = f64>) -> f64 {
    0.0 - row.filter(|v| *v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Stationary row vector by power iteration on the lazy chain `(P + I)/2`,
/// renormalised each sweep so mass lost through unsupported rows does not
/// drain the vector.
pub fn stationary_distribution(p: &MarkovMatrix) -> Vec<f64> {
    let n = p.n_cells();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next: Vec<f64> = pi.iter().map(|v| 0.5 * v).collect();
        for (m, row) in p.rows().iter().enumerate() {
            for (to, v) in row {
                next[to.slot()] += 0.5 * pi[m] * v;
            }
        }
        let total: f64 = next.iter().sum();
        if total <= 0.0 {
            return vec![0.0; n];
        }
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    pi
}

pub fn ks_entropy(p: &MarkovMatrix) -> EntropyReport {
    let per_row: Vec<f64> = p.rows().iter().map(|r| row_entropy(r.values().copied())).collect();
    let stationary = stationary_distribution(p);
    EntropyReport {
        unweighted_sum: per_row.iter().sum(),
        stationary_weighted: per_row.iter().zip(&stationary).map(|(h, w)| h * w).sum(),
        stationary,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commutation {
    /// Shifted word of `x0` equals the word of `F^T(x0)`, with matching completeness.
    pub holds: bool,
    /// Both encodings reached their full length.
    pub complete: bool,
}

/// Compares the left shift of the length-`m` word of `x0` with the
/// length-`(m−1)` word of `F^T(x0)`.
pub fn commutation_check(
    model: &FlowModel,
    partition: &Partition,
    x0: &StateVector,
    m: usize,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Commutation> {
    if m < 2 {
        return Err(Error::invalid("commutation check needs m >= 2"));
    }
    let word = encode_orbit(model, partition, x0, m, horizon, cfg)?;
    let image = flow::advance(model, x0, horizon, cfg)?;
    let shifted_word = encode_orbit(model, partition, &image, m - 1, horizon, cfg)?;
    if word.len() < 2 {
        // x0's orbit left the partition after one step, so F^T(x0) cannot be encoded.
        return Err(Error::StartOutsidePartition {
            point: image.into_inner(),
        });
    }
    Ok(Commutation {
        holds: word.shifted() == shifted_word,
        complete: word.complete && shifted_word.complete,
    })
}
