//! Scalar observables on segments and their bounds along admissible words.
//!
//! `q_lo` is the minimum of the per-cell infima over the reachable set, so
//! that `q_lo ≤ Q ≤ q_hi` holds for every pseudo-orbit built from it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cover::CellId;
use crate::error::{Error, Result};
use crate::par;
use crate::segments::SegmentLibrary;
use crate::symbolic::{reachable_set, Admissibility};
use crate::transitions::TransitionMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum QuantitySpec {
    /// `½‖x‖²`
    Energy,
    /// `‖x‖`
    Norm,
    /// `x_i`, zero-based.
    Coordinate { index: usize },
    /// `x·W·x` with symmetric `W`.
    WeightedQuadratic { weights: Vec<Vec<f64>> },
}

impl QuantitySpec {
    pub fn name(&self) -> String {
        match self {
            QuantitySpec::Energy => "energy".into(),
            QuantitySpec::Norm => "norm".into(),
            QuantitySpec::Coordinate { index } => format!("x{index}"),
            QuantitySpec::WeightedQuadratic { .. } => "weighted_quadratic".into(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            QuantitySpec::Coordinate { index } if *index >= dim => Err(Error::invalid(format!(
                "coordinate index {index} out of range for dimension {dim}"
            ))),
            QuantitySpec::WeightedQuadratic { weights } => {
                if weights.len() != dim || weights.iter().any(|r| r.len() != dim) {
                    return Err(Error::invalid(format!("weight matrix must be {dim}x{dim}")));
                }
                for i in 0..dim {
                    for j in 0..i {
                        let (a, b) = (weights[i][j], weights[j][i]);
                        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                            return Err(Error::invalid(format!("weight matrix is not symmetric at ({i}, {j})")));
                        }
                    }
                }
                if weights.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("weight matrix has non-finite entries"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            QuantitySpec::Energy => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            QuantitySpec::Norm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            QuantitySpec::Coordinate { index } => x[*index],
            QuantitySpec::WeightedQuadratic { weights } => weights
                .iter()
                .zip(x)
                .map(|(row, xi)| xi * row.iter().zip(x).map(|(w, xj)| w * xj).sum::<f64>())
                .sum(),
        }
    }

    /// Bound on `|Q(x) − Q(y)|` for `‖y‖ ≤ radius` and `‖x − y‖ ≤ epsilon`.
    pub fn lipschitz_slack(&self, radius: f64, epsilon: f64) -> f64 {
        match self {
            QuantitySpec::Energy => (radius + 0.5 * epsilon) * epsilon,
            QuantitySpec::Norm | QuantitySpec::Coordinate { .. } => epsilon,
            QuantitySpec::WeightedQuadratic { weights } => {
                let frobenius = weights.iter().flatten().map(|w| w * w).sum::<f64>().sqrt();
                frobenius * epsilon * (2.0 * radius + epsilon)
            }
        }
    }
}

/// Largest state norm over every stored segment sample.
pub fn library_radius(lib: &SegmentLibrary) -> f64 {
    lib.segments
        .iter()
        .flat_map(|s| &s.samples.states)
        .map(|x| x.norm())
        .fold(0.0, f64::max)
}

/// Per-cell `sup`/`inf` of `Q` over the segment sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantityEnvelope {
    pub quantity: QuantitySpec,
    pub sup_per_cell: Vec<f64>,
    pub inf_per_cell: Vec<f64>,
}

impl QuantityEnvelope {
    pub fn new(quantity: QuantitySpec, inf_per_cell: Vec<f64>, sup_per_cell: Vec<f64>) -> Result<Self> {
        if inf_per_cell.len() != sup_per_cell.len() || inf_per_cell.is_empty() {
            return Err(Error::invalid(
                "envelope needs equally long, non-empty inf and sup tables",
            ));
        }
        if let Some(i) = (0..inf_per_cell.len()).find(|i| !(inf_per_cell[*i] <= sup_per_cell[*i])) {
            return Err(Error::invalid(format!("envelope of cell {} has inf > sup", i + 1)));
        }
        Ok(QuantityEnvelope {
            quantity,
            sup_per_cell,
            inf_per_cell,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.sup_per_cell.len()
    }

    pub fn sup(&self, cell: CellId) -> f64 {
        self.sup_per_cell[cell.slot()]
    }

    pub fn inf(&self, cell: CellId) -> f64 {
        self.inf_per_cell[cell.slot()]
    }
}

pub fn segment_envelope(lib: &SegmentLibrary, q: &QuantitySpec) -> Result<QuantityEnvelope> {
    q.validate(lib.dim())?;
    let (inf, sup): (Vec<f64>, Vec<f64>) = par::map(&lib.segments, |s| {
        s.samples
            .states
            .iter()
            .map(|x| q.evaluate(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    })
    .into_iter()
    .unzip();
    QuantityEnvelope::new(q.clone(), inf, sup)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachableBounds {
    pub start: CellId,
    /// Word length; `None` for the fixpoint of propagation.
    pub length: Option<usize>,
    pub q_lo: f64,
    pub q_hi: f64,
    pub reachable: BTreeSet<CellId>,
}

fn bounds_over(
    env: &QuantityEnvelope,
    start: CellId,
    length: Option<usize>,
    reachable: BTreeSet<CellId>,
) -> ReachableBounds {
    let q_lo = reachable.iter().map(|c| env.inf(*c)).fold(f64::INFINITY, f64::min);
    let q_hi = reachable.iter().map(|c| env.sup(*c)).fold(f64::NEG_INFINITY, f64::max);
    ReachableBounds {
        start,
        length,
        q_lo,
        q_hi,
        reachable,
    }
}

fn check_sizes(env: &QuantityEnvelope, gamma: &TransitionMatrix) -> Result<()> {
    if env.n_cells() != gamma.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: gamma.n_cells(),
            found: env.n_cells(),
        });
    }
    Ok(())
}

/// Bounds of `Q` over `[0, mT]` for orbits starting in `n0`.
pub fn reachable_bounds(
    env: &QuantityEnvelope,
    gamma: &TransitionMatrix,
    n0: CellId,
    m: usize,
) -> Result<ReachableBounds> {
    check_sizes(env, gamma)?;
    let reach = reachable_set(Admissibility::Markov(gamma), n0, Some(m))?;
    Ok(bounds_over(env, n0, Some(m), reach))
}

/// Bounds over everything `Γ`-reachable from `n0`.
pub fn fixpoint_bounds(env: &QuantityEnvelope, gamma: &TransitionMatrix, n0: CellId) -> Result<ReachableBounds> {
    check_sizes(env, gamma)?;
    let reach = reachable_set(Admissibility::Markov(gamma), n0, None)?;
    Ok(bounds_over(env, n0, None, reach))
}
