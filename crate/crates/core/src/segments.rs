//! The segment library: one finite-time orbit piece per cover centre.

use serde::{Deserialize, Serialize};

use crate::cover::{CellId, Cover};
use crate::error::{Error, Result};
use crate::flow::{self, euclidean, FlowModel, IntegratorConfig, StateVector, TrajectorySample};
use crate::par;

/// `s_n = {F^t(x_n) : t ∈ [0, T]}` sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub cell: CellId,
    pub samples: TrajectorySample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentLibrary {
    pub segments: Vec<Segment>,
    pub horizon: f64,
    pub n_t: usize,
    pub epsilon: f64,
    pub model: FlowModel,
    pub integrator: IntegratorConfig,
}

impl SegmentLibrary {
    pub fn n_cells(&self) -> usize {
        self.segments.len()
    }

    pub fn dim(&self) -> usize {
        self.model.dimension()
    }

    pub fn segment(&self, cell: CellId) -> &Segment {
        &self.segments[cell.slot()]
    }

    /// Shared time grid `t_0 = 0 .. t_{n_t-1} = T`.
    pub fn times(&self) -> &[f64] {
        &self.segments[0].samples.times
    }

    pub fn start(&self, cell: CellId) -> &StateVector {
        self.segment(cell).samples.first()
    }

    pub fn end(&self, cell: CellId) -> &StateVector {
        self.segment(cell).samples.last()
    }

    /// Checks the structural invariants: one segment per index, shared grid.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidArtifact {
            context: "segment library".into(),
            reason,
        };
        if self.segments.is_empty() {
            return Err(bad("no segments".into()));
        }
        let grid = self.times();
        for (i, s) in self.segments.iter().enumerate() {
            if s.cell.slot() != i {
                return Err(bad(format!("segment {} carries cell {}", i + 1, s.cell)));
            }
            if s.samples.times != grid || s.samples.states.len() != self.n_t {
                return Err(bad(format!("segment {} is off the shared time grid", s.cell)));
            }
            if s.samples.states.iter().any(|x| x.dim() != self.dim()) {
                return Err(bad(format!("segment {} has wrong state dimension", s.cell)));
            }
        }
        if (grid[grid.len() - 1] - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(bad("time grid does not end at the horizon".into()));
        }
        Ok(())
    }
}

/// Integrates every cover centre over `[0, horizon]` with `n_t` samples.
pub fn build_segments(
    model: &FlowModel,
    cover: &Cover,
    horizon: f64,
    n_t: usize,
    epsilon: f64,
    cfg: &IntegratorConfig,
) -> Result<SegmentLibrary> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
    }
    if n_t < 2 {
        return Err(Error::invalid("n_t must be >= 2"));
    }
    let segments = par::map(cover.balls(), |b| {
        flow::sample_trajectory(model, &b.center, horizon, n_t, cfg)
            .map(|samples| Segment { cell: b.index, samples })
            .map_err(|e| Error::CellIntegration {
                cell: b.index,
                source: Box::new(e),
            })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SegmentLibrary {
        segments,
        horizon,
        n_t,
        epsilon,
        model: model.clone(),
        integrator: *cfg,
    })
}

/// `M_d(t_k) = max_{m,n} |s_m(t_k) - s_n(t_k)|` on the library grid.
pub fn max_difference(lib: &SegmentLibrary) -> Vec<f64> {
    par::map_range(lib.n_t, |k| {
        let mut worst = 0.0f64;
        for (a, sa) in lib.segments.iter().enumerate() {
            let pa = &sa.samples.states[k];
            for sb in &lib.segments[a + 1..] {
                worst = worst.max(euclidean(pa, &sb.samples.states[k]));
            }
        }
        worst
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::QuadraticField;
    use proptest::prelude::*;

    fn cover_1d(centers: &[f64]) -> Cover {
        Cover::from_centers(
            centers.iter().map(|c| vec![*c].into()).collect(),
            &vec![0.1; centers.len()],
        )
        .unwrap()
    }

    #[test]
    fn single_decay_segment() {
        let m = FlowModel::linear_diagonal(vec![1.0]);
        let lib = build_segments(&m, &cover_1d(&[1.0]), 1.0, 3, 0.1, &IntegratorConfig::default()).unwrap();
        let got: Vec<f64> = lib.segments[0].samples.states.iter().map(|s| s[0]).collect();
        let want = [1.0, (-0.5f64).exp(), (-1.0f64).exp()];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-8);
        }
        lib.validate().unwrap();
        assert_eq!(max_difference(&lib), vec![0.0; 3]);
    }

    #[test]
    fn endpoints_only() {
        let m = FlowModel::lorenz();
        let cfg = IntegratorConfig::default();
        let cover = Cover::from_centers(vec![vec![1.0, 2.0, 3.0].into(), StateVector::zeros(3)], &[0.5, 0.5]).unwrap();
        let lib = build_segments(&m, &cover, 0.2, 2, 1.0, &cfg).unwrap();
        let s = &lib.segments[0].samples;
        assert_eq!(s.states.len(), 2);
        assert_eq!(
            s.states[1],
            flow::advance(&m, &cover.balls()[0].center, 0.2, &cfg).unwrap()
        );
        // the origin is an equilibrium
        assert!(lib.segments[1]
            .samples
            .states
            .iter()
            .all(|x| x.coords() == [0.0, 0.0, 0.0]));
    }

    #[test]
    fn max_difference_of_decaying_pair() {
        let m = FlowModel::linear_diagonal(vec![1.0]);
        let lib = build_segments(&m, &cover_1d(&[0.0, 1.0]), 2.0, 41, 0.1, &IntegratorConfig::default()).unwrap();
        for (t, md) in lib.times().iter().zip(max_difference(&lib)) {
            assert!((md - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn frozen_flow_has_constant_profile() {
        let m = FlowModel::QuadraticGeneric(QuadraticField::zero(2));
        let cover = Cover::from_centers(vec![vec![0.0, 0.0].into(), vec![3.0, 4.0].into()], &[1.0, 1.0]).unwrap();
        let md = max_difference(&build_segments(&m, &cover, 1.0, 5, 1.0, &IntegratorConfig::default()).unwrap());
        assert_eq!(md, vec![5.0; 5]);
    }

    #[test]
    fn rejects_bad_grid() {
        let m = FlowModel::linear_diagonal(vec![1.0]);
        assert!(build_segments(&m, &cover_1d(&[0.0]), 1.0, 1, 0.1, &IntegratorConfig::default()).is_err());
        assert!(build_segments(&m, &cover_1d(&[0.0]), 0.0, 3, 0.1, &IntegratorConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn max_difference_is_permutation_invariant_and_monotone_when_contracting(
            centers in prop::collection::vec(-3.0f64..3.0, 2..8),
            shift in 0usize..8,
        ) {
            let m = FlowModel::linear_diagonal(vec![0.7]);
            let cfg = IntegratorConfig::rk4(1e-2);
            let lib = build_segments(&m, &cover_1d(&centers), 1.0, 11, 0.1, &cfg).unwrap();
            let mut rotated = centers.clone();
            rotated.rotate_left(shift % centers.len());
            let lib2 = build_segments(&m, &cover_1d(&rotated), 1.0, 11, 0.1, &cfg).unwrap();
            let a = max_difference(&lib);
            prop_assert_eq!(&a, &max_difference(&lib2));
            for w in a.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
