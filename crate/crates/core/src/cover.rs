//! Ball covers of the absorbing set and the partition they induce.
//!
//! A cover is an ordered list of balls `B_n = B(x_n, δ_n)`, `n = 1..N`. The
//! partition cell of index `n` is `B_n` minus every later ball, so a point
//! belongs to the cell of the *largest* index whose ball contains it.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, squared_distance, FlowModel, IntegratorConfig, StateVector};
use crate::par;

/// 1-based index of a cover ball / partition cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct CellId(usize);

impl CellId {
    /// # Panics
    /// If `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "cell ids start at 1");
        CellId(n)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based position in per-cell tables.
    pub fn slot(self) -> usize {
        self.0 - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        CellId(slot + 1)
    }

    pub(crate) fn check(self, n_cells: usize) -> Result<Self> {
        if self.0 > n_cells {
            return Err(Error::CellOutOfRange { cell: self.0, n_cells });
        }
        Ok(self)
    }
}

impl TryFrom<usize> for CellId {
    type Error = String;

    fn try_from(n: usize) -> std::result::Result<Self, String> {
        if n == 0 {
            Err("cell ids start at 1".into())
        } else {
            Ok(CellId(n))
        }
    }
}

impl From<CellId> for usize {
    fn from(c: CellId) -> usize {
        c.0
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned box standing in for the compact absorbing set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxDomain {
    lower: StateVector,
    upper: StateVector,
}

#[derive(Deserialize)]
struct RawBox {
    lower: StateVector,
    upper: StateVector,
}

impl TryFrom<RawBox> for BoxDomain {
    type Error = String;

    fn try_from(raw: RawBox) -> std::result::Result<Self, String> {
        BoxDomain::new(raw.lower, raw.upper).map_err(|e| e.to_string())
    }
}

impl BoxDomain {
    pub fn new(lower: StateVector, upper: StateVector) -> Result<Self> {
        if lower.dim() != upper.dim() || lower.dim() == 0 {
            return Err(Error::invalid("box bounds must have the same positive dimension"));
        }
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::invalid("box bounds must be finite"));
        }
        if let Some(i) = (0..lower.dim()).find(|&i| lower[i] >= upper[i]) {
            return Err(Error::invalid(format!(
                "box axis {i}: lower {} must be < upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn lower(&self) -> &StateVector {
        &self.lower
    }

    pub fn upper(&self) -> &StateVector {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn min_side(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        self.lower.distance(&self.upper)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Largest Euclidean norm of any point of the box.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect::<Vec<_>>()
            .into()
    }

    /// `count` uniform points drawn from a seeded stream.
    pub fn uniform_cloud(&self, count: usize, seed: u64) -> Vec<StateVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_uniform(&mut rng)).collect()
    }
}

/// Cell centres of the box subdivided `resolution[i]` ways along axis `i`,
/// first axis slowest.
pub fn collocate(domain: &BoxDomain, resolution: &[usize], cap: usize) -> Result<Vec<StateVector>> {
    if resolution.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: resolution.len(),
        });
    }
    if resolution.contains(&0) {
        return Err(Error::invalid("resolution entries must be >= 1"));
    }
    let count = resolution
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
        .unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::DimensionExplosion { count, cap });
    }
    let count = count as usize;
    let d = domain.dim();
    let mut points = Vec::with_capacity(count);
    let mut idx = vec![0usize; d];
    for _ in 0..count {
        let p: Vec<f64> = (0..d)
            .map(|i| {
                let (l, u) = (domain.lower[i], domain.upper[i]);
                l + (u - l) * (idx[i] as f64 + 0.5) / resolution[i] as f64
            })
            .collect();
        points.push(StateVector::new(p));
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < resolution[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(points)
}

/// Knobs for the empirical radius search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Random sphere directions on top of the `2d` axis points.
    pub boundary_samples: usize,
    /// Uniform time samples over `[0, T]` at which diameters are measured.
    pub time_samples: usize,
    pub max_radius: f64,
    pub min_radius: f64,
    /// Bisection stops once `hi / lo <= 1 + rel_tol`.
    pub rel_tol: f64,
    pub seed: u64,
}

impl CalibrationConfig {
    pub fn new(max_radius: f64) -> Self {
        CalibrationConfig {
            boundary_samples: 32,
            time_samples: 51,
            max_radius,
            min_radius: max_radius * 1e-4,
            rel_tol: 0.01,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_radius > 0.0 && self.min_radius > 0.0 && self.min_radius <= self.max_radius) {
            return Err(Error::invalid(format!(
                "need 0 < min_radius ({}) <= max_radius ({})",
                self.min_radius, self.max_radius
            )));
        }
        if self.time_samples < 2 {
            return Err(Error::invalid("time_samples must be >= 2"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be > 0"));
        }
        Ok(())
    }

    /// Unit directions: `±e_i` for every axis, then seeded random ones.
    pub fn directions(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut dirs = Vec::with_capacity(2 * dim + self.boundary_samples);
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = sign;
                dirs.push(e);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        while dirs.len() < 2 * dim + self.boundary_samples {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-12 {
                dirs.push(v.into_iter().map(|a| a / n).collect());
            }
        }
        dirs
    }
}

/// Empirical `sup_t diameter F^t(B(center, radius))` over the sampled sphere
/// points plus the centre.
pub fn evolved_diameter(
    model: &FlowModel,
    center: &StateVector,
    radius: f64,
    horizon: f64,
    cfg: &IntegratorConfig,
    directions: &[Vec<f64>],
    time_samples: usize,
) -> Result<f64> {
    let mut starts = Vec::with_capacity(directions.len() + 1);
    starts.push(center.clone());
    for dir in directions {
        starts.push(
            center
                .iter()
                .zip(dir)
                .map(|(c, u)| c + radius * u)
                .collect::<Vec<_>>()
                .into(),
        );
    }
    let paths = starts
        .iter()
        .map(|s| flow::sample_trajectory(model, s, horizon, time_samples, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for k in 0..time_samples {
        for a in 0..paths.len() {
            for b in a + 1..paths.len() {
                let d2 = squared_distance(&paths[a].states[k], &paths[b].states[k]);
                worst = worst.max(d2);
            }
        }
    }
    Ok(worst.sqrt())
}

/// Largest radius (to within `rel_tol`) whose evolved ball keeps an empirical
/// diameter `<= epsilon` over `[0, horizon]`, capped at `max_radius`.
pub fn calibrate_delta(
    model: &FlowModel,
    center: &StateVector,
    horizon: f64,
    epsilon: f64,
    cfg: &IntegratorConfig,
    calib: &CalibrationConfig,
) -> Result<f64> {
    calib.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
    }
    let dirs = calib.directions(center.dim());
    let diam = |r: f64| evolved_diameter(model, center, r, horizon, cfg, &dirs, calib.time_samples);

    if diam(calib.max_radius)? <= epsilon {
        return Ok(calib.max_radius);
    }
    let at_floor = diam(calib.min_radius)?;
    if at_floor > epsilon {
        return Err(Error::CalibrationFailure {
            center: center.coords().to_vec(),
            diameter: at_floor,
            epsilon,
            floor: calib.min_radius,
        });
    }
    let (mut lo, mut hi) = (calib.min_radius, calib.max_radius);
    while hi > lo * (1.0 + calib.rel_tol) {
        let mid = (lo * hi).sqrt();
        if diam(mid)? <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// [`calibrate_delta`] for every centre, in parallel, results in input order.
pub fn calibrate_centers(
    model: &FlowModel,
    centers: &[StateVector],
    horizon: f64,
    epsilon: f64,
    cfg: &IntegratorConfig,
    calib: &CalibrationConfig,
) -> Result<Vec<f64>> {
    par::map(centers, |c| calibrate_delta(model, c, horizon, epsilon, cfg, calib))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverBall {
    pub index: CellId,
    pub center: StateVector,
    pub radius: f64,
}

impl CoverBall {
    /// Closed-ball membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        squared_distance(x, &self.center) <= self.radius * self.radius
    }
}

/// Ordered finite ball cover with indices `1..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCover")]
pub struct Cover {
    balls: Vec<CoverBall>,
}

#[derive(Deserialize)]
struct RawCover {
    balls: Vec<CoverBall>,
}

impl TryFrom<RawCover> for Cover {
    type Error = String;

    fn try_from(raw: RawCover) -> std::result::Result<Self, String> {
        Cover::new(raw.balls).map_err(|e| e.to_string())
    }
}

impl Cover {
    pub fn new(balls: Vec<CoverBall>) -> Result<Self> {
        if balls.is_empty() {
            return Err(Error::invalid("a cover needs at least one ball"));
        }
        let d = balls[0].center.dim();
        for (i, b) in balls.iter().enumerate() {
            if b.index.slot() != i {
                return Err(Error::invalid(format!(
                    "ball at position {} has index {}, indices must run 1..N",
                    i + 1,
                    b.index
                )));
            }
            if !(b.radius > 0.0 && b.radius.is_finite()) {
                return Err(Error::invalid(format!("ball {} has radius {}", b.index, b.radius)));
            }
            if b.center.dim() != d || !b.center.is_finite() {
                return Err(Error::invalid(format!("ball {} has a malformed centre", b.index)));
            }
        }
        Ok(Cover { balls })
    }

    /// Balls numbered in the order given.
    pub fn from_centers(centers: Vec<StateVector>, radii: &[f64]) -> Result<Self> {
        if centers.len() != radii.len() {
            return Err(Error::invalid("one radius per centre required"));
        }
        Cover::new(
            centers
                .into_iter()
                .zip(radii)
                .enumerate()
                .map(|(i, (center, &radius))| CoverBall {
                    index: CellId::from_slot(i),
                    center,
                    radius,
                })
                .collect(),
        )
    }

    pub fn balls(&self) -> &[CoverBall] {
        &self.balls
    }

    pub fn ball(&self, id: CellId) -> &CoverBall {
        &self.balls[id.slot()]
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.balls[0].center.dim()
    }

    pub fn max_radius(&self) -> f64 {
        self.balls.iter().map(|b| b.radius).fold(0.0, f64::max)
    }
}

/// Removes balls, scanning from the highest index down, whenever the
/// remaining balls still cover every sample. The result is inclusion-minimal
/// with respect to `samples` and is renumbered `1..=N'` in original order.
pub fn minimal_cover(centers: &[StateVector], radii: &[f64], samples: &[StateVector]) -> Result<Cover> {
    if centers.len() != radii.len() {
        return Err(Error::invalid("one radius per centre required"));
    }
    let candidate = Cover::from_centers(centers.to_vec(), radii)?;
    let members: Vec<Vec<usize>> = candidate
        .balls
        .iter()
        .map(|b| {
            samples
                .iter()
                .enumerate()
                .filter(|(_, s)| b.contains(s))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let mut multiplicity = vec![0usize; samples.len()];
    for list in &members {
        for &i in list {
            multiplicity[i] += 1;
        }
    }
    if let Some(i) = multiplicity.iter().position(|&m| m == 0) {
        return Err(Error::Uncovered {
            point: samples[i].coords().to_vec(),
        });
    }
    let mut keep = vec![true; centers.len()];
    for n in (0..centers.len()).rev() {
        if members[n].iter().all(|&i| multiplicity[i] >= 2) {
            keep[n] = false;
            for &i in &members[n] {
                multiplicity[i] -= 1;
            }
        }
    }
    let (kept_centers, kept_radii): (Vec<_>, Vec<_>) = centers
        .iter()
        .zip(radii)
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|((c, r), _)| (c.clone(), *r))
        .unzip();
    Cover::from_centers(kept_centers, &kept_radii)
}

/// Collocation grid, its calibrated radii, and the minimal cover of the
/// grid points built from them.
#[derive(Clone, Debug)]
pub struct CalibratedCover {
    pub centers: Vec<StateVector>,
    pub radii: Vec<f64>,
    pub cover: Cover,
}

#[allow(clippy::too_many_arguments)]
pub fn calibrated_cover(
    model: &FlowModel,
    domain: &BoxDomain,
    resolution: &[usize],
    cap: usize,
    horizon: f64,
    epsilon: f64,
    cfg: &IntegratorConfig,
    calib: &CalibrationConfig,
) -> Result<CalibratedCover> {
    if domain.dim() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            found: domain.dim(),
        });
    }
    let centers = collocate(domain, resolution, cap)?;
    let radii = calibrate_centers(model, &centers, horizon, epsilon, cfg, calib)?;
    let cover = minimal_cover(&centers, &radii, &centers)?;
    Ok(CalibratedCover { centers, radii, cover })
}

/// Uniform hash grid over ball bounding boxes. Buckets list ball slots in
/// descending order so the first hit is the largest containing index.
#[derive(Clone, Debug)]
struct GridIndex {
    origin: Vec<f64>,
    width: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl GridIndex {
    fn build(cover: &Cover) -> Self {
        let d = cover.dim();
        let width = 2.0 * cover.max_radius();
        let origin: Vec<f64> = (0..d)
            .map(|i| {
                cover
                    .balls
                    .iter()
                    .map(|b| b.center[i] - b.radius)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut index = GridIndex {
            origin,
            width,
            buckets: HashMap::new(),
        };
        for (slot, b) in cover.balls.iter().enumerate().rev() {
            let lo: Vec<i64> = (0..d).map(|i| index.coord(i, b.center[i] - b.radius)).collect();
            let hi: Vec<i64> = (0..d).map(|i| index.coord(i, b.center[i] + b.radius)).collect();
            let mut key = lo.clone();
            'cells: loop {
                index.buckets.entry(key.clone()).or_default().push(slot);
                for axis in (0..d).rev() {
                    if key[axis] < hi[axis] {
                        key[axis] += 1;
                        continue 'cells;
                    }
                    key[axis] = lo[axis];
                }
                break;
            }
        }
        index
    }

    fn coord(&self, axis: usize, v: f64) -> i64 {
        ((v - self.origin[axis]) / self.width).floor() as i64
    }

    fn candidates(&self, x: &[f64]) -> &[usize] {
        let key: Vec<i64> = x.iter().enumerate().map(|(i, v)| self.coord(i, *v)).collect();
        self.buckets.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The disjoint cells `A_n = B_n \ (B_{n+1} ∪ … ∪ B_N)` of a cover.
#[derive(Clone, Debug)]
pub struct Partition {
    cover: Cover,
    index: GridIndex,
}

impl Partition {
    pub fn new(cover: Cover) -> Self {
        let index = GridIndex::build(&cover);
        Partition { cover, index }
    }

    pub fn cover(&self) -> &Cover {
        &self.cover
    }

    pub fn n_cells(&self) -> usize {
        self.cover.len()
    }

    pub fn dim(&self) -> usize {
        self.cover.dim()
    }

    /// Largest index `n` with `x ∈ B_n`, or `None` outside every ball.
    pub fn assign_cell(&self, x: &[f64]) -> Option<CellId> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        self.index
            .candidates(x)
            .iter()
            .find(|&&slot| self.cover.balls[slot].contains(x))
            .map(|&slot| CellId::from_slot(slot))
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.cover.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Cover::deserialize(d).map(Partition::new)
    }
}

/// Counting-measure weights `μ(A_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMeasure {
    pub weights: Vec<f64>,
}

/// `μ(A_n)` = fraction of the covered samples that fall in cell `n`.
pub fn cell_measure(partition: &Partition, samples: &[StateVector]) -> Result<CellMeasure> {
    let cells = par::map(samples, |s| partition.assign_cell(s));
    let mut counts = vec![0u64; partition.n_cells()];
    let mut covered = 0u64;
    for cell in cells.into_iter().flatten() {
        counts[cell.slot()] += 1;
        covered += 1;
    }
    if covered == 0 {
        return Err(Error::NoCoveredSamples);
    }
    Ok(CellMeasure {
        weights: counts.into_iter().map(|c| c as f64 / covered as f64).collect(),
    })
}

/// `H = -Σ μ_n ln μ_n` with `0 ln 0 = 0`.
pub fn metric_entropy(mu: &CellMeasure) -> Result<f64> {
    let sum: f64 = mu.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || mu.weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::Unnormalized { sum });
    }
    let plogp: f64 = mu.weights.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum();
    // 0.0 - x rather than -x so a point mass gives +0
    Ok(0.0 - plogp)
}
