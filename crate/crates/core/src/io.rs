//! File formats for pipeline artifacts.
//!
//! JSON is written pretty-printed with a trailing newline; floats use the
//! shortest representation that round-trips, so identical values always
//! produce identical bytes. CSV files carry a header row.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cover::CellId;
use crate::error::{Error, Result};
use crate::flow::{FlowModel, IntegratorConfig, StateVector, TrajectorySample};
use crate::segments::{Segment, SegmentLibrary};
use crate::symbolic::PseudoOrbit;
use crate::transitions::{MarkovMatrix, TransitionMatrix, TransitionTensor};

/// Largest `N` for which `Γ` is stored as a dense matrix.
pub const DENSE_LIMIT: usize = 512;

pub const LIBRARY_JSON: &str = "library.json";
pub const SEGMENTS_CSV: &str = "segments.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        context: path.display().to_string(),
        source,
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::InvalidArtifact {
        context: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: "serialize".into(),
        source,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, to_json_string(value)?).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| bad(path, format!("not a number: {s:?}")))
}

fn parse_usize(path: &Path, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| bad(path, format!("not an index: {s:?}")))
}

/// Point cloud, one row per point, columns `x0..x{d-1}`.
pub fn write_samples_csv(path: &Path, points: &[StateVector]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.dim());
    let mut w = csv_writer(path)?;
    w.write_record((0..d).map(|i| format!("x{i}"))).map_err(csv_err(path))?;
    for p in points {
        w.write_record(p.iter().map(|v| fmt(*v))).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<StateVector>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let d = r.headers().map_err(csv_err(path))?.len();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != d {
            return Err(bad(path, format!("row with {} columns, header has {d}", rec.len())));
        }
        out.push(
            rec.iter()
                .map(|s| parse_f64(path, s))
                .collect::<Result<Vec<_>>>()?
                .into(),
        );
    }
    Ok(out)
}

/// `library.json`: everything about a library except the samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryHeader {
    pub n_cells: usize,
    pub dimension: usize,
    pub horizon: f64,
    pub n_t: usize,
    pub epsilon: f64,
    pub model: FlowModel,
    pub integrator: IntegratorConfig,
    pub times: Vec<f64>,
}

/// Writes `library.json` and `segments.csv` (columns `cell,k,t,x0..`) into `dir`.
pub fn write_library(dir: &Path, lib: &SegmentLibrary) -> Result<()> {
    let header = LibraryHeader {
        n_cells: lib.n_cells(),
        dimension: lib.dim(),
        horizon: lib.horizon,
        n_t: lib.n_t,
        epsilon: lib.epsilon,
        model: lib.model.clone(),
        integrator: lib.integrator,
        times: lib.times().to_vec(),
    };
    write_json(&dir.join(LIBRARY_JSON), &header)?;
    let path = dir.join(SEGMENTS_CSV);
    let mut w = csv_writer(&path)?;
    let mut head = vec!["cell".to_string(), "k".into(), "t".into()];
    head.extend((0..lib.dim()).map(|i| format!("x{i}")));
    w.write_record(&head).map_err(csv_err(&path))?;
    for s in &lib.segments {
        for (k, (t, x)) in s.samples.times.iter().zip(&s.samples.states).enumerate() {
            let mut row = vec![s.cell.to_string(), k.to_string(), fmt(*t)];
            row.extend(x.iter().map(|v| fmt(*v)));
            w.write_record(&row).map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))
}

pub fn read_library(dir: &Path) -> Result<SegmentLibrary> {
    let header: LibraryHeader = read_json(&dir.join(LIBRARY_JSON))?;
    let path = dir.join(SEGMENTS_CSV);
    let mut r = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
    let d = header.dimension;
    if r.headers().map_err(csv_err(&path))?.len() != d + 3 {
        return Err(bad(&path, format!("expected {} columns", d + 3)));
    }
    let mut states: Vec<Vec<StateVector>> = vec![Vec::with_capacity(header.n_t); header.n_cells];
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let cell = parse_usize(&path, &rec[0])?;
        let k = parse_usize(&path, &rec[1])?;
        if cell == 0 || cell > header.n_cells || k != states[cell - 1].len() || k >= header.n_t {
            return Err(bad(&path, format!("unexpected row (cell {cell}, k {k})")));
        }
        let x = rec
            .iter()
            .skip(3)
            .map(|s| parse_f64(&path, s))
            .collect::<Result<Vec<_>>>()?;
        states[cell - 1].push(x.into());
    }
    let lib = SegmentLibrary {
        segments: states
            .into_iter()
            .enumerate()
            .map(|(i, st)| Segment {
                cell: CellId::from_slot(i),
                samples: TrajectorySample {
                    times: header.times.clone(),
                    states: st,
                },
            })
            .collect(),
        horizon: header.horizon,
        n_t: header.n_t,
        epsilon: header.epsilon,
        model: header.model,
        integrator: header.integrator,
    };
    lib.validate()?;
    Ok(lib)
}

/// Two-column CSV `t,M_d`.
pub fn write_max_difference_csv(path: &Path, times: &[f64], md: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "M_d"]).map_err(csv_err(path))?;
    for (t, v) in times.iter().zip(md) {
        w.write_record([fmt(*t), fmt(*v)]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_max_difference_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut times = Vec::new();
    let mut md = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != 2 {
            return Err(bad(path, "expected columns t,M_d"));
        }
        times.push(parse_f64(path, &rec[0])?);
        md.push(parse_f64(path, &rec[1])?);
    }
    Ok((times, md))
}

/// Pseudo-orbit samples on the global grid, columns `window,t,x0..`.
pub fn write_pseudo_orbit_csv(path: &Path, eta: &PseudoOrbit) -> Result<()> {
    let mut w = csv_writer(path)?;
    let d = eta.windows.first().and_then(|w| w.first()).map_or(0, |x| x.dim());
    let mut head = vec!["window".to_string(), "cell".into(), "t".into()];
    head.extend((0..d).map(|i| format!("x{i}")));
    w.write_record(&head).map_err(csv_err(path))?;
    for (j, t, x) in eta.samples() {
        let mut row = vec![j.to_string(), eta.word.word[j].to_string(), fmt(t)];
        row.extend(x.iter().map(|v| fmt(*v)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// On-disk form of `Γ`: dense 0/1 and count matrices up to
/// [`DENSE_LIMIT`] cells, `(from, to, count)` triplets beyond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaDocument {
    pub n_cells: usize,
    pub layout: GammaLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissible: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<Vec<u64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<(CellId, CellId, u64)>>,
    pub escaped: Vec<u64>,
    pub escape_fraction: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaLayout {
    Dense,
    Sparse,
}

impl From<&TransitionMatrix> for GammaDocument {
    fn from(g: &TransitionMatrix) -> Self {
        let n = g.n_cells();
        let escaped = g.cells().map(|c| g.escaped(c)).collect();
        let escape_fraction = g.cells().map(|c| g.escape_fraction(c)).collect();
        if n <= DENSE_LIMIT {
            GammaDocument {
                n_cells: n,
                layout: GammaLayout::Dense,
                admissible: Some(
                    g.cells()
                        .map(|m| g.cells().map(|k| g.is_admissible(m, k) as u8).collect())
                        .collect(),
                ),
                counts: Some(g.cells().map(|m| g.cells().map(|k| g.count(m, k)).collect()).collect()),
                entries: None,
                escaped,
                escape_fraction,
            }
        } else {
            GammaDocument {
                n_cells: n,
                layout: GammaLayout::Sparse,
                admissible: None,
                counts: None,
                entries: Some(
                    g.cells()
                        .flat_map(|m| g.successors(m).iter().map(move |k| (m, *k, g.count(m, *k))))
                        .collect(),
                ),
                escaped,
                escape_fraction,
            }
        }
    }
}

impl GammaDocument {
    pub fn into_matrix(self) -> Result<TransitionMatrix> {
        let n = self.n_cells;
        let malformed = |reason: &str| Error::InvalidArtifact {
            context: "gamma".into(),
            reason: reason.into(),
        };
        let mut admissible = vec![BTreeSet::new(); n];
        let mut counts = vec![BTreeMap::new(); n];
        match self.layout {
            GammaLayout::Dense => {
                let (a, k) = match (self.admissible, self.counts) {
                    (Some(a), Some(k)) => (a, k),
                    _ => return Err(malformed("dense layout needs admissible and counts")),
                };
                if a.len() != n || k.len() != n || a.iter().any(|r| r.len() != n) || k.iter().any(|r| r.len() != n) {
                    return Err(malformed("dense matrices must be n_cells x n_cells"));
                }
                for m in 0..n {
                    for j in 0..n {
                        if a[m][j] > 1 {
                            return Err(malformed("admissible entries must be 0 or 1"));
                        }
                        if a[m][j] == 1 {
                            admissible[m].insert(CellId::from_slot(j));
                        }
                        if k[m][j] > 0 {
                            counts[m].insert(CellId::from_slot(j), k[m][j]);
                        }
                    }
                }
            }
            GammaLayout::Sparse => {
                let entries = self.entries.ok_or_else(|| malformed("sparse layout needs entries"))?;
                for (m, j, c) in entries {
                    if m.get() > n || j.get() > n {
                        return Err(malformed("entry outside 1..=n_cells"));
                    }
                    admissible[m.slot()].insert(j);
                    if c > 0 {
                        counts[m.slot()].insert(j, c);
                    }
                }
            }
        }
        if self.escaped.len() != n {
            return Err(malformed("escaped needs one entry per cell"));
        }
        TransitionMatrix::with_counts(admissible, counts, self.escaped)
    }
}

pub fn write_gamma(path: &Path, g: &TransitionMatrix) -> Result<()> {
    write_json(path, &GammaDocument::from(g))
}

pub fn read_gamma(path: &Path) -> Result<TransitionMatrix> {
    read_json::<GammaDocument>(path)?.into_matrix()
}

/// Sparse rows of `p` as `(to, probability)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovDocument {
    pub n_cells: usize,
    pub rows: Vec<Vec<(CellId, f64)>>,
}

pub fn write_markov(path: &Path, p: &MarkovMatrix) -> Result<()> {
    write_json(
        path,
        &MarkovDocument {
            n_cells: p.n_cells(),
            rows: p
                .rows()
                .iter()
                .map(|r| r.iter().map(|(k, v)| (*k, *v)).collect())
                .collect(),
        },
    )
}

pub fn read_markov(path: &Path) -> Result<MarkovMatrix> {
    let doc: MarkovDocument = read_json(path)?;
    if doc.rows.len() != doc.n_cells {
        return Err(bad(path, "rows must have one entry per cell"));
    }
    MarkovMatrix::from_rows(doc.rows.into_iter().map(|r| r.into_iter().collect()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorsDocument {
    pub max_order: usize,
    pub tensors: Vec<TransitionTensor>,
}

pub fn write_tensors(path: &Path, tensors: &[TransitionTensor]) -> Result<()> {
    write_json(
        path,
        &TensorsDocument {
            max_order: tensors.last().map_or(0, |t| t.order),
            tensors: tensors.to_vec(),
        },
    )
}

pub fn read_tensors(path: &Path) -> Result<Vec<TransitionTensor>> {
    let doc: TensorsDocument = read_json(path)?;
    for t in &doc.tensors {
        t.validate()?;
    }
    Ok(doc.tensors)
}

/// `dir/name` if it exists, otherwise an error naming the missing file.
pub fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::Io {
            path: p,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "required artifact is missing"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::Cover;
    use crate::segments::build_segments;
    use crate::symbolic::{reconstruct_pseudo_orbit, SymbolSequence};

    fn lib() -> SegmentLibrary {
        let cover = Cover::from_centers(
            vec![vec![1.0, 2.0, 3.0].into(), vec![-4.0, 0.5, 20.0].into()],
            &[0.3, 0.2],
        )
        .unwrap();
        build_segments(&FlowModel::lorenz(), &cover, 0.1, 6, 1.0, &IntegratorConfig::default()).unwrap()
    }

    #[test]
    fn library_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let l = lib();
        write_library(dir.path(), &l).unwrap();
        assert_eq!(read_library(dir.path()).unwrap(), l);
    }

    #[test]
    fn samples_and_md_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pts: Vec<StateVector> = vec![vec![0.1, 1.0 / 3.0].into(), vec![-2.5e-17, 7.0].into()];
        let p = dir.path().join("s.csv");
        write_samples_csv(&p, &pts).unwrap();
        assert_eq!(read_samples_csv(&p).unwrap(), pts);
        let q = dir.path().join("md.csv");
        write_max_difference_csv(&q, &[0.0, 0.5], &[1.0, 0.1 + 0.2]).unwrap();
        assert_eq!(
            read_max_difference_csv(&q).unwrap(),
            (vec![0.0, 0.5], vec![1.0, 0.1 + 0.2])
        );
        assert!(fs::read_to_string(&q).unwrap().starts_with("t,M_d\n"));
    }

    fn counted() -> TransitionMatrix {
        let c = CellId::new;
        TransitionMatrix::from_counts(
            vec![BTreeMap::from([(c(2), 3)]), BTreeMap::from([(c(1), 1), (c(2), 4)])],
            vec![1, 0],
        )
        .unwrap()
    }

    #[test]
    fn gamma_dense_and_sparse() {
        let dir = tempfile::tempdir().unwrap();
        let g = counted();
        let p = dir.path().join("gamma.json");
        write_gamma(&p, &g).unwrap();
        assert_eq!(read_gamma(&p).unwrap(), g);
        let doc = GammaDocument::from(&g);
        assert_eq!(doc.layout, GammaLayout::Dense);
        assert_eq!(doc.escape_fraction, vec![0.25, 0.0]);

        let n = DENSE_LIMIT + 1;
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|i| (0..n).map(|j| ((i + 1) % n == j) as u8).collect())
            .collect();
        let big = TransitionMatrix::from_pattern(&rows).unwrap();
        write_gamma(&p, &big).unwrap();
        let doc: GammaDocument = read_json(&p).unwrap();
        assert_eq!(doc.layout, GammaLayout::Sparse);
        assert_eq!(doc.entries.as_ref().unwrap().len(), n);
        assert_eq!(doc.into_matrix().unwrap(), big);
    }

    #[test]
    fn markov_and_tensors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = counted();
        let p = MarkovMatrix::from_transitions(&g);
        let path = dir.path().join("markov.json");
        write_markov(&path, &p).unwrap();
        assert_eq!(read_markov(&path).unwrap(), p);
        let t = vec![TransitionTensor::from_matrix(&g)];
        let path = dir.path().join("tensors.json");
        write_tensors(&path, &t).unwrap();
        assert_eq!(read_tensors(&path).unwrap(), t);
    }

    #[test]
    fn rejects_zero_cell_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"n_cells":1,"rows":[[[0,1.0]]]}"#).unwrap();
        assert!(matches!(read_markov(&path), Err(Error::Json { .. })));
    }

    #[test]
    fn pseudo_orbit_csv_has_duplicate_junctions() {
        let dir = tempfile::tempdir().unwrap();
        let l = lib();
        let word = SymbolSequence {
            word: vec![CellId::new(1), CellId::new(2)],
            horizon: l.horizon,
            complete: true,
        };
        let eta = reconstruct_pseudo_orbit(&l, &word).unwrap();
        let path = dir.path().join("eta.csv");
        write_pseudo_orbit_csv(&path, &eta).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 6);
        assert!(text.lines().nth(6).unwrap().starts_with("0,1,0.1,"));
        assert!(text.lines().nth(7).unwrap().starts_with("1,2,0.1,"));
    }

    #[test]
    fn missing_artifact_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = require(dir.path(), "cover.json").unwrap_err();
        assert!(err.to_string().contains("cover.json"));
    }
}
