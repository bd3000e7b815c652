//! Segment description of chaotic flows.
//!
//! The absorbing set of a flow `F^t` is covered by finitely many balls whose
//! radii are calibrated so that each evolved ball stays `ε`-small over a
//! window `[0, T]`. Orbits are then encoded as words over the ball indices and
//! approximated by concatenating precomputed segments `s_n`; the words live in
//! a subshift of finite type whose transitions are estimated by sampling.
//!
//! Module map:
//!
//! * [`flow`]: models and the RK4 flow map.
//! * [`cover`]: collocation, radius calibration, minimal cover, partition.
//! * [`segments`]: the segment library and the maximal difference function.
//! * [`transitions`]: transition matrix, Markov matrix, transition tensors.
//! * [`symbolic`]: encoding, pseudo-orbits, shadowing, enumeration, entropy.
//! * [`quantities`]: observables and their reachable-set bounds.
//! * [`io`]: JSON/CSV artifacts.

pub mod cover;
pub mod error;
pub mod flow;
pub mod io;
mod par;
pub mod quantities;
pub mod segments;
pub mod symbolic;
pub mod transitions;

pub use cover::{BoxDomain, CalibrationConfig, CellId, CellMeasure, Cover, CoverBall, Partition};
pub use error::{Error, Result};
pub use flow::{FlowModel, IntegratorConfig, ModelId, QuadraticField, StateVector, TrajectorySample};
pub use quantities::{QuantityEnvelope, QuantitySpec};
pub use segments::{Segment, SegmentLibrary};
pub use symbolic::{PseudoOrbit, SymbolSequence};
pub use transitions::{MarkovMatrix, TransitionMatrix, TransitionTensor};
