//! Analysis of gridded annual rainfall time-series: year-over-year phase
//! fields, multi-scale extreme-year detection, conditional-probability
//! tables, spatial coherence measures and spectral clustering of
//! co-occurrence similarity matrices.
//!
//! The crate works on one data shape: a rectangular-lattice grid of
//! locations, each holding one rainfall total per year. From that it
//! derives, in order:
//!
//! - [`phase`]: the sign of each year-over-year change, per location and
//!   for the spatial-mean series, with agreement and transition tables;
//! - [`extremes`]: years beyond one standard deviation of a series' mean,
//!   classified at local, spatial-mean and flood/drought-count scale, and
//!   the conditional tables linking the scales;
//! - [`coherence`]: how spatially clumped a property is, as the mean count
//!   of property-holding neighbors (MNN) and the mean connected-component
//!   size (MCCS) over the property's year set;
//! - [`cluster`]: NJW spectral clustering of six pairwise co-occurrence
//!   counts, with a normalized-similarity filter marking tight clusters.
//!
//! [`synth`] generates reproducible synthetic fields (AR(1) in time,
//! Gaussian-kernel mixing in space, optional planted clusters) so every
//! analysis can be exercised against known ground truth. [`pipeline`] wires
//! the stages into deterministic artifact trees, and [`cli`] exposes them
//! as subcommands.
//!
//! All randomness is seeded, all parallel reductions are order-fixed, and
//! all artifacts are hashed into a manifest; two runs with the same data
//! and settings produce byte-identical trees at any thread count.

pub mod cli;
pub mod cluster;
pub mod coherence;
pub mod cond;
pub mod extremes;
mod fmt;
pub mod grid;
pub mod io;
pub mod phase;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use cluster::{spectral_cluster, SimilarityKind};
pub use coherence::{compute_coherence, MccsMode, PropertyId};
pub use cond::CondEntry;
pub use extremes::{classify_years, NationalSeries, SigmaDivisor, YearType};
pub use grid::{build_neighbor_graph, compute_aimr, GridSpec, RainfallField};
pub use phase::{phase_of_aimr, phase_of_field, TieRule};
pub use pipeline::{run_analyze, InputFormat, InputSource, RunConfig};
pub use synth::{generate, SynthConfig};
