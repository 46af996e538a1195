//! Instance-aware segmentation losses and lesion-wise evaluation for 3D
//! binary segmentation.
//!
//! * [`losses`]: soft Dice, cross-entropy, DiceCE and the CC / blob instance
//!   objectives, all with analytic gradients with respect to the logits.
//! * [`metrics`]: hard Dice, CC-Dice, one-to-one lesion matching, detection
//!   F1 and recall by lesion-volume quartile.
//! * [`components`] and [`voronoi`]: 26-connected labeling and the exact
//!   nearest-lesion partition both families build on.
//! * [`dataset_stats`]: per-corpus component counts and volumes.
//! * [`phantoms`]: deterministic synthetic scenarios.

pub mod cli;
pub mod components;
pub mod dataset_stats;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod phantoms;
pub mod volume;
pub mod voronoi;

pub use components::{label_components, ComponentLabeling};
pub use error::{Error, Result};
pub use volume::{binarize, sigmoid, BinaryMask, Grid, LogitVolume, ProbVolume, Shape, Spacing};
pub use voronoi::{
    voronoi_partition, voronoi_partition_bruteforce, DistanceMetric, VoronoiPartition,
};
