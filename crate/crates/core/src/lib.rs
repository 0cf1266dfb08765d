//! Ensemble fusion and evaluation for binary segmentation.
//!
//! The crate ingests per-model probability maps and ground-truth masks and
//! provides:
//!
//! * [`raster`]: probability maps, masks, thresholding, confusion counts;
//! * [`metrics`]: IoU, precision, recall, F1, Hausdorff, HD95, the log-sum
//!   aggregate H and the Z transform for heatmaps;
//! * [`ensemble`]: weighted convex fusion on an exact weight grid, simplex
//!   enumeration, exhaustive grid search and Z heatmap panels;
//! * [`synth`]: seeded synthetic fixtures standing in for trained models;
//! * [`io`]: PGM/PFM rasters, CSV manifests, reports and tables;
//! * [`cli`]: the `segfuse` command-line subcommands.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod synth;

pub use ensemble::{
    enumerate_simplex, fuse, grid_search, heatmap, GridSearchResult, HeatmapMatrix, LabeledSlice,
    Objective, WeightVector,
};
pub use error::{Error, Result};
pub use metrics::{slice_metrics, MetricsRecord};
pub use raster::{confusion, ConfusionCounts, Mask, ProbMap};
