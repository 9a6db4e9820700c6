//! Temporal action detection over precomputed snippet features.
//!
//! The pipeline, end to end:
//!
//! 1. [`tag`] turns a per-snippet actionness signal into temporal proposals
//!    by flooding the complemented signal at a grid of water levels and
//!    grouping the resulting basins.
//! 2. [`intervals::augment`] extends each proposal by half its duration on
//!    both sides and splits it into starting / course / ending stages.
//! 3. [`stpp`] pools snippet features over a structured temporal pyramid
//!    laid over the stages, producing course and global proposal features
//!    (densely, or from 9 sampled snippets during training).
//! 4. [`model`] holds the linear heads: an activity softmax over the course
//!    feature, per-class completeness classifiers and location regressors
//!    over the global feature, with the multi-task training losses.
//! 5. [`training`] assigns positive / background / incomplete labels,
//!    composes 1:1:6 minibatches with completeness hard-example mining, and
//!    runs seeded SGD.
//! 6. [`inference`] scores proposals by applying head weights per snippet
//!    first and pooling the responses (cost independent of proposal count),
//!    then refines intervals and applies per-class NMS.
//! 7. [`evaluation`] computes proposal recall and PASCAL-VOC-style AP/mAP.
//!
//! See the `examples/` directory for one runnable walkthrough per stage and
//! the `ssn` binary for the file-based pipeline
//! (`propose` / `train` / `detect` / `eval` / `plot-data`).

pub mod error;
pub mod evaluation;
pub mod inference;
pub mod intervals;
pub mod io;
pub mod model;
pub mod sequence;
pub mod stpp;
pub mod synthetic;
pub mod tag;
pub mod training;

pub use error::{Result, SsnError};
pub use intervals::{augment, iou, AugmentedProposal, GroundTruthInstance, TemporalInterval};
pub use sequence::{SnippetSequence, VideoData};
