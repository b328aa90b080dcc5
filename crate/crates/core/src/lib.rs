//! Feature-consistency analysis for vehicle re-identification crops taken
//! inside and outside a detection region of interest (ROI).
//!
//! The pipeline consumes precomputed feature vectors labeled with vehicle,
//! camera, condition and ROI class, and measures how consistent each
//! vehicle's features are:
//!
//! * [`similarity`]: cosine similarity of inside/inside and inside/outside pairs,
//! * [`stats`]: one-sided t-test on those aggregates and binned entropy,
//! * [`embed`]: exact t-SNE to two dimensions,
//! * [`clustermetrics`]: variance measures on the embedding,
//! * [`report`]: the end-to-end run, JSON report and SVG figures.

pub mod cli;
pub mod clustermetrics;
pub mod dataset;
pub mod embed;
pub mod ingest;
pub mod report;
pub mod rng;
pub mod similarity;
pub mod stats;
pub mod svg;

pub use dataset::{AnalysisConfig, Dataset, DatasetError, FeatureRecord, RoiFlag};
