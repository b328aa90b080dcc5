//! Domain types shared by every analysis stage: labeled feature records, the
//! validated immutable [`Dataset`], and the [`AnalysisConfig`] knobs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whether a crop was taken inside or outside the detection region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiFlag {
    Inside,
    Outside,
}

impl RoiFlag {
    /// Short lowercase label used in reports and figure legends.
    pub fn label(self) -> &'static str {
        match self {
            RoiFlag::Inside => "inside",
            RoiFlag::Outside => "outside",
        }
    }
}

impl fmt::Display for RoiFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One cropped-image observation and its extracted feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub vehicle_id: String,
    pub camera_id: String,
    pub condition: String,
    pub frame_index: u64,
    pub roi: RoiFlag,
    pub feature: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset must contain at least one record")]
    EmptyInput,
    #[error("record {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("record {index}: {reason}")]
    InvalidFeature { index: usize, reason: &'static str },
}

/// Record indices of one vehicle, split by ROI class. Both lists are in
/// ingestion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VehicleRecords {
    pub inside: Vec<usize>,
    pub outside: Vec<usize>,
}

impl VehicleRecords {
    pub fn indices(&self, roi: RoiFlag) -> &[usize] {
        match roi {
            RoiFlag::Inside => &self.inside,
            RoiFlag::Outside => &self.outside,
        }
    }

    pub fn len(&self) -> usize {
        self.inside.len() + self.outside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-group image counts, laid out like the dataset tables of the
/// evaluation: unique vehicles, inside-ROI images, outside-ROI images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GroupCounts {
    pub vehicles: usize,
    pub inside_images: usize,
    pub outside_images: usize,
}

/// Validated, immutable collection of feature records.
///
/// Records keep their ingestion order. The vehicle index is a `BTreeMap`, so
/// every iteration over vehicles is in sorted `vehicle_id` order; all
/// downstream reductions rely on that for bit-reproducible results.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<FeatureRecord>,
    dim: usize,
    vehicle_index: BTreeMap<String, VehicleRecords>,
}

impl Dataset {
    /// Validates `records` and builds the per-vehicle index.
    pub fn new(records: Vec<FeatureRecord>) -> Result<Self, DatasetError> {
        let dim = match records.first() {
            Some(first) => first.feature.len(),
            None => return Err(DatasetError::EmptyInput),
        };
        let mut vehicle_index: BTreeMap<String, VehicleRecords> = BTreeMap::new();
        for (index, record) in records.iter().enumerate() {
            if record.feature.len() != dim {
                return Err(DatasetError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: record.feature.len(),
                });
            }
            validate_feature(index, &record.feature)?;
            let entry = vehicle_index.entry(record.vehicle_id.clone()).or_default();
            match record.roi {
                RoiFlag::Inside => entry.inside.push(index),
                RoiFlag::Outside => entry.outside.push(index),
            }
        }
        Ok(Self {
            records,
            dim,
            vehicle_index,
        })
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &FeatureRecord {
        &self.records[index]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of unique vehicles.
    pub fn n_vehicles(&self) -> usize {
        self.vehicle_index.len()
    }

    pub fn vehicle_index(&self) -> &BTreeMap<String, VehicleRecords> {
        &self.vehicle_index
    }

    pub fn vehicle(&self, vehicle_id: &str) -> Option<&VehicleRecords> {
        self.vehicle_index.get(vehicle_id)
    }

    pub fn into_records(self) -> Vec<FeatureRecord> {
        self.records
    }

    /// Sorted distinct condition tags.
    pub fn conditions(&self) -> Vec<String> {
        distinct(self.records.iter().map(|r| r.condition.as_str()))
    }

    /// Sorted distinct camera ids.
    pub fn cameras(&self) -> Vec<String> {
        distinct(self.records.iter().map(|r| r.camera_id.as_str()))
    }

    /// Feature vectors in record order.
    pub fn features(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.feature.as_slice()).collect()
    }

    /// Keeps the records matching `keep`, preserving order. Fails with
    /// `EmptyInput` if nothing survives.
    pub fn filter<F>(&self, mut keep: F) -> Result<Dataset, DatasetError>
    where
        F: FnMut(&FeatureRecord) -> bool,
    {
        let records: Vec<FeatureRecord> =
            self.records.iter().filter(|r| keep(r)).cloned().collect();
        Dataset::new(records)
    }

    pub fn counts(&self) -> GroupCounts {
        GroupCounts {
            vehicles: self.n_vehicles(),
            inside_images: self.vehicle_index.values().map(|v| v.inside.len()).sum(),
            outside_images: self.vehicle_index.values().map(|v| v.outside.len()).sum(),
        }
    }

    /// Counts per condition tag, sorted by tag.
    pub fn counts_by_condition(&self) -> BTreeMap<String, GroupCounts> {
        self.counts_by(|r| r.condition.as_str())
    }

    /// Counts per camera id, sorted by id.
    pub fn counts_by_camera(&self) -> BTreeMap<String, GroupCounts> {
        self.counts_by(|r| r.camera_id.as_str())
    }

    fn counts_by<'a, K>(&'a self, key: K) -> BTreeMap<String, GroupCounts>
    where
        K: Fn(&'a FeatureRecord) -> &'a str,
    {
        let mut vehicles: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        let mut counts: BTreeMap<String, GroupCounts> = BTreeMap::new();
        for record in &self.records {
            let group = key(record);
            vehicles
                .entry(group)
                .or_default()
                .insert(record.vehicle_id.as_str());
            let entry = counts.entry(group.to_string()).or_default();
            match record.roi {
                RoiFlag::Inside => entry.inside_images += 1,
                RoiFlag::Outside => entry.outside_images += 1,
            }
        }
        for (group, ids) in vehicles {
            if let Some(entry) = counts.get_mut(group) {
                entry.vehicles = ids.len();
            }
        }
        counts
    }
}

fn distinct<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    values
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect()
}

fn validate_feature(index: usize, feature: &[f64]) -> Result<(), DatasetError> {
    if feature.is_empty() {
        return Err(DatasetError::InvalidFeature {
            index,
            reason: "feature vector is empty",
        });
    }
    if feature.iter().any(|x| !x.is_finite()) {
        return Err(DatasetError::InvalidFeature {
            index,
            reason: "feature contains NaN or infinite values",
        });
    }
    if feature.iter().all(|&x| x == 0.0) {
        return Err(DatasetError::InvalidFeature {
            index,
            reason: "feature has zero norm",
        });
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Every tunable of the analysis. The whole struct is echoed into each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Significance level of the one-sided test.
    pub alpha: f64,
    pub entropy_bins: usize,
    pub entropy_log_base: f64,
    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,
    pub tsne_learning_rate: f64,
    pub tsne_early_exaggeration: f64,
    /// Number of leading iterations run with exaggerated affinities and
    /// the initial momentum.
    pub tsne_exaggeration_iterations: usize,
    pub tsne_momentum_initial: f64,
    pub tsne_momentum_final: f64,
    pub rng_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            entropy_bins: 32,
            entropy_log_base: 2.0,
            tsne_perplexity: 30.0,
            tsne_iterations: 1000,
            tsne_learning_rate: 200.0,
            tsne_early_exaggeration: 12.0,
            tsne_exaggeration_iterations: 250,
            tsne_momentum_initial: 0.5,
            tsne_momentum_final: 0.8,
            rng_seed: 42,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.entropy_bins == 0 {
            return Err(ConfigError("entropy_bins must be positive".into()));
        }
        if !(self.entropy_log_base.is_finite() && self.entropy_log_base > 1.0) {
            return Err(ConfigError(format!(
                "entropy_log_base must be greater than 1, got {}",
                self.entropy_log_base
            )));
        }
        positive("tsne_perplexity", self.tsne_perplexity)?;
        positive("tsne_learning_rate", self.tsne_learning_rate)?;
        positive("tsne_early_exaggeration", self.tsne_early_exaggeration)?;
        if self.tsne_iterations == 0 {
            return Err(ConfigError("tsne_iterations must be positive".into()));
        }
        for (name, m) in [
            ("tsne_momentum_initial", self.tsne_momentum_initial),
            ("tsne_momentum_final", self.tsne_momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                return Err(ConfigError(format!("{name} must lie in [0, 1), got {m}")));
            }
        }
        Ok(())
    }
}
