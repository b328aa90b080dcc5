//! The full analysis pipeline and its serialized report.
//!
//! [`analyze`] runs every stage on a dataset and returns the report together
//! with the embedding coordinates; [`write_outputs`] lays the results out as
//! `report.json`, `embedding.csv` and `figures/*.svg`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::clustermetrics::{self, ClusterError, IntraInterReport, VarianceReport};
use crate::dataset::{AnalysisConfig, ConfigError, Dataset, DatasetError, GroupCounts, RoiFlag};
use crate::embed::{self, EmbedError, Embedding2D};
use crate::similarity::{self, PairScope, SimilarityError, SimilaritySummary};
use crate::stats::{self, EntropySummary, StatsError, TTestResult};
use crate::svg;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("similarity: {0}")]
    Similarity(#[from] SimilarityError),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("embed: {0}")]
    Embed(#[from] EmbedError),
    #[error("clustermetrics: {0}")]
    Cluster(#[from] ClusterError),
    #[error("cross mode needs at least two cameras, found {0:?}")]
    TooFewCameras(Vec<String>),
    #[error("camera {0:?} does not occur in the dataset")]
    UnknownCamera(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl AnalysisError {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            AnalysisError::Embed(EmbedError::NumericalDivergence(_))
                | AnalysisError::Embed(EmbedError::DuplicatePointsDegenerate)
                | AnalysisError::Stats(StatsError::NonFiniteDispersion)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Within,
    Cross,
}

#[derive(Debug, Clone)]
pub struct AnalysisRequest {
    pub mode: Mode,
    /// Keep only records with this condition tag.
    pub condition: Option<String>,
    /// Cross mode only. Defaults to every sorted pair of distinct cameras.
    pub camera_pair: Option<(String, String)>,
    pub config: AnalysisConfig,
}

impl AnalysisRequest {
    pub fn new(mode: Mode, config: AnalysisConfig) -> Self {
        Self {
            mode,
            condition: None,
            camera_pair: None,
            config,
        }
    }
}

/// Serializes non-finite values as the strings `"inf"`, `"-inf"` and `"nan"`,
/// which JSON numbers cannot express.
pub fn serialize_extended_f64<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        serializer.serialize_f64(*value)
    } else if value.is_nan() {
        serializer.serialize_str("nan")
    } else if *value > 0.0 {
        serializer.serialize_str("inf")
    } else {
        serializer.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TestOutcome {
    Computed(TTestResult),
    NotApplicable { reason: String },
}

impl TestOutcome {
    pub fn result(&self) -> Option<&TTestResult> {
        match self {
            TestOutcome::Computed(r) => Some(r),
            TestOutcome::NotApplicable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityEntry {
    pub summary: SimilaritySummary,
    pub ttest: TestOutcome,
    /// Welch test on per-vehicle mean similarities, for comparison.
    pub ttest_vehicle_level: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub total: GroupCounts,
    pub by_condition: BTreeMap<String, GroupCounts>,
    pub by_camera: BTreeMap<String, GroupCounts>,
    pub dim: usize,
    pub records: usize,
}

impl DatasetSummary {
    pub fn of(dataset: &Dataset) -> Self {
        Self {
            total: dataset.counts(),
            by_condition: dataset.counts_by_condition(),
            by_camera: dataset.counts_by_camera(),
            dim: dataset.dim(),
            records: dataset.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingMeta {
    #[serde(flatten)]
    pub run: Embedding2D,
    pub n_points: usize,
    pub coordinates_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSection {
    /// Axis variances per ROI class on the joint embedding.
    pub roi: BTreeMap<String, VarianceReport>,
    /// Cross mode: within- versus between-vehicle scatter per pairing.
    pub intra_inter: Vec<IntraInterReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub mode: Mode,
    pub condition_filter: Option<String>,
    pub dataset_summary: DatasetSummary,
    /// Keyed by condition (within mode) or `cam_a|cam_b` (cross mode).
    pub similarity: BTreeMap<String, SimilarityEntry>,
    /// Keyed by ROI class; classes without records are absent.
    pub entropy: BTreeMap<String, EntropySummary>,
    pub embedding: EmbeddingMeta,
    pub cluster: ClusterSection,
}

impl AnalysisReport {
    /// Pretty JSON with object keys in sorted order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes to JSON");
        let mut text = serde_json::to_string_pretty(&value).expect("JSON value prints");
        text.push('\n');
        text
    }
}

/// Everything one analysis run produces.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    /// The dataset actually analyzed (after filtering).
    pub dataset: Dataset,
    pub embedding: Embedding2D,
}

pub const COORDINATES_FILE: &str = "embedding.csv";

pub fn analyze(dataset: &Dataset, request: &AnalysisRequest) -> Result<Analysis, AnalysisError> {
    let config = &request.config;
    config.validate()?;
    let dataset = match &request.condition {
        Some(tag) => dataset.filter(|r| &r.condition == tag)?,
        None => dataset.clone(),
    };

    let scopes = scopes_for(&dataset, request)?;
    let mut similarity = BTreeMap::new();
    for (key, subset, scope) in &scopes {
        let summary = similarity::summarize_scoped(subset, scope)?;
        let ttest = match stats::hypothesis_test(&summary, config) {
            Ok(r) => TestOutcome::Computed(r),
            Err(StatsError::DegenerateVariance) => TestOutcome::NotApplicable {
                reason: StatsError::DegenerateVariance.to_string(),
            },
            Err(e) => return Err(e.into()),
        };
        let ttest_vehicle_level = match stats::vehicle_level_test(&summary, config) {
            Ok(r) => TestOutcome::Computed(r),
            Err(e) => TestOutcome::NotApplicable {
                reason: e.to_string(),
            },
        };
        similarity.insert(
            key.clone(),
            SimilarityEntry {
                summary,
                ttest,
                ttest_vehicle_level,
            },
        );
    }

    let mut entropy = BTreeMap::new();
    for roi in [RoiFlag::Inside, RoiFlag::Outside] {
        match stats::entropy_summary(&dataset, roi, config) {
            Ok(summary) => {
                entropy.insert(roi.label().to_string(), summary);
            }
            Err(StatsError::EmptySelection(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }

    let affinities = embed::calibrate_affinities(&dataset.features(), config.tsne_perplexity)?;
    let embedding = embed::run_tsne(&affinities, config)?;

    let mut roi_variance = BTreeMap::new();
    for roi in [RoiFlag::Inside, RoiFlag::Outside] {
        let mask: Vec<bool> = dataset.records().iter().map(|r| r.roi == roi).collect();
        match VarianceReport::compute(roi.label(), &embedding.z, &mask) {
            Ok(report) => {
                roi_variance.insert(roi.label().to_string(), report);
            }
            Err(ClusterError::TooFewPoints(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }

    let mut intra_inter = Vec::new();
    if request.mode == Mode::Cross {
        for (_, _, scope) in &scopes {
            if let PairScope::CrossCamera { first, second } = scope {
                for (name, second_roi) in [("inROI", RoiFlag::Inside), ("outROI", RoiFlag::Outside)] {
                    let (points, labels): (Vec<[f64; 2]>, Vec<&str>) = dataset
                        .records()
                        .iter()
                        .zip(&embedding.z)
                        .filter(|(r, _)| {
                            (r.camera_id == *first && r.roi == RoiFlag::Inside)
                                || (r.camera_id == *second && r.roi == second_roi)
                        })
                        .map(|(r, z)| (*z, r.vehicle_id.as_str()))
                        .unzip();
                    intra_inter.push(clustermetrics::intra_inter(
                        &points,
                        &labels,
                        format!("{name}-cross-camera {first}|{second}"),
                    )?);
                }
            }
        }
    }

    let report = AnalysisReport {
        config: config.clone(),
        mode: request.mode,
        condition_filter: request.condition.clone(),
        dataset_summary: DatasetSummary::of(&dataset),
        similarity,
        entropy,
        embedding: EmbeddingMeta {
            run: embedding.clone(),
            n_points: embedding.z.len(),
            coordinates_file: COORDINATES_FILE.to_string(),
        },
        cluster: ClusterSection {
            roi: roi_variance,
            intra_inter,
        },
    };
    Ok(Analysis {
        report,
        dataset,
        embedding,
    })
}

type Scope = (String, Dataset, PairScope);

fn scopes_for(dataset: &Dataset, request: &AnalysisRequest) -> Result<Vec<Scope>, AnalysisError> {
    match request.mode {
        Mode::Within => dataset
            .conditions()
            .into_iter()
            .map(|tag| {
                let subset = dataset.filter(|r| r.condition == tag)?;
                Ok((tag, subset, PairScope::Within))
            })
            .collect(),
        Mode::Cross => {
            let cameras = dataset.cameras();
            if cameras.len() < 2 {
                return Err(AnalysisError::TooFewCameras(cameras));
            }
            let pairs = match &request.camera_pair {
                Some((a, b)) => {
                    for cam in [a, b] {
                        if !cameras.contains(cam) {
                            return Err(AnalysisError::UnknownCamera(cam.clone()));
                        }
                    }
                    vec![(a.clone(), b.clone())]
                }
                None => {
                    let mut pairs = Vec::new();
                    for (k, a) in cameras.iter().enumerate() {
                        for b in &cameras[k + 1..] {
                            pairs.push((a.clone(), b.clone()));
                        }
                    }
                    pairs
                }
            };
            Ok(pairs
                .into_iter()
                .map(|(first, second)| {
                    let scope = PairScope::CrossCamera { first, second };
                    (scope.label(), dataset.clone(), scope)
                })
                .collect())
        }
    }
}

/// `index,z1,z2` rows in record order.
pub fn embedding_csv(z: &[[f64; 2]]) -> String {
    let mut out = String::from("index,z1,z2\n");
    for (i, p) in z.iter().enumerate() {
        out.push_str(&format!("{i},{:?},{:?}\n", p[0], p[1]));
    }
    out
}

/// Figure file names and their SVG contents.
pub fn figures(analysis: &Analysis) -> Vec<(&'static str, String)> {
    let report = &analysis.report;
    let group_of: Vec<usize> = analysis
        .dataset
        .records()
        .iter()
        .map(|r| match r.roi {
            RoiFlag::Inside => 0,
            RoiFlag::Outside => 1,
        })
        .collect();
    let scatter = svg::scatter(
        "2-D t-SNE of features by ROI class",
        &analysis.embedding.z,
        &group_of,
        &[("in-ROI", svg::INSIDE_COLOR), ("out-ROI", svg::OUTSIDE_COLOR)],
    );

    let keys: Vec<String> = report.similarity.keys().cloned().collect();
    let entries: Vec<&SimilarityEntry> = report.similarity.values().collect();
    let stars: Vec<bool> = entries
        .iter()
        .map(|e| e.ttest.result().is_some_and(|r| r.significant))
        .collect();
    let similarity = svg::bar_chart(
        "Mean cosine similarity (* significant)",
        "cosine similarity",
        &keys,
        &[
            svg::Series {
                name: "in-in",
                color: svg::INSIDE_COLOR,
                values: entries.iter().map(|e| e.summary.mu_inside).collect(),
                errors: Some(entries.iter().map(|e| e.summary.sigma_inside).collect()),
            },
            svg::Series {
                name: "in-out",
                color: svg::OUTSIDE_COLOR,
                values: entries.iter().map(|e| e.summary.mu_cross).collect(),
                errors: Some(entries.iter().map(|e| e.summary.sigma_cross).collect()),
            },
        ],
        &stars,
    );

    let roi_value = |map_value: Option<f64>| map_value.unwrap_or(0.0);
    let entropy = svg::bar_chart(
        "Average information entropy",
        "entropy (bits)",
        &["entropy".to_string()],
        &[
            svg::Series {
                name: "in-ROI",
                color: svg::INSIDE_COLOR,
                values: vec![roi_value(report.entropy.get("inside").map(|e| e.mean_entropy))],
                errors: None,
            },
            svg::Series {
                name: "out-ROI",
                color: svg::OUTSIDE_COLOR,
                values: vec![roi_value(report.entropy.get("outside").map(|e| e.mean_entropy))],
                errors: None,
            },
        ],
        &[],
    );

    let cluster = |roi: &str| report.cluster.roi.get(roi);
    let variance = svg::bar_chart(
        "Clustering variance of the embedding",
        "variance",
        &["rmse".to_string(), "total variance".to_string()],
        &[
            svg::Series {
                name: "in-ROI",
                color: svg::INSIDE_COLOR,
                values: vec![
                    roi_value(cluster("inside").map(|c| c.rmse)),
                    roi_value(cluster("inside").map(|c| c.total_variance)),
                ],
                errors: None,
            },
            svg::Series {
                name: "out-ROI",
                color: svg::OUTSIDE_COLOR,
                values: vec![
                    roi_value(cluster("outside").map(|c| c.rmse)),
                    roi_value(cluster("outside").map(|c| c.total_variance)),
                ],
                errors: None,
            },
        ],
        &[],
    );

    vec![
        ("tsne_scatter.svg", scatter),
        ("similarity.svg", similarity),
        ("entropy.svg", entropy),
        ("cluster_variance.svg", variance),
    ]
}

pub fn write_outputs(analysis: &Analysis, out_dir: &Path) -> Result<(), AnalysisError> {
    fs::create_dir_all(out_dir.join("figures"))?;
    fs::write(out_dir.join("report.json"), analysis.report.to_json())?;
    fs::write(out_dir.join(COORDINATES_FILE), embedding_csv(&analysis.embedding.z))?;
    for (name, contents) in figures(analysis) {
        fs::write(out_dir.join("figures").join(name), contents)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticSpec};

    fn small() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_vehicles: 6,
            images_inside_per_vehicle: 4,
            images_outside_per_vehicle: 4,
            dim: 8,
            sigma_inside: 0.05,
            sigma_outside: 0.3,
            seed: 3,
            n_cameras: 2,
        })
        .unwrap()
    }

    fn quick() -> AnalysisConfig {
        AnalysisConfig {
            tsne_perplexity: 5.0,
            tsne_iterations: 300,
            ..AnalysisConfig::default()
        }
    }

    #[test]
    fn within_report_has_every_section() {
        let analysis = analyze(&small(), &AnalysisRequest::new(Mode::Within, quick())).unwrap();
        let r = &analysis.report;
        assert_eq!(r.similarity.keys().collect::<Vec<_>>(), vec!["synthetic"]);
        assert!(r.similarity["synthetic"].ttest.result().unwrap().significant);
        assert_eq!(r.entropy.len(), 2);
        assert_eq!(r.cluster.roi.len(), 2);
        assert!(r.cluster.intra_inter.is_empty());
        assert_eq!(r.embedding.n_points, 48);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["config"]["alpha"], 0.05);
        assert_eq!(json["similarity"]["synthetic"]["ttest"]["status"], "computed");
        assert!(json["embedding"]["kl_final"].is_number());
    }

    #[test]
    fn cross_report_pairs_cameras() {
        let analysis = analyze(&small(), &AnalysisRequest::new(Mode::Cross, quick())).unwrap();
        let r = &analysis.report;
        assert_eq!(r.similarity.keys().collect::<Vec<_>>(), vec!["cam1|cam2"]);
        assert_eq!(r.cluster.intra_inter.len(), 2);
        for ii in &r.cluster.intra_inter {
            assert!(ii.intra_class < ii.inter_class, "{ii:?}");
        }

        let mut request = AnalysisRequest::new(Mode::Cross, quick());
        request.camera_pair = Some(("cam1".into(), "cam9".into()));
        assert!(matches!(
            analyze(&small(), &request),
            Err(AnalysisError::UnknownCamera(c)) if c == "cam9"
        ));
    }

    #[test]
    fn cross_mode_needs_two_cameras() {
        let ds = small().filter(|r| r.camera_id == "cam1").unwrap();
        assert!(matches!(
            analyze(&ds, &AnalysisRequest::new(Mode::Cross, quick())),
            Err(AnalysisError::TooFewCameras(_))
        ));
    }

    #[test]
    fn extended_floats_serialize_as_strings() {
        #[derive(Serialize)]
        struct W(#[serde(serialize_with = "serialize_extended_f64")] f64);
        assert_eq!(serde_json::to_string(&W(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&W(f64::NEG_INFINITY)).unwrap(), "\"-inf\"");
        assert_eq!(serde_json::to_string(&W(1.5)).unwrap(), "1.5");
    }

    #[test]
    fn embedding_csv_layout() {
        assert_eq!(
            embedding_csv(&[[1.0, -0.5], [0.25, 3.0]]),
            "index,z1,z2\n0,1.0,-0.5\n1,0.25,3.0\n"
        );
    }
}
