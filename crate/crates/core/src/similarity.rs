//! Cosine-similarity pair statistics.
//!
//! For every vehicle, two kinds of same-identity pairs are scored: pairs of
//! crops both inside the ROI, and cross pairs with one crop inside and one
//! outside. Per-vehicle means are averaged with equal weight per vehicle, and
//! the dispersion is measured around the global mean:
//!
//! ```text
//! mu    = 1/N  sum_v ( 1/n_v sum_j s_vj )
//! sigma = sqrt( 1/N sum_v ( 1/n_v sum_j (s_vj - mu)^2 ) )
//! ```
//!
//! The per-vehicle-centered dispersion is reported alongside as
//! `sigma_centered_*`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Dataset, VehicleRecords};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("unknown vehicle {0:?}")]
    UnknownVehicle(String),
    #[error("no vehicle has {0}; the {1} aggregate is undefined")]
    InsufficientPairs(&'static str, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairKind {
    InsideInside,
    InsideOutside,
}

/// Which records of a vehicle may form a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairScope {
    /// Any two records of the vehicle, regardless of camera.
    Within,
    /// Inside pairs join a `first`-camera inside crop with a `second`-camera
    /// inside crop; cross pairs join a `first`-camera inside crop with a
    /// `second`-camera outside crop.
    CrossCamera { first: String, second: String },
}

impl PairScope {
    pub fn label(&self) -> String {
        match self {
            PairScope::Within => "within".to_string(),
            PairScope::CrossCamera { first, second } => format!("{first}|{second}"),
        }
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Same-vehicle pairs of the given kind, within-camera scope.
pub fn enumerate_pairs(
    dataset: &Dataset,
    vehicle_id: &str,
    kind: PairKind,
) -> Result<Vec<(usize, usize)>, SimilarityError> {
    enumerate_scoped_pairs(dataset, vehicle_id, kind, &PairScope::Within)
}

/// Same-vehicle pairs of the given kind under `scope`, sorted
/// lexicographically by (first index, second index).
pub fn enumerate_scoped_pairs(
    dataset: &Dataset,
    vehicle_id: &str,
    kind: PairKind,
    scope: &PairScope,
) -> Result<Vec<(usize, usize)>, SimilarityError> {
    let vehicle = dataset
        .vehicle(vehicle_id)
        .ok_or_else(|| SimilarityError::UnknownVehicle(vehicle_id.to_string()))?;
    Ok(pairs_of(dataset, vehicle, kind, scope))
}

fn pairs_of(
    dataset: &Dataset,
    vehicle: &VehicleRecords,
    kind: PairKind,
    scope: &PairScope,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    match scope {
        PairScope::Within => match kind {
            PairKind::InsideInside => {
                for (k, &a) in vehicle.inside.iter().enumerate() {
                    for &b in &vehicle.inside[k + 1..] {
                        pairs.push((a, b));
                    }
                }
            }
            PairKind::InsideOutside => {
                for &a in &vehicle.inside {
                    for &b in &vehicle.outside {
                        pairs.push((a, b));
                    }
                }
            }
        },
        PairScope::CrossCamera { first, second } => {
            let on = |indices: &[usize], camera: &str| -> Vec<usize> {
                indices
                    .iter()
                    .copied()
                    .filter(|&i| dataset.record(i).camera_id == camera)
                    .collect()
            };
            let left = on(&vehicle.inside, first);
            let right = match kind {
                PairKind::InsideInside => on(&vehicle.inside, second),
                PairKind::InsideOutside => on(&vehicle.outside, second),
            };
            for &a in &left {
                for &b in &right {
                    pairs.push((a, b));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Per-vehicle pair counts and mean similarities. A mean is `None` when the
/// vehicle has no pair of that kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehiclePairStats {
    pub vehicle_id: String,
    pub n_inside: usize,
    pub n_cross: usize,
    pub mean_inside: Option<f64>,
    pub mean_cross: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilaritySummary {
    /// Pair-eligibility scope the summary was computed under.
    pub scope: String,
    pub mu_inside: f64,
    pub sigma_inside: f64,
    pub mu_cross: f64,
    pub sigma_cross: f64,
    /// Root mean over vehicles of the per-vehicle-centered pair variance.
    pub sigma_centered_inside: f64,
    pub sigma_centered_cross: f64,
    pub n_vehicles_inside: usize,
    pub n_vehicles_cross: usize,
    /// Unique vehicles in scope; the `N` of the t statistic.
    pub n_vehicles: usize,
    pub n_pairs_inside: usize,
    pub n_pairs_cross: usize,
    pub per_vehicle: Vec<VehiclePairStats>,
}

impl SimilaritySummary {
    /// Per-vehicle mean similarities of one pair kind, in vehicle order.
    pub fn vehicle_means(&self, kind: PairKind) -> Vec<f64> {
        self.per_vehicle
            .iter()
            .filter_map(|v| match kind {
                PairKind::InsideInside => v.mean_inside,
                PairKind::InsideOutside => v.mean_cross,
            })
            .collect()
    }
}

pub fn summarize(dataset: &Dataset) -> Result<SimilaritySummary, SimilarityError> {
    summarize_scoped(dataset, &PairScope::Within)
}

/// Pair similarities of one vehicle, sorted ascending so every reduction over
/// them is independent of record order.
struct VehicleSims {
    vehicle_id: String,
    inside: Vec<f64>,
    cross: Vec<f64>,
}

pub fn summarize_scoped(
    dataset: &Dataset,
    scope: &PairScope,
) -> Result<SimilaritySummary, SimilarityError> {
    let vehicles: Vec<(&String, &VehicleRecords)> = match scope {
        PairScope::Within => dataset.vehicle_index().iter().collect(),
        PairScope::CrossCamera { first, second } => dataset
            .vehicle_index()
            .iter()
            .filter(|(_, v)| {
                let cameras: BTreeSet<&str> = v
                    .inside
                    .iter()
                    .chain(&v.outside)
                    .map(|&i| dataset.record(i).camera_id.as_str())
                    .collect();
                cameras.contains(first.as_str()) && cameras.contains(second.as_str())
            })
            .collect(),
    };

    let sims: Vec<VehicleSims> = vehicles
        .par_iter()
        .map(|(id, v)| {
            let score = |kind| {
                let mut s: Vec<f64> = pairs_of(dataset, v, kind, scope)
                    .into_iter()
                    .map(|(a, b)| {
                        cosine_similarity(&dataset.record(a).feature, &dataset.record(b).feature)
                            .expect("dataset dimensions are uniform")
                    })
                    .collect();
                s.sort_by(f64::total_cmp);
                s
            };
            VehicleSims {
                vehicle_id: (*id).clone(),
                inside: score(PairKind::InsideInside),
                cross: score(PairKind::InsideOutside),
            }
        })
        .collect();

    let inside = aggregate(sims.iter().map(|v| v.inside.as_slice()))
        .ok_or(SimilarityError::InsufficientPairs("two inside-ROI records", "inside"))?;
    let cross = aggregate(sims.iter().map(|v| v.cross.as_slice())).ok_or(
        SimilarityError::InsufficientPairs("both inside- and outside-ROI records", "cross"),
    )?;

    let per_vehicle = sims
        .iter()
        .map(|v| VehiclePairStats {
            vehicle_id: v.vehicle_id.clone(),
            n_inside: v.inside.len(),
            n_cross: v.cross.len(),
            mean_inside: mean(&v.inside),
            mean_cross: mean(&v.cross),
        })
        .collect();

    Ok(SimilaritySummary {
        scope: scope.label(),
        mu_inside: inside.mu,
        sigma_inside: inside.sigma,
        mu_cross: cross.mu,
        sigma_cross: cross.sigma,
        sigma_centered_inside: inside.sigma_centered,
        sigma_centered_cross: cross.sigma_centered,
        n_vehicles_inside: inside.n_vehicles,
        n_vehicles_cross: cross.n_vehicles,
        n_vehicles: vehicles.len(),
        n_pairs_inside: inside.n_pairs,
        n_pairs_cross: cross.n_pairs,
        per_vehicle,
    })
}

struct Aggregate {
    mu: f64,
    sigma: f64,
    sigma_centered: f64,
    n_vehicles: usize,
    n_pairs: usize,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn mean_sq_dev(values: &[f64], center: f64) -> f64 {
    values.iter().map(|s| (s - center).powi(2)).sum::<f64>() / values.len() as f64
}

/// Vehicles without pairs are skipped; `None` when no vehicle has any.
fn aggregate<'a>(per_vehicle: impl Iterator<Item = &'a [f64]> + Clone) -> Option<Aggregate> {
    let groups: Vec<&[f64]> = per_vehicle.filter(|s| !s.is_empty()).collect();
    if groups.is_empty() {
        return None;
    }
    let n = groups.len() as f64;
    let means: Vec<f64> = groups.iter().map(|s| mean(s).expect("non-empty")).collect();
    let mu = means.iter().sum::<f64>() / n;
    let var = groups.iter().map(|s| mean_sq_dev(s, mu)).sum::<f64>() / n;
    let var_centered = groups
        .iter()
        .zip(&means)
        .map(|(s, &m)| mean_sq_dev(s, m))
        .sum::<f64>()
        / n;
    Some(Aggregate {
        mu,
        sigma: var.sqrt(),
        sigma_centered: var_centered.sqrt(),
        n_vehicles: groups.len(),
        n_pairs: groups.iter().map(|s| s.len()).sum(),
    })
}
