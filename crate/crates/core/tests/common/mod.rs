//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use roi_consistency::rng::GaussianRng;
use roi_consistency::{Dataset, FeatureRecord, RoiFlag};

pub fn naive_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

pub struct NaiveSummary {
    pub mu_inside: f64,
    pub sigma_inside: f64,
    pub mu_cross: f64,
    pub sigma_cross: f64,
    pub n_vehicles_inside: usize,
    pub n_vehicles_cross: usize,
}

/// Materializes every record pair of the dataset, keeps same-vehicle pairs
/// by ROI combination, and evaluates the vehicle-averaged mean and the
/// global-mean-centered dispersion directly.
pub fn naive_summary(records: &[FeatureRecord]) -> Option<NaiveSummary> {
    let mut inside: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut cross: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for i in 0..records.len() {
        for j in 0..records.len() {
            if i == j || records[i].vehicle_id != records[j].vehicle_id {
                continue;
            }
            let s = naive_cosine(&records[i].feature, &records[j].feature);
            match (records[i].roi, records[j].roi) {
                (RoiFlag::Inside, RoiFlag::Inside) if i < j => {
                    inside.entry(&records[i].vehicle_id).or_default().push(s)
                }
                (RoiFlag::Inside, RoiFlag::Outside) => {
                    cross.entry(&records[i].vehicle_id).or_default().push(s)
                }
                _ => {}
            }
        }
    }
    let agg = |groups: &BTreeMap<&str, Vec<f64>>| -> Option<(f64, f64, usize)> {
        if groups.is_empty() {
            return None;
        }
        let n = groups.len() as f64;
        let mu = groups
            .values()
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .sum::<f64>()
            / n;
        let var = groups
            .values()
            .map(|s| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / s.len() as f64)
            .sum::<f64>()
            / n;
        Some((mu, var.sqrt(), groups.len()))
    };
    let (mu_inside, sigma_inside, n_vehicles_inside) = agg(&inside)?;
    let (mu_cross, sigma_cross, n_vehicles_cross) = agg(&cross)?;
    Some(NaiveSummary {
        mu_inside,
        sigma_inside,
        mu_cross,
        sigma_cross,
        n_vehicles_inside,
        n_vehicles_cross,
    })
}

/// Random labeled dataset with at most `max_vehicles` vehicles, at most
/// `max_records` records each, and dimension at most `max_dim`.
pub fn random_dataset(seed: u64, max_vehicles: usize, max_records: usize, max_dim: usize) -> Dataset {
    let mut rng = GaussianRng::new(seed);
    let pick = |rng: &mut GaussianRng, hi: usize| 1 + (rng.uniform() * hi as f64) as usize % hi;
    let dim = pick(&mut rng, max_dim);
    let n_vehicles = pick(&mut rng, max_vehicles);
    let mut records = Vec::new();
    for v in 0..n_vehicles {
        let n = pick(&mut rng, max_records);
        for k in 0..n {
            let feature = loop {
                let f: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
                if f.iter().any(|&x| x != 0.0) {
                    break f;
                }
            };
            records.push(FeatureRecord {
                vehicle_id: format!("veh{v}"),
                camera_id: if rng.uniform() < 0.5 { "c1" } else { "c2" }.to_string(),
                condition: "rand".to_string(),
                frame_index: k as u64,
                roi: if rng.uniform() < 0.5 {
                    RoiFlag::Inside
                } else {
                    RoiFlag::Outside
                },
                feature,
            });
        }
    }
    // Shuffle so vehicles interleave in record order.
    for i in (1..records.len()).rev() {
        let j = (rng.uniform() * (i + 1) as f64) as usize;
        records.swap(i, j.min(i));
    }
    Dataset::new(records).expect("valid random dataset")
}

pub fn gaussian_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = GaussianRng::new(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.standard_normal()).collect())
        .collect()
}

/// Brute-force mean silhouette coefficient.
pub fn naive_silhouette(z: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = z.len();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let d = |i: usize, j: usize| ((z[i][0] - z[j][0]).powi(2) + (z[i][1] - z[j][1]).powi(2)).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += d(i, j);
                counts[labels[j]] += 1;
            }
        }
        if counts[labels[i]] == 0 {
            continue;
        }
        let a = sums[labels[i]] / counts[labels[i]] as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Population variances per axis, two-pass.
pub fn naive_axis_variances(points: &[[f64; 2]]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    (
        points.iter().map(|p| (p[0] - mx).powi(2)).sum::<f64>() / n,
        points.iter().map(|p| (p[1] - my).powi(2)).sum::<f64>() / n,
    )
}
