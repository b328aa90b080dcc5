//! Scatter measures on a 2-D embedding.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("selection has {0} points, at least 2 are required")]
    TooFewPoints(usize),
    #[error("need at least two classes, got {0}")]
    SingleClass(usize),
    #[error("{points} points but {labels} labels or mask entries")]
    LengthMismatch { points: usize, labels: usize },
}

/// Population variance of each axis over the points selected by `mask`.
pub fn axis_variances(z: &[[f64; 2]], mask: &[bool]) -> Result<(f64, f64), ClusterError> {
    if z.len() != mask.len() {
        return Err(ClusterError::LengthMismatch {
            points: z.len(),
            labels: mask.len(),
        });
    }
    let selected: Vec<[f64; 2]> = z
        .iter()
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| *p)
        .collect();
    if selected.len() < 2 {
        return Err(ClusterError::TooFewPoints(selected.len()));
    }
    Ok(population_variances(&selected))
}

fn population_variances(points: &[[f64; 2]]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean = centroid(points);
    let (mut v1, mut v2) = (0.0, 0.0);
    for p in points {
        v1 += (p[0] - mean[0]).powi(2);
        v2 += (p[1] - mean[1]).powi(2);
    }
    (v1 / n, v2 / n)
}

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    [sx / n, sy / n]
}

/// Root mean square deviation of the two axis variances from their mean.
pub fn variance_rmse(var: (f64, f64)) -> f64 {
    let mu = (var.0 + var.1) / 2.0;
    (0.5 * ((var.0 - mu).powi(2) + (var.1 - mu).powi(2))).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub group: String,
    pub var_axes: [f64; 2],
    pub rmse: f64,
    /// Sum of the axis variances.
    pub total_variance: f64,
    pub n_points: usize,
}

impl VarianceReport {
    pub fn compute(
        group: impl Into<String>,
        z: &[[f64; 2]],
        mask: &[bool],
    ) -> Result<Self, ClusterError> {
        let var = axis_variances(z, mask)?;
        Ok(Self {
            group: group.into(),
            var_axes: [var.0, var.1],
            rmse: variance_rmse(var),
            total_variance: var.0 + var.1,
            n_points: mask.iter().filter(|&&m| m).count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntraInterReport {
    pub scope: String,
    /// Mean over classes of the within-class total variance.
    pub intra_class: f64,
    /// Total variance of the class centroids.
    pub inter_class: f64,
    pub n_classes: usize,
}

/// Within-class versus between-class scatter for labeled points. Classes are
/// visited in sorted label order.
pub fn intra_inter<L: AsRef<str>>(
    z: &[[f64; 2]],
    labels: &[L],
    scope: impl Into<String>,
) -> Result<IntraInterReport, ClusterError> {
    if z.len() != labels.len() {
        return Err(ClusterError::LengthMismatch {
            points: z.len(),
            labels: labels.len(),
        });
    }
    let mut classes: BTreeMap<&str, Vec<[f64; 2]>> = BTreeMap::new();
    for (p, label) in z.iter().zip(labels) {
        classes.entry(label.as_ref()).or_default().push(*p);
    }
    if classes.len() < 2 {
        return Err(ClusterError::SingleClass(classes.len()));
    }
    let k = classes.len() as f64;
    let intra = classes
        .values()
        .map(|pts| {
            let (a, b) = population_variances(pts);
            a + b
        })
        .sum::<f64>()
        / k;
    let centroids: Vec<[f64; 2]> = classes.values().map(|pts| centroid(pts)).collect();
    let (a, b) = population_variances(&centroids);
    Ok(IntraInterReport {
        scope: scope.into(),
        intra_class: intra,
        inter_class: a + b,
        n_classes: classes.len(),
    })
}

/// Mean silhouette coefficient of `labels` on `z` (Euclidean). Points in
/// singleton classes score 0.
pub fn silhouette_score<L: AsRef<str>>(z: &[[f64; 2]], labels: &[L]) -> Result<f64, ClusterError> {
    if z.len() != labels.len() {
        return Err(ClusterError::LengthMismatch {
            points: z.len(),
            labels: labels.len(),
        });
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        members.entry(label.as_ref()).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(ClusterError::SingleClass(members.len()));
    }
    let dist = |i: usize, j: usize| ((z[i][0] - z[j][0]).powi(2) + (z[i][1] - z[j][1]).powi(2)).sqrt();
    let mean_dist = |i: usize, group: &[usize]| -> f64 {
        let others: Vec<usize> = group.iter().copied().filter(|&j| j != i).collect();
        others.iter().map(|&j| dist(i, j)).sum::<f64>() / others.len() as f64
    };
    let mut total = 0.0;
    for (i, label) in labels.iter().enumerate() {
        let own = &members[label.as_ref()];
        if own.len() == 1 {
            continue;
        }
        let a = mean_dist(i, own);
        let b = members
            .iter()
            .filter(|(l, _)| **l != label.as_ref())
            .map(|(_, g)| mean_dist(i, g))
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / z.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_variance_examples() {
        let z = [[0.0, 0.0], [2.0, 0.0]];
        assert_eq!(axis_variances(&z, &[true, true]).unwrap(), (1.0, 0.0));
        let same = [[1.5, -2.0]; 5];
        assert_eq!(axis_variances(&same, &[true; 5]).unwrap(), (0.0, 0.0));
        assert_eq!(
            axis_variances(&z, &[true, false]),
            Err(ClusterError::TooFewPoints(1))
        );
        assert!(axis_variances(&z, &[true]).is_err());
    }

    #[test]
    fn mask_selects_subset() {
        let z = [[0.0, 0.0], [100.0, 100.0], [0.0, 4.0]];
        assert_eq!(axis_variances(&z, &[true, false, true]).unwrap(), (0.0, 4.0));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(variance_rmse((4.0, 2.0)), 1.0);
        assert_eq!(variance_rmse((3.3, 3.3)), 0.0);
        assert_eq!(variance_rmse((0.7, 5.1)), variance_rmse((5.1, 0.7)));
    }

    #[test]
    fn report_fields() {
        let z = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];
        let r = VarianceReport::compute("inside", &z, &[true; 4]).unwrap();
        assert_eq!(r.var_axes, [1.0, 1.0]);
        assert_eq!((r.rmse, r.total_variance, r.n_points), (0.0, 2.0, 4));
    }

    #[test]
    fn intra_inter_degenerate_cases() {
        let z = [[0.0, 0.0], [3.0, 4.0]];
        let r = intra_inter(&z, &["a", "b"], "test").unwrap();
        assert_eq!(r.intra_class, 0.0);
        // Centroids (0,0) and (3,4): variances 2.25 and 4.
        assert_eq!(r.inter_class, 6.25);

        let z = [[1.0, 1.0]; 4];
        let r = intra_inter(&z, &["a", "b", "a", "b"], "test").unwrap();
        assert_eq!((r.intra_class, r.inter_class), (0.0, 0.0));

        assert_eq!(
            intra_inter(&z, &["a"; 4], "test"),
            Err(ClusterError::SingleClass(1))
        );
    }

    #[test]
    fn tight_clusters_far_apart() {
        let mut z = Vec::new();
        let mut labels = Vec::new();
        for (label, cx) in [("a", 0.0), ("b", 10.0)] {
            for k in 0..5 {
                let t = k as f64 * 0.1;
                z.push([cx + t - 0.2, 0.1 * (k % 2) as f64]);
                labels.push(label);
            }
        }
        let r = intra_inter(&z, &labels, "test").unwrap();
        assert!(r.intra_class < r.inter_class);
        assert!((r.inter_class - 25.0).abs() < 1e-12);
        assert!(silhouette_score(&z, &labels).unwrap() > 0.95);
    }

    #[test]
    fn silhouette_of_mixed_labels_is_low() {
        let z = [[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]];
        let good = silhouette_score(&z, &["a", "a", "b", "b"]).unwrap();
        let bad = silhouette_score(&z, &["a", "b", "a", "b"]).unwrap();
        assert!(good > 0.9);
        assert!(bad < 0.0);
    }
}
