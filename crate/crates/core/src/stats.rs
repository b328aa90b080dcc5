//! One-sided t-test on the similarity aggregates and binned Shannon entropy
//! of feature values.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{AnalysisConfig, Dataset, RoiFlag};
use crate::similarity::{PairKind, SimilaritySummary};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degrees of freedom must be positive, got {0}")]
    NonPositiveDf(f64),
    #[error("t statistic needs at least 2 vehicles, got {0}")]
    TooFewVehicles(usize),
    #[error("both dispersions are zero and the means are equal; t is not applicable")]
    DegenerateVariance,
    #[error("dispersion values must be finite")]
    NonFiniteDispersion,
    #[error("no {0} records to compute entropy over")]
    EmptySelection(RoiFlag),
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast only on this side of the mean.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Survival function `P(T > t)` of Student's t distribution with `df`
/// degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64, StatsError> {
    if df.is_nan() || df <= 0.0 {
        return Err(StatsError::NonPositiveDf(df));
    }
    if t == f64::INFINITY {
        return Ok(0.0);
    }
    if t == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    let x = df / (df + t * t);
    let two_sided = regularized_incomplete_beta(x, 0.5 * df, 0.5);
    Ok(if t > 0.0 {
        0.5 * two_sided
    } else {
        1.0 - 0.5 * two_sided
    })
}

// ---------------------------------------------------------------------------
// Hypothesis test
// ---------------------------------------------------------------------------

/// `(mu_inside - mu_cross) / sqrt(sigma_inside^2/N + sigma_cross^2/N)` with a
/// single vehicle count `N` in both terms.
///
/// With both dispersions zero the statistic is reported as `+inf` or `-inf`
/// when the means differ, and as [`StatsError::DegenerateVariance`] when they
/// are equal.
pub fn t_statistic(summary: &SimilaritySummary, n: usize) -> Result<f64, StatsError> {
    if n < 2 {
        return Err(StatsError::TooFewVehicles(n));
    }
    if !(summary.sigma_inside.is_finite() && summary.sigma_cross.is_finite()) {
        return Err(StatsError::NonFiniteDispersion);
    }
    let diff = summary.mu_inside - summary.mu_cross;
    let n = n as f64;
    let se2 = summary.sigma_inside.powi(2) / n + summary.sigma_cross.powi(2) / n;
    if se2 == 0.0 {
        return if diff == 0.0 {
            Err(StatsError::DegenerateVariance)
        } else {
            Ok(diff.signum() * f64::INFINITY)
        };
    }
    Ok(diff / se2.sqrt())
}

/// Welch–Satterthwaite degrees of freedom for two groups with standard
/// deviations `s1`, `s2` and sizes `n1`, `n2`.
pub fn welch_df(s1: f64, n1: usize, s2: f64, n2: usize) -> f64 {
    let v1 = s1 * s1 / n1 as f64;
    let v2 = s2 * s2 / n2 as f64;
    let denom = v1 * v1 / (n1 as f64 - 1.0) + v2 * v2 / (n2 as f64 - 1.0);
    if denom == 0.0 {
        // Both groups have zero spread; fall back to the pooled count.
        return (n1 + n2) as f64 - 2.0;
    }
    (v1 + v2).powi(2) / denom
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTestResult {
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub t: f64,
    pub df: f64,
    pub p_one_sided: f64,
    pub significant: bool,
    pub alpha: f64,
}

/// One-sided test of `mu_inside > mu_cross` using the pair-level dispersions
/// and `N = summary.n_vehicles` for both groups.
pub fn hypothesis_test(
    summary: &SimilaritySummary,
    config: &AnalysisConfig,
) -> Result<TTestResult, StatsError> {
    let n = summary.n_vehicles;
    let t = t_statistic(summary, n)?;
    let df = welch_df(summary.sigma_inside, n, summary.sigma_cross, n);
    finish(t, df, config.alpha)
}

/// Conventional Welch test on the per-vehicle mean similarities, with sample
/// (n - 1) variances and each group's own vehicle count.
pub fn vehicle_level_test(
    summary: &SimilaritySummary,
    config: &AnalysisConfig,
) -> Result<TTestResult, StatsError> {
    let inside = summary.vehicle_means(PairKind::InsideInside);
    let cross = summary.vehicle_means(PairKind::InsideOutside);
    let (n1, n2) = (inside.len(), cross.len());
    if n1 < 2 || n2 < 2 {
        return Err(StatsError::TooFewVehicles(n1.min(n2)));
    }
    let (m1, s1) = mean_and_sample_sd(&inside);
    let (m2, s2) = mean_and_sample_sd(&cross);
    let se2 = s1 * s1 / n1 as f64 + s2 * s2 / n2 as f64;
    let diff = m1 - m2;
    let t = if se2 == 0.0 {
        if diff == 0.0 {
            return Err(StatsError::DegenerateVariance);
        }
        diff.signum() * f64::INFINITY
    } else {
        diff / se2.sqrt()
    };
    finish(t, welch_df(s1, n1, s2, n2), config.alpha)
}

fn mean_and_sample_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn finish(t: f64, df: f64, alpha: f64) -> Result<TTestResult, StatsError> {
    let p = student_t_sf(t, df)?;
    Ok(TTestResult {
        t,
        df,
        p_one_sided: p,
        significant: p < alpha,
        alpha,
    })
}

// ---------------------------------------------------------------------------
// Entropy
// ---------------------------------------------------------------------------

/// Shannon entropy of a discrete distribution given by bin counts. Empty
/// bins contribute nothing.
pub fn entropy_from_counts(counts: &[usize], log_base: f64) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let log = |p: f64| {
        if log_base == 2.0 {
            p.log2()
        } else {
            p.ln() / log_base.ln()
        }
    };
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * log(p)
        })
        .sum();
    h.max(0.0)
}

/// Equal-width histogram over `[min, max]` of `values`. The top edge is
/// folded into the last bin. A zero-width range puts everything in bin 0.
pub fn equal_width_histogram(values: &[f64], bins: usize) -> (Vec<usize>, f64, f64) {
    let mut counts = vec![0usize; bins];
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if values.is_empty() {
        return (counts, 0.0, 0.0);
    }
    let width = max - min;
    for &x in values {
        let bin = if width > 0.0 {
            (((x - min) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    (counts, min, max)
}

/// Entropy of `values` binned into `bins` equal-width bins over their range.
pub fn binned_entropy(values: &[f64], bins: usize, log_base: f64) -> f64 {
    let (counts, _, _) = equal_width_histogram(values, bins);
    entropy_from_counts(&counts, log_base)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySummary {
    pub roi: RoiFlag,
    pub per_vehicle_entropy: BTreeMap<String, f64>,
    pub mean_entropy: f64,
    pub bins: usize,
    pub log_base: f64,
    /// `[min, max]` of each vehicle's pooled values, i.e. the outer bin edges.
    pub bin_edges: BTreeMap<String, [f64; 2]>,
}

/// Per-vehicle entropy of all feature values (every record of the selected
/// ROI class, every dimension) pooled into one histogram, and the unweighted
/// mean over vehicles.
pub fn entropy_summary(
    dataset: &Dataset,
    roi: RoiFlag,
    config: &AnalysisConfig,
) -> Result<EntropySummary, StatsError> {
    let mut per_vehicle_entropy = BTreeMap::new();
    let mut bin_edges = BTreeMap::new();
    for (vehicle_id, records) in dataset.vehicle_index() {
        let indices = records.indices(roi);
        if indices.is_empty() {
            continue;
        }
        let pooled: Vec<f64> = indices
            .iter()
            .flat_map(|&i| dataset.record(i).feature.iter().copied())
            .collect();
        let (counts, min, max) = equal_width_histogram(&pooled, config.entropy_bins);
        per_vehicle_entropy.insert(
            vehicle_id.clone(),
            entropy_from_counts(&counts, config.entropy_log_base),
        );
        bin_edges.insert(vehicle_id.clone(), [min, max]);
    }
    if per_vehicle_entropy.is_empty() {
        return Err(StatsError::EmptySelection(roi));
    }
    let mean_entropy = per_vehicle_entropy.values().sum::<f64>() / per_vehicle_entropy.len() as f64;
    Ok(EntropySummary {
        roi,
        per_vehicle_entropy,
        mean_entropy,
        bins: config.entropy_bins,
        log_base: config.entropy_log_base,
        bin_edges,
    })
}
