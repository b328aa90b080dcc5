//! Exact t-SNE.
//!
//! Affinities are calibrated per point by bisection on the Gaussian precision
//! until the conditional distribution reaches the target perplexity, then
//! symmetrized into joint probabilities. The 2-D embedding is optimized with
//! momentum gradient descent (with per-coordinate adaptive gains) on the KL
//! divergence under a Cauchy kernel.
//!
//! Row work is spread over rayon workers, but each row is reduced
//! sequentially and row totals are summed in index order, so outputs are
//! bit-identical for any thread count.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{AnalysisConfig, ConfigError};
use crate::rng::GaussianRng;

const PERPLEXITY_TOL: f64 = 1e-7;
const MAX_BISECTION_STEPS: usize = 200;
const INIT_SCALE: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("t-SNE needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {perplexity} must be positive and below n - 1 = {limit}")]
    PerplexityTooLarge { perplexity: f64, limit: usize },
    #[error("all points coincide; affinities are undefined")]
    DuplicatePointsDegenerate,
    #[error("input rows have inconsistent dimensions")]
    RaggedInput,
    #[error("shape mismatch: affinities cover {expected} points, embedding has {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("optimization diverged (non-finite coordinates) at iteration {0}")]
    NumericalDivergence(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Symmetric joint probabilities over point pairs, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    p: Vec<f64>,
    /// Gaussian precision `1 / (2 sigma_i^2)` chosen for each row.
    pub precisions: Vec<f64>,
    /// Perplexity each conditional row actually reached.
    pub row_perplexity: Vec<f64>,
}

impl AffinityMatrix {
    /// Builds a matrix from raw joint probabilities. The caller is
    /// responsible for symmetry and normalization.
    pub fn from_joint(n: usize, p: Vec<f64>) -> Result<Self, EmbedError> {
        if p.len() != n * n {
            return Err(EmbedError::ShapeMismatch {
                expected: n,
                found: (p.len() as f64).sqrt() as usize,
            });
        }
        Ok(Self {
            n,
            p,
            precisions: Vec::new(),
            row_perplexity: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Conditional `p_{j|i}` rows before symmetrization.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinities {
    pub n: usize,
    pub p: Vec<f64>,
    pub precisions: Vec<f64>,
    pub row_perplexity: Vec<f64>,
}

pub fn squared_distances<R: AsRef<[f64]> + Sync>(rows: &[R]) -> Result<Vec<f64>, EmbedError> {
    let n = rows.len();
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    if rows.iter().any(|r| r.as_ref().len() != dim) {
        return Err(EmbedError::RaggedInput);
    }
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        let a = rows[i].as_ref();
        for (j, out) in row.iter_mut().enumerate() {
            if i != j {
                let b = rows[j].as_ref();
                *out = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            }
        }
    });
    Ok(d)
}

pub fn conditional_affinities<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    perplexity: f64,
) -> Result<ConditionalAffinities, EmbedError> {
    let n = rows.len();
    if n < 3 {
        return Err(EmbedError::TooFewPoints(n));
    }
    if !(perplexity > 0.0 && perplexity < (n - 1) as f64) {
        return Err(EmbedError::PerplexityTooLarge {
            perplexity,
            limit: n - 1,
        });
    }
    let d = squared_distances(rows)?;
    if d.iter().all(|&x| x == 0.0) {
        return Err(EmbedError::DuplicatePointsDegenerate);
    }

    let mut p = vec![0.0; n * n];
    let calibrated: Vec<(f64, f64)> = p
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| calibrate_row(&d[i * n..(i + 1) * n], i, perplexity, row))
        .collect();
    let (precisions, row_perplexity) = calibrated.into_iter().unzip();
    Ok(ConditionalAffinities {
        n,
        p,
        precisions,
        row_perplexity,
    })
}

/// Fills `out` with the conditional distribution of row `i` and returns the
/// chosen precision and the perplexity reached.
fn calibrate_row(dist: &[f64], i: usize, target: f64, out: &mut [f64]) -> (f64, f64) {
    let others = || dist.iter().enumerate().filter(move |&(j, _)| j != i).map(|(_, &x)| x);
    let d_min = others().fold(f64::INFINITY, f64::min);
    let spread = others().fold(0.0f64, |m, x| m.max(x - d_min));

    // Perplexity of the row at precision exp(log_beta); distances are
    // shifted by their minimum so the largest weight is exactly 1.
    let evaluate = |log_beta: f64, out: &mut [f64]| -> f64 {
        let beta = log_beta.exp();
        let mut z = 0.0;
        let mut weighted = 0.0;
        for (j, (w, &dj)) in out.iter_mut().zip(dist).enumerate() {
            if j == i {
                *w = 0.0;
                continue;
            }
            let shifted = dj - d_min;
            *w = (-beta * shifted).exp();
            z += *w;
            weighted += *w * shifted;
        }
        for w in out.iter_mut() {
            *w /= z;
        }
        (z.ln() + beta * weighted / z).exp()
    };

    if spread == 0.0 {
        // Equidistant neighbours: every precision gives the uniform row.
        let perp = evaluate(0.0, out);
        return (1.0, perp);
    }
    let center = -spread.ln();
    let (mut lo, mut hi) = (center - 50.0, center + 50.0);
    let mut log_beta = center;
    let mut perp = evaluate(log_beta, out);
    for _ in 0..MAX_BISECTION_STEPS {
        if (perp - target).abs() < PERPLEXITY_TOL {
            break;
        }
        // Perplexity falls as the precision grows.
        if perp > target {
            lo = log_beta;
        } else {
            hi = log_beta;
        }
        log_beta = 0.5 * (lo + hi);
        perp = evaluate(log_beta, out);
    }
    (log_beta.exp(), perp)
}

/// Perplexity-calibrated joint affinities `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn calibrate_affinities<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    perplexity: f64,
) -> Result<AffinityMatrix, EmbedError> {
    let cond = conditional_affinities(rows, perplexity)?;
    let n = cond.n;
    let scale = 2.0 * n as f64;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (cond.p[i * n + j] + cond.p[j * n + i]) / scale;
            p[i * n + j] = v;
            p[j * n + i] = v;
        }
    }
    Ok(AffinityMatrix {
        n,
        p,
        precisions: cond.precisions,
        row_perplexity: cond.row_perplexity,
    })
}

/// Unnormalized Cauchy kernel `1 / (1 + |z_i - z_j|^2)` with a zero
/// diagonal, plus its total.
fn cauchy_kernel(z: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = z.len();
    let mut q = vec![0.0; n * n];
    let row_sums: Vec<f64> = q
        .par_chunks_mut(n.max(1))
        .enumerate()
        .map(|(i, row)| {
            let mut sum = 0.0;
            for (j, out) in row.iter_mut().enumerate() {
                if i != j {
                    let dx = z[i][0] - z[j][0];
                    let dy = z[i][1] - z[j][1];
                    *out = 1.0 / (1.0 + dx * dx + dy * dy);
                    sum += *out;
                }
            }
            sum
        })
        .collect();
    (q, row_sums.iter().sum())
}

fn check_shape(p: &AffinityMatrix, z: &[[f64; 2]]) -> Result<(), EmbedError> {
    if p.n != z.len() {
        return Err(EmbedError::ShapeMismatch {
            expected: p.n,
            found: z.len(),
        });
    }
    Ok(())
}

/// `KL(P || Q)` summed over pairs with `p_ij > 0`.
pub fn kl_divergence(p: &AffinityMatrix, z: &[[f64; 2]]) -> Result<f64, EmbedError> {
    check_shape(p, z)?;
    let n = p.n;
    let (q, total) = cauchy_kernel(z);
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                let pij = p.p[i * n + j];
                if pij > 0.0 {
                    acc += pij * (pij * total / q[i * n + j]).ln();
                }
            }
            acc
        })
        .collect();
    Ok(rows.iter().sum::<f64>().max(0.0))
}

/// Gradient of `KL(exaggeration * P || Q)` with respect to each embedded
/// point: `4 sum_j (e p_ij - q_ij) (1 + |z_i - z_j|^2)^-1 (z_i - z_j)`.
pub fn kl_gradient(
    p: &AffinityMatrix,
    z: &[[f64; 2]],
    exaggeration: f64,
) -> Result<Vec<[f64; 2]>, EmbedError> {
    check_shape(p, z)?;
    Ok(gradient(p, z, exaggeration))
}

fn gradient(p: &AffinityMatrix, z: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = p.n;
    let (kernel, total) = cauchy_kernel(z);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0, 0.0];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = kernel[i * n + j];
                let coeff = (exaggeration * p.p[i * n + j] - k / total) * k;
                g[0] += coeff * (z[i][0] - z[j][0]);
                g[1] += coeff * (z[i][1] - z[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding2D {
    #[serde(skip)]
    pub z: Vec<[f64; 2]>,
    pub kl_initial: f64,
    pub kl_final: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

/// Seeded isotropic Gaussian start with standard deviation 1e-4.
pub fn initial_embedding(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = GaussianRng::new(seed);
    (0..n)
        .map(|_| {
            let x = rng.standard_normal() * INIT_SCALE;
            let y = rng.standard_normal() * INIT_SCALE;
            [x, y]
        })
        .collect()
}

pub fn run_tsne(p: &AffinityMatrix, config: &AnalysisConfig) -> Result<Embedding2D, EmbedError> {
    config.validate()?;
    let n = p.n;
    if n < 3 {
        return Err(EmbedError::TooFewPoints(n));
    }
    let mut z = initial_embedding(n, config.rng_seed);
    let kl_initial = kl_divergence(p, &z)?;
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    for iteration in 0..config.tsne_iterations {
        let early = iteration < config.tsne_exaggeration_iterations;
        let (exaggeration, momentum) = if early {
            (config.tsne_early_exaggeration, config.tsne_momentum_initial)
        } else {
            (1.0, config.tsne_momentum_final)
        };
        let grad = gradient(p, &z, exaggeration);
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                let gain = &mut gains[i][d];
                *gain = if (g > 0.0) != (update[i][d] > 0.0) {
                    *gain + 0.2
                } else {
                    (*gain * 0.8).max(MIN_GAIN)
                };
                update[i][d] = momentum * update[i][d] - config.tsne_learning_rate * *gain * g;
                z[i][d] += update[i][d];
            }
        }
        center(&mut z);
        if z.iter().flatten().any(|x| !x.is_finite()) {
            return Err(EmbedError::NumericalDivergence(iteration));
        }
    }

    Ok(Embedding2D {
        kl_final: kl_divergence(p, &z)?,
        z,
        kl_initial,
        iterations_run: config.tsne_iterations,
        seed: config.rng_seed,
    })
}

fn center(z: &mut [[f64; 2]]) {
    let n = z.len() as f64;
    let mut mean = [0.0, 0.0];
    for point in z.iter() {
        mean[0] += point[0];
        mean[1] += point[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    for point in z.iter_mut() {
        point[0] -= mean[0];
        point[1] -= mean[1];
    }
}
