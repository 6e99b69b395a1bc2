//! Noisy replica detection from the running Hamming distances of `Y`.
//!
//! Consecutive columns of `Y` either are noisy copies of the same column of
//! `X` or not; their Hamming distance is then binomial with parameter `p1`
//! or `p0`. The two parameters are recovered from the first three sample
//! factorial moments and adjacencies below the midpoint threshold are
//! declared replicas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CategoricalDistribution, Matrix, ObfuscationChannel, RepetitionPattern};

/// Below this, `F2 - F1^2` is treated as zero variance.
pub const VARIANCE_TOLERANCE: f64 = 1e-12;

/// How many standard deviations of the chi-square statistic the observed
/// dispersion must exceed the single-binomial value by.
pub const DISPERSION_Z: f64 = 3.0;

/// `W_j`: number of rows where columns `j` and `j+1` of `Y` differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunningDistances {
    pub w: Vec<usize>,
    pub m: usize,
}

/// Moment estimate of the two-component binomial mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureEstimate {
    pub p0: f64,
    pub p1: f64,
    pub tau: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaDetection {
    pub distances: RunningDistances,
    pub estimate: MixtureEstimate,
    /// `flags[j]` is true iff columns `j` and `j+1` are replicas.
    pub flags: Vec<bool>,
}

pub fn running_hamming_distances(y: &Matrix) -> Result<RunningDistances> {
    if y.cols() < 2 {
        return Err(Error::TooFewColumns {
            needed: 2,
            got: y.cols(),
        });
    }
    let mut w = vec![0usize; y.cols() - 1];
    for row in y.iter_rows() {
        for (acc, pair) in w.iter_mut().zip(row.windows(2)) {
            *acc += usize::from(pair[0] != pair[1]);
        }
    }
    Ok(RunningDistances { w, m: y.rows() })
}

/// `F_k = mean_j prod_{i<k} (W_j - i) / (m - i)`.
pub fn factorial_moment(d: &RunningDistances, k: usize) -> f64 {
    let m = d.m as f64;
    let total: f64 =
        d.w.iter()
            .map(|&w| {
                let w = w as f64;
                (0..k)
                    .map(|i| (w - i as f64) / (m - i as f64))
                    .product::<f64>()
            })
            .sum();
    total / d.w.len() as f64
}

/// Index of dispersion `sum (W - mean)^2 / (mean (1 - mean/m))`, chi-square
/// with `N - 1` degrees of freedom when all `W_j` share one binomial law.
pub fn dispersion_statistic(d: &RunningDistances) -> f64 {
    let n = d.w.len() as f64;
    let mean = d.w.iter().sum::<usize>() as f64 / n;
    let var = mean * (1.0 - mean / d.m as f64);
    if var <= 0.0 {
        return 0.0;
    }
    d.w.iter().map(|&w| (w as f64 - mean).powi(2)).sum::<f64>() / var
}

pub fn estimate_mixture(d: &RunningDistances) -> Result<MixtureEstimate> {
    if d.w.len() < 3 {
        return Err(Error::TooFewColumns {
            needed: 4,
            got: d.w.len() + 1,
        });
    }
    if d.m < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 rows for three factorial moments, got {}",
            d.m
        )));
    }
    let f1 = factorial_moment(d, 1);
    let f2 = factorial_moment(d, 2);
    let f3 = factorial_moment(d, 3);
    let spread = f2 - f1 * f1;
    if spread <= VARIANCE_TOLERANCE {
        return Err(Error::DegenerateMixture(format!(
            "F2 - F1^2 = {spread:e} shows no mixture"
        )));
    }
    let dof = (d.w.len() - 1) as f64;
    let dispersion = dispersion_statistic(d);
    if dispersion < dof + DISPERSION_Z * (2.0 * dof).sqrt() {
        return Err(Error::DegenerateMixture(format!(
            "dispersion {dispersion:.1} consistent with a single binomial ({dof} dof)"
        )));
    }
    let u = (f3 - f1 * f2) / spread;
    let disc = u * u - 4.0 * u * f1 + 4.0 * f2;
    if disc < 0.0 {
        return Err(Error::DegenerateMixture(format!(
            "negative discriminant {disc:e}"
        )));
    }
    let root = disc.sqrt();
    let a = ((u + root) / 2.0).clamp(0.0, 1.0);
    let b = ((u - root) / 2.0).clamp(0.0, 1.0);
    let (p0, p1) = if a >= b { (a, b) } else { (b, a) };
    Ok(MixtureEstimate {
        p0,
        p1,
        tau: (p0 + p1) / 2.0,
        f1,
        f2,
        f3,
        u,
    })
}

/// Full detection with its intermediate quantities.
pub fn analyze_replicas(y: &Matrix) -> Result<ReplicaDetection> {
    if y.cols() < 4 {
        return Err(Error::TooFewColumns {
            needed: 4,
            got: y.cols(),
        });
    }
    let distances = running_hamming_distances(y)?;
    let estimate = estimate_mixture(&distances)?;
    let flags = flags_for(&distances, estimate.tau);
    Ok(ReplicaDetection {
        distances,
        estimate,
        flags,
    })
}

/// `W_j <= m tau` for every adjacency.
pub fn flags_for(d: &RunningDistances, tau: f64) -> Vec<bool> {
    let cut = d.m as f64 * tau;
    d.w.iter().map(|&w| w as f64 <= cut).collect()
}

pub fn detect_replicas(y: &Matrix) -> Result<Vec<bool>> {
    Ok(analyze_replicas(y)?.flags)
}

/// Keeps the first column of every replica run.
pub fn remove_extra_replicas(y: &Matrix, flags: &[bool]) -> Result<Matrix> {
    if flags.len() + 1 != y.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} flags for {} columns",
            flags.len(),
            y.cols()
        )));
    }
    Ok(y.select_columns(&run_starts(flags)))
}

/// First column of every run delimited by `flags`.
pub fn run_starts(flags: &[bool]) -> Vec<usize> {
    std::iter::once(0)
        .chain(
            flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| !f)
                .map(|(j, _)| j + 1),
        )
        .collect()
}

/// Run lengths delimited by `flags` over `flags.len() + 1` columns.
pub fn run_lengths(flags: &[bool]) -> Vec<usize> {
    let mut out = vec![1];
    for &f in flags {
        if f {
            *out.last_mut().expect("non-empty") += 1;
        } else {
            out.push(1);
        }
    }
    out
}

/// True mixture parameters `(p0, p1)`:
/// `p0 = 1 - sum_y p_Y(y)^2`, `p1 = 1 - sum_x p_X(x) sum_y p(y|x)^2`.
pub fn mixture_parameters(
    p_x: &CategoricalDistribution,
    channel: &ObfuscationChannel,
) -> (f64, f64) {
    let p_y = channel.output_distribution(p_x);
    let p0 = 1.0 - p_y.iter().map(|p| p * p).sum::<f64>();
    let p1 = 1.0
        - p_x
            .probs()
            .iter()
            .enumerate()
            .map(|(x, &px)| px * channel.row(x).probs().iter().map(|p| p * p).sum::<f64>())
            .sum::<f64>();
    (p0, p1)
}

/// Fraction of adjacencies that are not replicas,
/// `(n - #{S_j = 0}) / (K_n - 1)`; not clamped.
pub fn mixing_weight(pattern: &RepetitionPattern) -> Result<f64> {
    let k = pattern.total_columns();
    if k < 2 {
        return Err(Error::TooFewColumns { needed: 2, got: k });
    }
    Ok(pattern.retained_count() as f64 / (k - 1) as f64)
}
