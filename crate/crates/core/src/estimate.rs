//! Plug-in estimates of `p_X`, `p_{Y|X}` and `p_S` from the seeds and the
//! detected repetition pattern.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::infotheory::{conditional_entropy, entropy};
use crate::model::{
    Alphabet, CategoricalDistribution, Matrix, Model, ObfuscationChannel, RepetitionPattern, Symbol,
};
use crate::replica::run_lengths;

/// Combines replica flags over `Y` and the retained column set of `X` into
/// `Ŝ`: deleted columns get 0, retained ones the lengths of the replica runs
/// in order.
pub fn estimate_repetition_pattern(
    flags: &[bool],
    retained: &[usize],
    n: usize,
) -> Result<RepetitionPattern> {
    if retained.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "retained indices must be strictly increasing".into(),
        ));
    }
    if let Some(&last) = retained.last() {
        if last >= n {
            return Err(Error::InvalidArgument(format!(
                "retained index {last} out of range for {n} columns"
            )));
        }
    }
    let runs = run_lengths(flags);
    if runs.len() != retained.len() {
        return Err(Error::InconsistentDetection {
            runs: runs.len(),
            retained: retained.len(),
        });
    }
    let mut s = vec![0; n];
    for (&j, &len) in retained.iter().zip(&runs) {
        s[j] = len;
    }
    Ok(RepetitionPattern::new(s))
}

/// Estimated `(p̂_X, p̂_{Y|X}, p̂_S)` with precomputed log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatedModel {
    pub p_x: CategoricalDistribution,
    pub channel: ObfuscationChannel,
    pub p_s: CategoricalDistribution,
    /// Input symbols never seen in the seed pairs; their channel row is uniform.
    pub unobserved: Vec<Symbol>,
    #[serde(skip)]
    log_px: Vec<f64>,
    #[serde(skip)]
    log_channel: Vec<f64>,
}

impl EstimatedModel {
    pub fn new(
        p_x: CategoricalDistribution,
        channel: ObfuscationChannel,
        p_s: CategoricalDistribution,
        unobserved: Vec<Symbol>,
    ) -> Result<Self> {
        let k = p_x.len();
        if channel.size() != k {
            return Err(Error::ShapeMismatch(format!(
                "channel of size {} for an alphabet of {k}",
                channel.size()
            )));
        }
        let log_px = p_x.probs().iter().map(|p| p.log2()).collect();
        let mut log_channel = Vec::with_capacity(k * k);
        for x in 0..k {
            log_channel.extend(channel.row(x).probs().iter().map(|p| p.log2()));
        }
        Ok(Self {
            p_x,
            channel,
            p_s,
            unobserved,
            log_px,
            log_channel,
        })
    }

    /// The generating model itself, for decoding with known statistics.
    pub fn from_model(model: &Model) -> Self {
        Self::new(
            model.p_x().clone(),
            model.channel().clone(),
            model.p_s().clone(),
            Vec::new(),
        )
        .expect("validated model")
    }

    pub fn alphabet_size(&self) -> usize {
        self.p_x.len()
    }

    #[inline]
    pub fn log_px(&self, x: Symbol) -> f64 {
        self.log_px[x as usize]
    }

    /// `log2 p̂(y | x)`.
    #[inline]
    pub fn log_channel(&self, y: Symbol, x: Symbol) -> f64 {
        self.log_channel[x as usize * self.p_x.len() + y as usize]
    }

    /// `log2 [p̂_X(x) prod_k p̂(y_k | x)]`; an empty block or a lone erasure
    /// symbol stands for a deleted column and yields `log2 p̂_X(x)`.
    pub fn conditional_log_prob(&self, x: Symbol, block: &[Symbol]) -> f64 {
        let erasure = self.p_x.len() as Symbol;
        let mut lp = self.log_px(x);
        if block == [erasure] {
            return lp;
        }
        for &y in block {
            lp += self.log_channel(y, x);
        }
        lp
    }

    /// `H(X, Y^S | S) = sum_s p̂_S(s) [H(X) + s H(Y|X)]` under the estimate.
    pub fn joint_entropy_given_s(&self) -> f64 {
        let hx = entropy(&self.p_x);
        let hyx = conditional_entropy(&self.p_x, &self.channel);
        self.p_s
            .probs()
            .iter()
            .enumerate()
            .map(|(s, &p)| p * (hx + s as f64 * hyx))
            .sum()
    }
}

/// Empirical frequencies: `p̂_X` over every `G1` entry, `p̂_{Y|X}` over every
/// (source column, replica) pair of seed entries normalized per input
/// symbol, and `p̂_S` from `pattern`, supported on `0..=max(s_max, max Ŝ)`.
pub fn estimate_distributions(
    g1: &Matrix,
    g2: &Matrix,
    pattern: &RepetitionPattern,
    alphabet: Alphabet,
    s_max: usize,
) -> Result<EstimatedModel> {
    if g1.rows() != g2.rows() {
        return Err(Error::ShapeMismatch(format!(
            "G1 has {} rows, G2 has {}",
            g1.rows(),
            g2.rows()
        )));
    }
    if g1.rows() == 0 {
        return Err(Error::InvalidArgument("no seed rows".into()));
    }
    if pattern.len() != g1.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pattern over {} columns, G1 has {}",
            pattern.len(),
            g1.cols()
        )));
    }
    if pattern.total_columns() != g2.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pattern totals {} columns, G2 has {}",
            pattern.total_columns(),
            g2.cols()
        )));
    }
    g1.check_symbols(alphabet, false)?;
    g2.check_symbols(alphabet, false)?;
    let k = alphabet.size();

    let mut x_counts = vec![0u64; k];
    for &v in g1.data() {
        x_counts[v as usize] += 1;
    }
    let p_x = CategoricalDistribution::from_counts(&x_counts)?;

    let sources = pattern.source_columns();
    let mut pair_counts = vec![vec![0u64; k]; k];
    for t in 0..g1.rows() {
        let r1 = g1.row(t);
        for (&src, &y) in sources.iter().zip(g2.row(t)) {
            pair_counts[r1[src] as usize][y as usize] += 1;
        }
    }
    let mut unobserved = Vec::new();
    let mut rows = Vec::with_capacity(k);
    for (x, counts) in pair_counts.iter().enumerate() {
        if counts.iter().all(|&c| c == 0) {
            unobserved.push(x as Symbol);
            rows.push(CategoricalDistribution::uniform(k));
        } else {
            rows.push(CategoricalDistribution::from_counts(counts)?);
        }
    }
    let channel = ObfuscationChannel::from_rows(rows);

    let top = s_max.max(pattern.max());
    let mut s_counts = vec![0u64; top + 1];
    for &s in pattern.as_slice() {
        s_counts[s] += 1;
    }
    let p_s = CategoricalDistribution::from_counts(&s_counts)?;

    EstimatedModel::new(p_x, channel, p_s, unobserved)
}

/// `(1/2) sum |p - q|`, padding the shorter vector with zeros.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    (0..len)
        .map(|i| (p.get(i).unwrap_or(&0.0) - q.get(i).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0
}
