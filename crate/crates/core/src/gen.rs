//! Sampling of correlated database pairs, repetition patterns, row
//! permutations and seed matrices.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    CategoricalDistribution, Matrix, Model, ObfuscationChannel, Permutation, RepetitionPattern,
    Symbol,
};
use crate::rng::{labels, SeedTree};

/// Seed matrices: `g1` is `Λ x n`, `g2` is `Λ x K_n`, rows aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPair {
    pub g1: Matrix,
    pub g2: Matrix,
}

impl SeedPair {
    pub fn size(&self) -> usize {
        self.g1.rows()
    }
}

/// An anonymized database, its labeled correlated counterpart and the
/// hidden ground truth that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatabasePair {
    pub x: Matrix,
    pub y: Matrix,
    pub pattern: RepetitionPattern,
    /// Row `i` of `x` is row `sigma.apply(i)` of `y`.
    pub sigma: Permutation,
    pub seeds: SeedPair,
}

/// Draws i.i.d. symbols from a fixed distribution.
#[derive(Debug, Clone)]
pub struct SymbolSampler {
    index: WeightedIndex<f64>,
}

impl SymbolSampler {
    pub fn new(dist: &CategoricalDistribution) -> Self {
        Self {
            index: WeightedIndex::new(dist.probs()).expect("validated distribution"),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }
}

/// Per-input-symbol samplers for a channel.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    rows: Vec<SymbolSampler>,
}

impl ChannelSampler {
    pub fn new(channel: &ObfuscationChannel) -> Self {
        Self {
            rows: (0..channel.size())
                .map(|x| SymbolSampler::new(channel.row(x)))
                .collect(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, x: Symbol, rng: &mut R) -> Symbol {
        self.rows[x as usize].sample(rng) as Symbol
    }
}

/// `rows x cols` matrix with i.i.d. entries drawn from `p_x`.
pub fn sample_matrix<R: Rng + ?Sized>(
    p_x: &CategoricalDistribution,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Matrix {
    let sampler = SymbolSampler::new(p_x);
    let data = (0..rows * cols)
        .map(|_| sampler.sample(rng) as Symbol)
        .collect();
    Matrix::new(rows, cols, data).expect("sized above")
}

/// The anonymized database `X` of a model: `m x n`, entries i.i.d. `p_X`.
pub fn sample_database<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Matrix {
    sample_matrix(model.p_x(), model.m(), model.n(), rng)
}

pub fn sample_repetition_pattern<R: Rng + ?Sized>(
    p_s: &CategoricalDistribution,
    n: usize,
    rng: &mut R,
) -> RepetitionPattern {
    let sampler = SymbolSampler::new(p_s);
    RepetitionPattern::new((0..n).map(|_| sampler.sample(rng)).collect())
}

/// Uniformly drawn permutation of `0..m`.
pub fn sample_permutation<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Permutation {
    let mut map: Vec<usize> = (0..m).collect();
    map.shuffle(rng);
    Permutation::new(map).expect("shuffle of the identity")
}

/// Builds `Y` from `X`: column `j` contributes `S_j` independently noised
/// copies, placed contiguously in the original column order, and row `i` of
/// `X` lands on row `sigma(i)` of `Y`.
pub fn apply_repetition_and_noise<R: Rng + ?Sized>(
    x: &Matrix,
    pattern: &RepetitionPattern,
    channel: &ObfuscationChannel,
    sigma: &Permutation,
    rng: &mut R,
) -> Result<Matrix> {
    if pattern.len() != x.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pattern of length {} for {} columns",
            pattern.len(),
            x.cols()
        )));
    }
    if sigma.len() != x.rows() {
        return Err(Error::ShapeMismatch(format!(
            "permutation of {} rows for {} rows",
            sigma.len(),
            x.rows()
        )));
    }
    let k = pattern.total_columns();
    if k == 0 {
        return Err(Error::AllColumnsDeleted);
    }
    let sampler = ChannelSampler::new(channel);
    let reps = pattern.as_slice();
    let mut y = Matrix::filled(x.rows(), k, 0);
    for i in 0..x.rows() {
        let src = x.row(i);
        let dst = y.row_mut(sigma.apply(i));
        let mut c = 0;
        for (&v, &s) in src.iter().zip(reps) {
            for _ in 0..s {
                dst[c] = sampler.sample(v, rng);
                c += 1;
            }
        }
    }
    Ok(y)
}

/// A fresh batch of `count` seed rows sharing `pattern`: `G1` i.i.d. `p_x`,
/// `G2` obtained through the same repetition and independent channel noise.
pub fn generate_seeds<R: Rng + ?Sized>(
    p_x: &CategoricalDistribution,
    pattern: &RepetitionPattern,
    count: usize,
    channel: &ObfuscationChannel,
    database_rng: &mut R,
    noise_rng: &mut R,
) -> Result<SeedPair> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "seed count must be at least 1".into(),
        ));
    }
    let g1 = sample_matrix(p_x, count, pattern.len(), database_rng);
    let g2 = apply_repetition_and_noise(
        &g1,
        pattern,
        channel,
        &Permutation::identity(count),
        noise_rng,
    )?;
    Ok(SeedPair { g1, g2 })
}

/// Generates a complete [`DatabasePair`] from named streams of `tree`.
///
/// `seed_count = 0` yields empty seed matrices.
pub fn generate_pair(model: &Model, seed_count: usize, tree: &SeedTree) -> Result<DatabasePair> {
    let x = sample_database(model, &mut tree.stream(labels::DATABASE, &[]));
    let pattern = sample_repetition_pattern(
        model.p_s(),
        model.n(),
        &mut tree.stream(labels::PATTERN, &[]),
    );
    if pattern.total_columns() == 0 {
        return Err(Error::AllColumnsDeleted);
    }
    let sigma = sample_permutation(model.m(), &mut tree.stream(labels::PERMUTATION, &[]));
    let y = apply_repetition_and_noise(
        &x,
        &pattern,
        model.channel(),
        &sigma,
        &mut tree.stream(labels::NOISE, &[]),
    )?;
    let seeds = if seed_count == 0 {
        SeedPair {
            g1: Matrix::filled(0, model.n(), 0),
            g2: Matrix::filled(0, pattern.total_columns(), 0),
        }
    } else {
        generate_seeds(
            model.p_x(),
            &pattern,
            seed_count,
            model.channel(),
            &mut tree.stream(labels::SEED_DATABASE, &[]),
            &mut tree.stream(labels::SEED_NOISE, &[]),
        )?
    };
    Ok(DatabasePair {
        x,
        y,
        pattern,
        sigma,
        seeds,
    })
}
