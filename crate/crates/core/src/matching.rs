//! Row matching by joint typicality under an estimated model.
//!
//! Each row of `Y` is cut into `n` blocks following `Ŝ` (an empty block
//! stands for a deleted column). The score of the pair `(i, j)` is the
//! empirical log-loss rate
//! `Ĥ_{i,j} = -(1/n) sum_c log2 p̂(X_{i,c}, block_c(Y_j) | Ŝ_c)`, compared
//! with the model entropy `Ĥ(X, Y^S | S)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EstimatedModel;
use crate::model::{Assignment, Matrix, Permutation, RepetitionPattern, Symbol};

/// One row of `Y` split into per-column blocks; a deleted column holds a
/// single erasure symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedRow {
    pub blocks: Vec<Vec<Symbol>>,
}

/// Segments every row of `y` by `pattern`, marking deletions with `erasure`.
pub fn add_markers(
    y: &Matrix,
    pattern: &RepetitionPattern,
    erasure: Symbol,
) -> Result<Vec<SegmentedRow>> {
    check_pattern(y, pattern)?;
    let starts = pattern.run_starts();
    Ok(y.iter_rows()
        .map(|row| SegmentedRow {
            blocks: starts
                .iter()
                .zip(pattern.as_slice())
                .map(|(&a, &s)| {
                    if s == 0 {
                        vec![erasure]
                    } else {
                        row[a..a + s].to_vec()
                    }
                })
                .collect(),
        })
        .collect())
}

fn check_pattern(y: &Matrix, pattern: &RepetitionPattern) -> Result<()> {
    if pattern.total_columns() != y.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pattern totals {} columns, Y has {}",
            pattern.total_columns(),
            y.cols()
        )));
    }
    Ok(())
}

/// `Ĥ_{i,j}` for one `X` row and one segmented `Y` row; `+inf` when some
/// block has zero probability.
pub fn typicality_score(x_row: &[Symbol], row: &SegmentedRow, model: &EstimatedModel) -> f64 {
    let total: f64 = x_row
        .iter()
        .zip(&row.blocks)
        .map(|(&x, block)| model.conditional_log_prob(x, block))
        .sum();
    -total / x_row.len() as f64
}

/// Per `Y` row, `log2 p̂(x, block_c)` for every column `c` and symbol `x`,
/// so that a pair score is `n` table lookups.
struct RowLikelihood {
    k: usize,
    table: Vec<f64>,
}

impl RowLikelihood {
    fn new(
        y_row: &[Symbol],
        starts: &[usize],
        pattern: &RepetitionPattern,
        model: &EstimatedModel,
    ) -> Self {
        let k = model.alphabet_size();
        let mut table = Vec::with_capacity(starts.len() * k);
        for (&a, &s) in starts.iter().zip(pattern.as_slice()) {
            let block = &y_row[a..a + s];
            for x in 0..k as Symbol {
                let mut lp = model.log_px(x);
                for &y in block {
                    lp += model.log_channel(y, x);
                }
                table.push(lp);
            }
        }
        Self { k, table }
    }

    #[inline]
    fn score(&self, x_row: &[Symbol]) -> f64 {
        let mut total = 0.0;
        for (c, &x) in x_row.iter().enumerate() {
            total += self.table[c * self.k + x as usize];
        }
        -total / x_row.len() as f64
    }
}

fn check_inputs(
    x: &Matrix,
    y: &Matrix,
    pattern: &RepetitionPattern,
    model: &EstimatedModel,
) -> Result<()> {
    check_pattern(y, pattern)?;
    if pattern.len() != x.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pattern over {} columns, X has {}",
            pattern.len(),
            x.cols()
        )));
    }
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} rows, Y has {}",
            x.rows(),
            y.rows()
        )));
    }
    let alphabet = crate::model::Alphabet::new(model.alphabet_size())?;
    x.check_symbols(alphabet, false)?;
    y.check_symbols(alphabet, false)?;
    Ok(())
}

/// Full `m x m` score matrix, entry `[i * m + j] = Ĥ_{i,j}`.
pub fn score_matrix(
    x: &Matrix,
    y: &Matrix,
    pattern: &RepetitionPattern,
    model: &EstimatedModel,
) -> Result<Vec<f64>> {
    check_inputs(x, y, pattern, model)?;
    let m = x.rows();
    let starts = pattern.run_starts();
    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let lik = RowLikelihood::new(y.row(j), &starts, pattern, model);
            x.iter_rows().map(|r| lik.score(r)).collect()
        })
        .collect();
    let mut out = vec![0.0; m * m];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out[i * m + j] = v;
        }
    }
    Ok(out)
}

/// Default typicality slack `4 / sqrt(n)`.
pub fn default_epsilon(n: usize) -> f64 {
    4.0 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decoder", rename_all = "snake_case")]
pub enum Decoder {
    /// Row `i` is matched to the unique `Y` row within `epsilon` of the
    /// model entropy.
    Typicality { epsilon: f64 },
    /// Each `Y` row picks the `X` row minimizing `Δ = |Ĥ - Ĥ_{i,j}|`.
    MinDelta,
}

/// Assignment from a precomputed score matrix, the reference for
/// [`deanonymize`].
pub fn assign_from_scores(scores: &[f64], m: usize, center: f64, decoder: Decoder) -> Assignment {
    assert_eq!(scores.len(), m * m);
    match decoder {
        Decoder::Typicality { epsilon } => {
            let mut out = Assignment::unmatched(m);
            for i in 0..m {
                let hits: Vec<usize> = (0..m)
                    .filter(|&j| (scores[i * m + j] - center).abs() <= epsilon)
                    .collect();
                if hits.len() == 1 {
                    out.set(i, Some(hits[0]));
                }
            }
            out
        }
        Decoder::MinDelta => {
            let claims = (0..m).map(|j| argmin_delta((0..m).map(|i| scores[i * m + j]), center));
            resolve_claims(claims, m)
        }
    }
}

fn argmin_delta(scores: impl Iterator<Item = f64>, center: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        let d = (s - center).abs();
        if d.is_finite() && best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// `X` rows claimed by exactly one `Y` row are matched to it.
fn resolve_claims(claims: impl Iterator<Item = Option<usize>>, m: usize) -> Assignment {
    let mut owner: Vec<Option<usize>> = vec![None; m];
    let mut count = vec![0usize; m];
    for (j, claim) in claims.enumerate() {
        if let Some(i) = claim {
            count[i] += 1;
            owner[i] = Some(j);
        }
    }
    Assignment::new(
        owner
            .into_iter()
            .zip(count)
            .map(|(o, c)| if c == 1 { o } else { None })
            .collect(),
    )
}

/// Matches the rows of `x` to those of `y` without materializing the score
/// matrix. The work is spread over `Y` rows; results do not depend on the
/// thread count.
pub fn deanonymize(
    x: &Matrix,
    y: &Matrix,
    pattern: &RepetitionPattern,
    model: &EstimatedModel,
    decoder: Decoder,
) -> Result<Assignment> {
    check_inputs(x, y, pattern, model)?;
    if let Decoder::Typicality { epsilon } = decoder {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
    }
    let m = x.rows();
    let center = model.joint_entropy_given_s();
    let starts = pattern.run_starts();
    let per_row = |j: usize| RowLikelihood::new(y.row(j), &starts, pattern, model);
    match decoder {
        Decoder::MinDelta => {
            let claims: Vec<Option<usize>> = (0..m)
                .into_par_iter()
                .map(|j| {
                    let lik = per_row(j);
                    argmin_delta(x.iter_rows().map(|r| lik.score(r)), center)
                })
                .collect();
            Ok(resolve_claims(claims.into_iter(), m))
        }
        Decoder::Typicality { epsilon } => {
            let hits: Vec<Vec<usize>> = (0..m)
                .into_par_iter()
                .map(|j| {
                    let lik = per_row(j);
                    x.iter_rows()
                        .enumerate()
                        .filter(|(_, r)| (lik.score(r) - center).abs() <= epsilon)
                        .map(|(i, _)| i)
                        .collect()
                })
                .collect();
            let mut count = vec![0usize; m];
            let mut last = vec![0usize; m];
            for (j, rows) in hits.iter().enumerate() {
                for &i in rows {
                    count[i] += 1;
                    last[i] = j;
                }
            }
            Ok(Assignment::new(
                (0..m).map(|i| (count[i] == 1).then_some(last[i])).collect(),
            ))
        }
    }
}

/// Fraction of rows with `σ̂(i) != σ(i)`; unmatched rows count as errors.
pub fn score_match(estimate: &Assignment, truth: &Permutation) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimated rows for {} true rows",
            estimate.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = (0..truth.len())
        .filter(|&i| estimate.get(i) != Some(truth.apply(i)))
        .count();
    Ok(wrong as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{generate_pair, sample_matrix, sample_permutation};
    use crate::model::{CategoricalDistribution, ModelSpec, ObfuscationChannel};
    use crate::rng::{SeedTree, StreamRng};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> StreamRng {
        StreamRng::seed_from_u64(seed)
    }

    fn section_four(m: usize, n: usize) -> crate::model::Model {
        ModelSpec::deletion_duplication(m, n, 5, 0.2, 0.3, 0.2)
            .build()
            .unwrap()
    }

    #[test]
    fn markers() {
        let y = Matrix::from_rows(&[[1u8, 2, 3], [4, 5, 6]]).unwrap();
        let ones = add_markers(&y, &RepetitionPattern::all_ones(3), 9).unwrap();
        assert_eq!(ones[0].blocks, vec![vec![1], vec![2], vec![3]]);
        let seg = add_markers(&y, &RepetitionPattern::new(vec![2, 0, 1]), 9).unwrap();
        assert_eq!(seg[1].blocks, vec![vec![4, 5], vec![9], vec![6]]);
        let fig1 = RepetitionPattern::new(vec![1, 2, 1, 0, 1, 1]);
        let y6 = Matrix::filled(1, 6, 0);
        let seg = add_markers(&y6, &fig1, 5).unwrap();
        assert_eq!(seg[0].blocks.len(), 6);
        assert_eq!(seg[0].blocks[3], vec![5]);
        assert_eq!(seg[0].blocks[1].len(), 2);
        assert_eq!(
            seg[0]
                .blocks
                .iter()
                .filter(|b| b != &&vec![5])
                .map(Vec::len)
                .sum::<usize>(),
            6
        );
        assert!(add_markers(&y, &RepetitionPattern::all_ones(2), 9).is_err());
    }

    #[test]
    fn zero_probability_gives_infinite_score() {
        let est = EstimatedModel::new(
            CategoricalDistribution::uniform(3),
            ObfuscationChannel::identity(3),
            CategoricalDistribution::point_mass(2, 1),
            vec![],
        )
        .unwrap();
        let row = SegmentedRow {
            blocks: vec![vec![0], vec![1]],
        };
        assert_eq!(typicality_score(&[0, 2], &row, &est), f64::INFINITY);
        let h = typicality_score(&[0, 1], &row, &est);
        assert!((h - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn table_scores_match_direct_scores() {
        let model = section_four(40, 12);
        let pair = generate_pair(&model, 0, &SeedTree::new(5)).unwrap();
        let est = EstimatedModel::from_model(&model);
        let scores = score_matrix(&pair.x, &pair.y, &pair.pattern, &est).unwrap();
        let seg = add_markers(&pair.y, &pair.pattern, 5).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let direct = typicality_score(pair.x.row(i), &seg[j], &est);
                let a = scores[i * 40 + j];
                assert!(a == direct || (a - direct).abs() < 1e-9, "{a} {direct}");
            }
        }
    }

    #[test]
    fn streaming_matches_matrix_reference() {
        let model = section_four(120, 20);
        let est = EstimatedModel::from_model(&model);
        for seed in 0..5 {
            let pair = generate_pair(&model, 0, &SeedTree::new(seed)).unwrap();
            let scores = score_matrix(&pair.x, &pair.y, &pair.pattern, &est).unwrap();
            let center = est.joint_entropy_given_s();
            for decoder in [Decoder::MinDelta, Decoder::Typicality { epsilon: 0.3 }] {
                assert_eq!(
                    deanonymize(&pair.x, &pair.y, &pair.pattern, &est, decoder).unwrap(),
                    assign_from_scores(&scores, 120, center, decoder)
                );
            }
        }
    }

    #[test]
    fn single_row_databases() {
        let x = Matrix::from_rows(&[[0u8, 1, 2]]).unwrap();
        let est = EstimatedModel::new(
            CategoricalDistribution::uniform(3),
            ObfuscationChannel::identity(3),
            CategoricalDistribution::point_mass(2, 1),
            vec![],
        )
        .unwrap();
        let pattern = RepetitionPattern::all_ones(3);
        let ok = deanonymize(&x, &x, &pattern, &est, Decoder::MinDelta).unwrap();
        assert_eq!(ok.get(0), Some(0));
        let typ =
            deanonymize(&x, &x, &pattern, &est, Decoder::Typicality { epsilon: 0.1 }).unwrap();
        assert_eq!(typ.get(0), Some(0));
        let y = Matrix::from_rows(&[[0u8, 2, 2]]).unwrap();
        let bad = deanonymize(&x, &y, &pattern, &est, Decoder::MinDelta).unwrap();
        assert_eq!(bad.get(0), None);
    }

    #[test]
    fn identical_rows_cannot_both_match() {
        let x = Matrix::from_rows(&[[0u8, 1, 2, 0], [0, 1, 2, 0], [1, 1, 0, 2]]).unwrap();
        let est = EstimatedModel::new(
            CategoricalDistribution::uniform(3),
            ObfuscationChannel::symmetric(3, 0.1).unwrap(),
            CategoricalDistribution::point_mass(2, 1),
            vec![],
        )
        .unwrap();
        let a = deanonymize(
            &x,
            &x,
            &RepetitionPattern::all_ones(4),
            &est,
            Decoder::MinDelta,
        )
        .unwrap();
        assert!(a.get(0).is_none() || a.get(1).is_none());
    }

    #[test]
    fn noiseless_distinct_rows_recovered_exactly() {
        let x = sample_matrix(&CategoricalDistribution::uniform(4), 50, 30, &mut rng(1));
        let sigma = sample_permutation(50, &mut rng(2));
        let y = x.permute_rows(&sigma).unwrap();
        let est = EstimatedModel::new(
            CategoricalDistribution::uniform(4),
            ObfuscationChannel::identity(4),
            CategoricalDistribution::point_mass(2, 1),
            vec![],
        )
        .unwrap();
        let pattern = RepetitionPattern::all_ones(30);
        for decoder in [Decoder::MinDelta, Decoder::Typicality { epsilon: 0.01 }] {
            let a = deanonymize(&x, &y, &pattern, &est, decoder).unwrap();
            assert_eq!(score_match(&a, &sigma).unwrap(), 0.0);
        }
    }

    #[test]
    fn true_pair_is_typical_at_n_100() {
        let model = section_four(200, 100);
        let est = EstimatedModel::from_model(&model);
        let center = est.joint_entropy_given_s();
        let mut pass = 0;
        let mut total = 0;
        for seed in 0..10 {
            let pair = generate_pair(&model, 0, &SeedTree::new(100 + seed)).unwrap();
            let seg = add_markers(&pair.y, &pair.pattern, 5).unwrap();
            for i in 0..200 {
                let h = typicality_score(pair.x.row(i), &seg[pair.sigma.apply(i)], &est);
                total += 1;
                if (h - center).abs() <= 0.5 {
                    pass += 1;
                }
            }
        }
        assert!(pass as f64 >= 0.95 * total as f64, "{pass}/{total}");
    }

    #[test]
    fn true_pair_separates_from_impostors() {
        let model = section_four(400, 25);
        let est = EstimatedModel::from_model(&model);
        let center = est.joint_entropy_given_s();
        let pair = generate_pair(&model, 0, &SeedTree::new(9)).unwrap();
        let scores = score_matrix(&pair.x, &pair.y, &pair.pattern, &est).unwrap();
        let mut better = 0;
        for i in 0..400 {
            let truth = (scores[i * 400 + pair.sigma.apply(i)] - center).abs();
            let impostors: Vec<f64> = (0..400)
                .filter(|&j| j != pair.sigma.apply(i))
                .map(|j| (scores[i * 400 + j] - center).abs())
                .collect();
            let beaten = impostors.iter().filter(|&&d| truth < d).count();
            if beaten as f64 >= 0.95 * impostors.len() as f64 {
                better += 1;
            }
        }
        assert!(better >= 300, "{better}");
    }

    #[test]
    fn scoring_examples() {
        let sigma = Permutation::new(vec![2, 0, 1, 3]).unwrap();
        assert_eq!(score_match(&Assignment::from(&sigma), &sigma).unwrap(), 0.0);
        assert_eq!(score_match(&Assignment::unmatched(4), &sigma).unwrap(), 1.0);
        let half = Assignment::new(vec![Some(2), Some(0), None, Some(1)]);
        assert_eq!(score_match(&half, &sigma).unwrap(), 0.5);
        assert!(score_match(&Assignment::unmatched(3), &sigma).is_err());
    }

    #[test]
    fn above_capacity_fails() {
        // noiseless but m far beyond 2^{n C}: identical rows are unavoidable
        let mut spec = ModelSpec::deletion_duplication(512, 4, 2, 0.0, 0.0, 0.0);
        spec.p_s = vec![0.0, 1.0];
        let model = spec.build().unwrap();
        let pair = generate_pair(&model, 0, &SeedTree::new(3)).unwrap();
        let est = EstimatedModel::from_model(&model);
        let a = deanonymize(&pair.x, &pair.y, &pair.pattern, &est, Decoder::MinDelta).unwrap();
        assert!(score_match(&a, &pair.sigma).unwrap() > 0.9);
    }

    proptest! {
        #[test]
        fn constant_shift_keeps_argmin(shift in -50i32..50, seed in 0u64..200) {
            let model = section_four(30, 10);
            let pair = generate_pair(&model, 0, &SeedTree::new(seed)).unwrap();
            let est = EstimatedModel::from_model(&model);
            // dyadic grid so that integer shifts are exact in floating point
            let q = |v: f64| (v * 1048576.0).round() / 1048576.0;
            let scores: Vec<f64> = score_matrix(&pair.x, &pair.y, &pair.pattern, &est)
                .unwrap()
                .into_iter()
                .map(q)
                .collect();
            let center = q(est.joint_entropy_given_s());
            let shift = f64::from(shift);
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            prop_assert_eq!(
                assign_from_scores(&scores, 30, center, Decoder::MinDelta),
                assign_from_scores(&shifted, 30, center + shift, Decoder::MinDelta)
            );
        }

        #[test]
        fn permuting_y_permutes_the_estimate(seed in 0u64..200) {
            let model = section_four(40, 15);
            let pair = generate_pair(&model, 0, &SeedTree::new(seed)).unwrap();
            let est = EstimatedModel::from_model(&model);
            let pi = sample_permutation(40, &mut rng(seed));
            let y2 = pair.y.permute_rows(&pi).unwrap();
            for decoder in [Decoder::MinDelta, Decoder::Typicality { epsilon: 0.4 }] {
                let a = deanonymize(&pair.x, &pair.y, &pair.pattern, &est, decoder).unwrap();
                let b = deanonymize(&pair.x, &y2, &pair.pattern, &est, decoder).unwrap();
                for i in 0..40 {
                    prop_assert_eq!(b.get(i), a.get(i).map(|j| pi.apply(j)));
                }
            }
        }
    }
}
