//! The noiseless pipeline: repetition detection from column histograms and
//! exact row matching.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, Assignment, CategoricalDistribution, Matrix, RepetitionPattern};

/// Symbol counts of every column; `column(j)[v]` is the number of rows of
/// column `j` holding symbol `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramMatrix {
    k: usize,
    cols: usize,
    counts: Vec<u32>,
}

impl HistogramMatrix {
    pub fn from_counts(k: usize, counts: Vec<u32>) -> Result<Self> {
        if k == 0 || counts.len() % k != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} counts do not split into histograms of {k} symbols",
                counts.len()
            )));
        }
        Ok(Self {
            k,
            cols: counts.len() / k,
            counts,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.counts[j * self.k..(j + 1) * self.k]
    }

    /// Groups of column indices sharing a histogram, each group listed in
    /// increasing order and groups ordered by their first column.
    pub fn collisions(&self) -> Vec<Vec<usize>> {
        let mut groups: HashMap<&[u32], Vec<usize>> = HashMap::new();
        for j in 0..self.cols {
            groups.entry(self.column(j)).or_default().push(j);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
        out.sort();
        out
    }

    /// Whether any two columns share a histogram.
    pub fn has_collision(&self) -> bool {
        let mut cols: Vec<&[u32]> = (0..self.cols).map(|j| self.column(j)).collect();
        cols.sort_unstable();
        cols.windows(2).any(|w| w[0] == w[1])
    }
}

pub fn column_histograms(d: &Matrix, alphabet: Alphabet) -> Result<HistogramMatrix> {
    d.check_symbols(alphabet, false)?;
    let k = alphabet.size();
    let mut counts = vec![0u32; d.cols() * k];
    for row in d.iter_rows() {
        for (j, &v) in row.iter().enumerate() {
            counts[j * k + v as usize] += 1;
        }
    }
    HistogramMatrix::from_counts(k, counts)
}

/// Outcome of histogram-based repetition detection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramDetection {
    pub pattern: RepetitionPattern,
    /// Columns of `X` with identical histograms; when non-empty the detected
    /// pattern may be wrong.
    pub ambiguous: Vec<Vec<usize>>,
}

impl HistogramDetection {
    pub fn is_ambiguous(&self) -> bool {
        !self.ambiguous.is_empty()
    }
}

/// `Ŝ_j` = number of columns of `y` whose histogram equals that of column
/// `j` of `x`.
pub fn detect_repetitions_histogram(
    x: &Matrix,
    y: &Matrix,
    alphabet: Alphabet,
) -> Result<HistogramDetection> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} rows, Y has {}",
            x.rows(),
            y.rows()
        )));
    }
    let hx = column_histograms(x, alphabet)?;
    let hy = column_histograms(y, alphabet)?;
    let mut multiplicity: HashMap<&[u32], usize> = HashMap::new();
    for j in 0..hy.cols() {
        *multiplicity.entry(hy.column(j)).or_default() += 1;
    }
    let s = (0..hx.cols())
        .map(|j| multiplicity.get(hx.column(j)).copied().unwrap_or(0))
        .collect();
    Ok(HistogramDetection {
        pattern: RepetitionPattern::new(s),
        ambiguous: hx.collisions(),
    })
}

/// Row matching after discarding deleted columns of `x` and extra replicas
/// of `y`: row `i` is matched to `j` when the reduced rows are equal and
/// each is unique in its own database.
pub fn match_exact(x: &Matrix, y: &Matrix, pattern: &RepetitionPattern) -> Result<Assignment> {
    if pattern.len() != x.cols() || pattern.total_columns() != y.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pattern ({} columns, total {}) does not fit X ({}) and Y ({})",
            pattern.len(),
            pattern.total_columns(),
            x.cols(),
            y.cols()
        )));
    }
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} rows, Y has {}",
            x.rows(),
            y.rows()
        )));
    }
    let retained = pattern.retained_indices();
    let starts = pattern.run_starts();
    let firsts: Vec<usize> = retained.iter().map(|&j| starts[j]).collect();
    let x_bar = x.select_columns(&retained);
    let y_bar = y.select_columns(&firsts);

    let mut x_count: HashMap<&[u8], usize> = HashMap::new();
    for row in x_bar.iter_rows() {
        *x_count.entry(row).or_default() += 1;
    }
    // (occurrences, last row)
    let mut y_index: HashMap<&[u8], (usize, usize)> = HashMap::new();
    for (j, row) in y_bar.iter_rows().enumerate() {
        let e = y_index.entry(row).or_insert((0, j));
        e.0 += 1;
        e.1 = j;
    }
    Ok(Assignment::new(
        x_bar
            .iter_rows()
            .map(|row| match (x_count[row], y_index.get(row)) {
                (1, Some(&(1, j))) => Some(j),
                _ => None,
            })
            .collect(),
    ))
}

/// Column histograms of an `m x n` database with i.i.d. `p_x` entries,
/// drawn directly as `n` independent multinomial vectors.
pub fn sample_column_histograms<R: Rng + ?Sized>(
    p_x: &CategoricalDistribution,
    m: usize,
    n: usize,
    rng: &mut R,
) -> HistogramMatrix {
    let k = p_x.len();
    let probs = p_x.probs();
    let mut counts = Vec::with_capacity(n * k);
    for _ in 0..n {
        let mut left = m as u64;
        let mut mass = 1.0;
        for (v, &p) in probs.iter().enumerate() {
            let c = if v + 1 == k || left == 0 {
                left
            } else if mass <= 0.0 {
                0
            } else {
                let q = (p / mass).clamp(0.0, 1.0);
                Binomial::new(left, q)
                    .expect("probability in range")
                    .sample(rng)
            };
            counts.push(c as u32);
            left -= c;
            mass -= p;
        }
    }
    HistogramMatrix::from_counts(k, counts).expect("n histograms of k counts")
}

/// Fraction of `trials` databases whose column histograms are not all
/// distinct.
pub fn histogram_collision_rate<R: Rng + ?Sized>(
    p_x: &CategoricalDistribution,
    m: usize,
    n: usize,
    trials: usize,
    rng: &mut R,
) -> f64 {
    let hits = (0..trials)
        .filter(|_| sample_column_histograms(p_x, m, n, rng).has_collision())
        .count();
    hits as f64 / trials as f64
}
