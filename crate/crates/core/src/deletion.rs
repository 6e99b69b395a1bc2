//! Seeded deletion detection.
//!
//! Every column of the replica-pruned `G2` is the noisy image of exactly one
//! retained column of `G1`. Under a useful remapping `Φ` the Hamming distance
//! between that pair follows a different binomial law than every other pair
//! in the same column of `L(Φ)`, so it shows up as an outlier of the absolute
//! deviations `M(Φ) = |L(Φ) - μ(Φ)|`.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, CategoricalDistribution, Matrix, ObfuscationChannel, Symbol};

/// Largest alphabet whose symmetry group is enumerated.
pub const MAX_REMAP_ALPHABET: usize = 8;

/// Default ratio threshold of the order-statistic test.
pub const DEFAULT_RATIO_THRESHOLD: f64 = 1.5;

/// A bijection on the alphabet, `Φ(u) = table[u]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Remapping {
    table: Vec<Symbol>,
}

impl Remapping {
    pub fn new(table: Vec<Symbol>) -> Result<Self> {
        let mut seen = vec![false; table.len()];
        for &v in &table {
            let v = v as usize;
            if v >= table.len() || seen[v] {
                return Err(Error::InvalidArgument(format!(
                    "remapping {table:?} is not a bijection"
                )));
            }
            seen[v] = true;
        }
        Ok(Self { table })
    }

    pub fn identity(size: usize) -> Self {
        Self {
            table: (0..size).map(|v| v as Symbol).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.table.len()
    }

    #[inline]
    pub fn apply(&self, u: Symbol) -> Symbol {
        self.table[u as usize]
    }

    pub fn as_slice(&self) -> &[Symbol] {
        &self.table
    }

    pub fn inverse(&self) -> Self {
        let mut table = vec![0; self.table.len()];
        for (u, &v) in self.table.iter().enumerate() {
            table[v as usize] = u as Symbol;
        }
        Self { table }
    }

    pub fn is_identity(&self) -> bool {
        self.table.iter().enumerate().all(|(u, &v)| u == v as usize)
    }
}

/// All `|X|!` remappings in lexicographic order of their tables.
pub fn symmetry_group(alphabet: usize) -> Result<Vec<Remapping>> {
    if alphabet > MAX_REMAP_ALPHABET {
        return Err(Error::AlphabetTooLarge(alphabet));
    }
    Ok((0..alphabet as Symbol)
        .permutations(alphabet)
        .map(|table| Remapping { table })
        .collect())
}

/// `q0(Φ) = 1 - sum_x p_X(x) P(Φ(Y) = x)`, the mismatch probability of an
/// independent pair.
pub fn q0(p_x: &CategoricalDistribution, channel: &ObfuscationChannel, phi: &Remapping) -> f64 {
    let p_y = channel.output_distribution(p_x);
    let inv = phi.inverse();
    1.0 - p_x
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &p)| p * p_y[inv.apply(x as Symbol) as usize])
        .sum::<f64>()
}

/// `q1(Φ) = 1 - sum_x p_X(x) P(Φ(Y) = x | X = x)`, the mismatch probability
/// of a matched pair.
pub fn q1(p_x: &CategoricalDistribution, channel: &ObfuscationChannel, phi: &Remapping) -> f64 {
    let inv = phi.inverse();
    1.0 - p_x
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &p)| p * channel.prob(inv.apply(x as Symbol) as usize, x))
        .sum::<f64>()
}

/// Joint symbol counts of every (G1 column, G2 column) pair, from which
/// `L(Φ)` follows for any `Φ` without revisiting the seeds.
#[derive(Debug, Clone)]
pub struct CooccurrenceTable {
    seeds: usize,
    n: usize,
    cols: usize,
    k: usize,
    counts: Vec<u32>,
}

impl CooccurrenceTable {
    pub fn new(g1: &Matrix, g2: &Matrix, alphabet: Alphabet) -> Result<Self> {
        if g1.rows() != g2.rows() {
            return Err(Error::ShapeMismatch(format!(
                "G1 has {} rows, G2 has {}",
                g1.rows(),
                g2.rows()
            )));
        }
        if g2.cols() == 0 {
            return Err(Error::AllColumnsDeleted);
        }
        g1.check_symbols(alphabet, false)?;
        g2.check_symbols(alphabet, false)?;
        let (n, cols, k) = (g1.cols(), g2.cols(), alphabet.size());
        let kk = k * k;
        let mut counts = vec![0u32; n * cols * kk];
        for t in 0..g1.rows() {
            let r1 = g1.row(t);
            let r2 = g2.row(t);
            for (i, &a) in r1.iter().enumerate() {
                let base = i * cols * kk + a as usize * k;
                for (j, &b) in r2.iter().enumerate() {
                    counts[base + j * kk + b as usize] += 1;
                }
            }
        }
        Ok(Self {
            seeds: g1.rows(),
            n,
            cols,
            k,
            counts,
        })
    }

    pub fn seeds(&self) -> usize {
        self.seeds
    }

    /// `L(Φ)`, row-major `n x cols`.
    pub fn hamming(&self, phi: &Remapping) -> Vec<u32> {
        let kk = self.k * self.k;
        // agreement when G1 = Φ(b) and G2 = b
        let cells: Vec<usize> = (0..self.k)
            .map(|b| phi.apply(b as Symbol) as usize * self.k + b)
            .collect();
        self.counts
            .chunks_exact(kk)
            .map(|c| self.seeds as u32 - cells.iter().map(|&x| c[x]).sum::<u32>())
            .collect()
    }

    pub fn deviation_matrix(&self, phi: &Remapping) -> DeviationMatrix {
        DeviationMatrix::from_distances(self.n, self.cols, self.hamming(phi))
    }
}

/// `L(Φ)`, its global mean `μ` and `M = |L - μ|`, all row-major `n x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationMatrix {
    pub n: usize,
    pub cols: usize,
    pub l: Vec<u32>,
    pub mu: f64,
    pub m: Vec<f64>,
}

impl DeviationMatrix {
    pub fn from_distances(n: usize, cols: usize, l: Vec<u32>) -> Self {
        assert_eq!(l.len(), n * cols);
        let mu = l.iter().map(|&v| v as f64).sum::<f64>() / l.len() as f64;
        let m = l.iter().map(|&v| (v as f64 - mu).abs()).collect();
        Self { n, cols, l, mu, m }
    }

    #[inline]
    pub fn l_at(&self, i: usize, j: usize) -> u32 {
        self.l[i * self.cols + j]
    }

    #[inline]
    pub fn m_at(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.cols + j]
    }

    pub fn m_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.m_at(i, j)).collect()
    }

    /// Lowest row index attaining the column maximum of `M`.
    pub fn argmax_column(&self, j: usize) -> usize {
        let mut best = 0;
        for i in 1..self.n {
            if self.m_at(i, j) > self.m_at(best, j) {
                best = i;
            }
        }
        best
    }
}

/// `L(Φ)` for the given seeds and remapping.
pub fn deviation_matrix(
    g1: &Matrix,
    g2: &Matrix,
    alphabet: Alphabet,
    phi: &Remapping,
) -> Result<DeviationMatrix> {
    Ok(CooccurrenceTable::new(g1, g2, alphabet)?.deviation_matrix(phi))
}

/// `2 Λ^{2/3} (log2 n)^{1/3}`.
pub fn asymptotic_threshold(seeds: usize, n: usize) -> f64 {
    2.0 * (seeds as f64).powf(2.0 / 3.0) * (n as f64).log2().cbrt()
}

/// `a / b`, with `b = 0` mapped to `a + 1` (or 1 when `a = 0` too).
pub fn guarded_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            a + 1.0
        }
    } else {
        a / b
    }
}

/// Per column, `R_(n) = T_(n) / T_(n-1)` and `R_(n-1) = T_(n-1) / T_(n-2)`
/// for the sorted deviations `T_(1) <= .. <= T_(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatisticRatios {
    pub top: Vec<f64>,
    pub second: Vec<f64>,
}

impl OrderStatisticRatios {
    pub fn mean_top(&self) -> f64 {
        self.top.iter().sum::<f64>() / self.top.len() as f64
    }

    pub fn mean_second(&self) -> f64 {
        self.second.iter().sum::<f64>() / self.second.len() as f64
    }
}

pub fn order_statistic_ratios(dev: &DeviationMatrix) -> Result<OrderStatisticRatios> {
    if dev.n < 3 {
        return Err(Error::InvalidArgument(format!(
            "order-statistic ratios need n >= 3, got {}",
            dev.n
        )));
    }
    let mut top = Vec::with_capacity(dev.cols);
    let mut second = Vec::with_capacity(dev.cols);
    for j in 0..dev.cols {
        let mut col = dev.m_column(j);
        col.sort_by(f64::total_cmp);
        let t = &col[dev.n - 3..];
        top.push(guarded_ratio(t[2], t[1]));
        second.push(guarded_ratio(t[1], t[0]));
    }
    Ok(OrderStatisticRatios { top, second })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DeletionMode {
    /// Fixed threshold `2 Λ^{2/3} (log2 n)^{1/3}` on `M`.
    Asymptotic,
    /// Usefulness decided by the top order-statistic ratios, retained rows
    /// chosen by column argmax.
    Modified { ratio_threshold: f64 },
}

/// Outcome of a deletion detection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionDetection {
    /// Sorted, distinct retained column indices of `X`.
    pub retained: Vec<usize>,
    pub remapping: Remapping,
    /// Number of remappings examined, the chosen one included.
    pub tried: usize,
    pub mu: f64,
    /// `τ̂` for the asymptotic mode, `τ̃` for the modified one.
    pub threshold: f64,
    /// Per retained `G2` column, the selected row of `G1` and its deviation.
    pub outlier_rows: Vec<usize>,
    pub outlier_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_means: Option<(f64, f64)>,
}

pub fn detect_deletions(
    g1: &Matrix,
    g2: &Matrix,
    alphabet: Alphabet,
    mode: DeletionMode,
) -> Result<DeletionDetection> {
    match mode {
        DeletionMode::Asymptotic => detect_deletions_asymptotic(g1, g2, alphabet),
        DeletionMode::Modified { ratio_threshold } => {
            detect_deletions_modified(g1, g2, alphabet, ratio_threshold)
        }
    }
}

fn finish(
    rows: Vec<usize>,
    dev: &DeviationMatrix,
    phi: &Remapping,
    tried: usize,
    threshold: f64,
    ratio_means: Option<(f64, f64)>,
) -> DeletionDetection {
    let scores = rows
        .iter()
        .enumerate()
        .map(|(j, &i)| dev.m_at(i, j))
        .collect();
    let mut retained = rows.clone();
    retained.sort_unstable();
    retained.dedup();
    DeletionDetection {
        retained,
        remapping: phi.clone(),
        tried,
        mu: dev.mu,
        threshold,
        outlier_rows: rows,
        outlier_scores: scores,
        ratio_means,
    }
}

/// Sweeps the symmetry group; the first remapping with an outlier in every
/// column decides. A column with several outliers is a misdetection.
pub fn detect_deletions_asymptotic(
    g1: &Matrix,
    g2: &Matrix,
    alphabet: Alphabet,
) -> Result<DeletionDetection> {
    if g1.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 seed rows, got {}",
            g1.rows()
        )));
    }
    let table = CooccurrenceTable::new(g1, g2, alphabet)?;
    let group = symmetry_group(alphabet.size())?;
    let tau = asymptotic_threshold(g1.rows(), g1.cols());
    'sweep: for (s, phi) in group.iter().enumerate() {
        let dev = table.deviation_matrix(phi);
        let mut rows = Vec::with_capacity(dev.cols);
        for j in 0..dev.cols {
            let mut count = 0;
            let mut row = 0;
            for i in 0..dev.n {
                if dev.m_at(i, j) > tau {
                    count += 1;
                    row = i;
                }
            }
            match count {
                0 => continue 'sweep,
                1 => rows.push(row),
                _ => return Err(Error::Misdetection { column: j, count }),
            }
        }
        return Ok(finish(rows, &dev, phi, s + 1, tau, None));
    }
    Err(Error::NoUsefulRemapping { tried: group.len() })
}

/// Sweeps the symmetry group; the first remapping whose mean top ratio is at
/// least `ratio_threshold` times the mean second ratio decides, and each
/// column keeps its argmax row.
pub fn detect_deletions_modified(
    g1: &Matrix,
    g2: &Matrix,
    alphabet: Alphabet,
    ratio_threshold: f64,
) -> Result<DeletionDetection> {
    if ratio_threshold.is_nan() || ratio_threshold <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "ratio threshold must exceed 1, got {ratio_threshold}"
        )));
    }
    let table = CooccurrenceTable::new(g1, g2, alphabet)?;
    let group = symmetry_group(alphabet.size())?;
    for (s, phi) in group.iter().enumerate() {
        let dev = table.deviation_matrix(phi);
        let ratios = order_statistic_ratios(&dev)?;
        let (top, second) = (ratios.mean_top(), ratios.mean_second());
        if top < ratio_threshold * second {
            continue;
        }
        let rows = (0..dev.cols).map(|j| dev.argmax_column(j)).collect();
        return Ok(finish(
            rows,
            &dev,
            phi,
            s + 1,
            ratio_threshold,
            Some((top, second)),
        ));
    }
    Err(Error::NoUsefulRemapping { tried: group.len() })
}
