//! Domain types shared by every stage of the pipeline: distributions, the
//! obfuscation channel, database matrices, repetition patterns and row
//! permutations.
//!
//! Symbols are stored 0-based as `u8`; the erasure symbol is the value one
//! past the last alphabet symbol. Logarithms are base 2 throughout the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A database entry. Valid symbols are `0..alphabet`, the erasure is `alphabet`.
pub type Symbol = u8;

/// Largest admissible tolerance on `|sum - 1|` for a probability vector.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Finite alphabet `{0, .., size-1}` plus a distinguished erasure symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if !(2..=255).contains(&size) {
            return Err(Error::InvalidModel(format!(
                "alphabet size must be in 2..=255, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn erasure(&self) -> Symbol {
        self.size as Symbol
    }

    pub fn contains(&self, symbol: Symbol) -> bool {
        (symbol as usize) < self.size
    }
}

/// A probability vector over `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(rule) = distribution_violation(&probs) {
            return Err(Error::InvalidModel(rule));
        }
        Ok(Self { probs })
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "uniform distribution needs a non-empty support");
        Self {
            probs: vec![1.0 / len as f64; len],
        }
    }

    pub fn point_mass(len: usize, at: usize) -> Self {
        assert!(at < len, "point mass outside the support");
        let mut probs = vec![0.0; len];
        probs[at] = 1.0;
        Self { probs }
    }

    /// `p_S = (delta, 1 - delta - gamma, gamma)` on `{0, 1, 2}`.
    pub fn deletion_duplication(delta: f64, gamma: f64) -> Result<Self> {
        Self::new(vec![delta, 1.0 - delta - gamma, gamma])
    }

    /// Empirical frequencies. Counts must not all be zero.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("all counts are zero".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs.get(i).copied().unwrap_or(0.0)
    }

    /// Largest index carrying positive mass.
    pub fn support_max(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Expected value of the index, e.g. `E[S]` for a repetition distribution.
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| i as f64 * p)
            .sum()
    }
}

fn distribution_violation(probs: &[f64]) -> Option<String> {
    if probs.is_empty() {
        return Some("empty support".into());
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Some("negative or non-finite entry".into());
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Some(format!("not normalized (sum = {total})"));
    }
    None
}

/// Transition matrix of `p_{Y|X}`; row `x` is the law of `Y` given `X = x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ObfuscationChannel {
    rows: Vec<CategoricalDistribution>,
}

impl ObfuscationChannel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(x, row)| {
                if row.len() != size {
                    return Err(Error::InvalidModel(format!(
                        "channel row {x} has {} entries, expected {size}",
                        row.len()
                    )));
                }
                CategoricalDistribution::new(row)
                    .map_err(|e| Error::InvalidModel(format!("channel row {x}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub(crate) fn from_rows(rows: Vec<CategoricalDistribution>) -> Self {
        Self { rows }
    }

    pub fn identity(size: usize) -> Self {
        Self {
            rows: (0..size)
                .map(|x| CategoricalDistribution::point_mass(size, x))
                .collect(),
        }
    }

    /// `|X|`-ary symmetric channel with crossover probability `epsilon`.
    pub fn symmetric(size: usize, epsilon: f64) -> Result<Self> {
        if size < 2 || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidModel(format!(
                "symmetric channel needs size >= 2 and epsilon in [0, 1], got {size}, {epsilon}"
            )));
        }
        let off = epsilon / (size - 1) as f64;
        let rows = (0..size)
            .map(|x| {
                let mut row = vec![off; size];
                row[x] = 1.0 - epsilon;
                CategoricalDistribution { probs: row }
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, x: usize) -> &CategoricalDistribution {
        &self.rows[x]
    }

    pub fn prob(&self, y: usize, x: usize) -> f64 {
        self.rows[x].prob(y)
    }

    /// Marginal of `Y` when `X ~ p_x`.
    pub fn output_distribution(&self, p_x: &CategoricalDistribution) -> Vec<f64> {
        let mut p_y = vec![0.0; self.size()];
        for (x, row) in self.rows.iter().enumerate() {
            let px = p_x.prob(x);
            for (y, &p) in row.probs().iter().enumerate() {
                p_y[y] += px * p;
            }
        }
        p_y
    }

    /// Whether `p_{X,Y} != p_X p_Y`, i.e. some two rows on the support of `p_x` differ.
    pub fn is_dependent(&self, p_x: &CategoricalDistribution) -> bool {
        let p_y = self.output_distribution(p_x);
        self.rows.iter().enumerate().any(|(x, row)| {
            p_x.prob(x) > 0.0
                && row
                    .probs()
                    .iter()
                    .zip(&p_y)
                    .any(|(a, b)| (a - b).abs() > 1e-12)
        })
    }
}

/// One rule broken by a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Serializable description of the generative model.
///
/// This is the raw, possibly invalid form read from JSON. [`ModelSpec::validate`]
/// lists every broken rule and [`ModelSpec::build`] turns a valid spec into a
/// [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub m: usize,
    pub n: usize,
    pub alphabet: usize,
    pub p_x: Vec<f64>,
    pub channel: Vec<Vec<f64>>,
    pub p_s: Vec<f64>,
    /// Defaults to `p_s.len() - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
}

impl ModelSpec {
    /// Uniform `p_X`, `|X|`-ary symmetric channel and the deletion-duplication
    /// repetition law `(delta, 1 - delta - gamma, gamma)`.
    pub fn deletion_duplication(
        m: usize,
        n: usize,
        alphabet: usize,
        epsilon: f64,
        delta: f64,
        gamma: f64,
    ) -> Self {
        let off = if alphabet > 1 {
            epsilon / (alphabet - 1) as f64
        } else {
            0.0
        };
        let channel = (0..alphabet)
            .map(|x| {
                let mut row = vec![off; alphabet];
                row[x] = 1.0 - epsilon;
                row
            })
            .collect();
        Self {
            m,
            n,
            alphabet,
            p_x: vec![1.0 / alphabet as f64; alphabet],
            channel,
            p_s: vec![delta, 1.0 - delta - gamma, gamma],
            s_max: None,
        }
    }

    pub fn s_max(&self) -> usize {
        self.s_max
            .unwrap_or_else(|| self.p_s.len().saturating_sub(1))
    }

    /// Database growth rate `log2(m) / n`.
    pub fn growth_rate(&self) -> f64 {
        (self.m as f64).log2() / self.n as f64
    }

    /// Every violated invariant; empty iff the spec is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &'static str, rule: String| out.push(Violation { field, rule });

        if self.m == 0 {
            push("m", "must be at least 1".into());
        }
        if self.n == 0 {
            push("n", "must be at least 1".into());
        }
        if !(2..=255).contains(&self.alphabet) {
            push(
                "alphabet",
                format!("size {} outside 2..=255", self.alphabet),
            );
        }
        if self.p_x.len() != self.alphabet {
            push(
                "p_x",
                format!(
                    "has {} entries, alphabet has {}",
                    self.p_x.len(),
                    self.alphabet
                ),
            );
        }
        match distribution_violation(&self.p_x) {
            Some(rule) if rule.starts_with("not normalized") => push("p_x", format!("p_X {rule}")),
            Some(rule) => push("p_x", rule),
            None => {}
        }
        if self.channel.len() != self.alphabet {
            push(
                "channel",
                format!(
                    "has {} rows, alphabet has {}",
                    self.channel.len(),
                    self.alphabet
                ),
            );
        }
        for (x, row) in self.channel.iter().enumerate() {
            if row.len() != self.alphabet {
                push(
                    "channel",
                    format!("row {x} has {} entries, not square", row.len()),
                );
            }
            if let Some(rule) = distribution_violation(row) {
                push("channel", format!("row {x} {rule}"));
            }
        }
        if let Some(rule) = distribution_violation(&self.p_s) {
            push("p_s", rule);
        }
        let s_max = self.s_max();
        if let Some(top) = self.p_s.iter().rposition(|&p| p > 0.0) {
            if top > s_max {
                push(
                    "p_s",
                    format!("support exceeds s_max (point {top} > s_max = {s_max})"),
                );
            }
        }
        out
    }

    pub fn build(&self) -> Result<Model> {
        let violations = self.validate();
        if !violations.is_empty() {
            let msg = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidModel(msg));
        }
        Ok(Model {
            m: self.m,
            n: self.n,
            alphabet: Alphabet::new(self.alphabet)?,
            p_x: CategoricalDistribution::new(self.p_x.clone())?,
            channel: ObfuscationChannel::new(self.channel.clone())?,
            p_s: CategoricalDistribution::new(self.p_s.clone())?,
            s_max: self.s_max(),
        })
    }
}

/// A validated model: the triple `(p_X, p_{Y|X}, p_S)` with dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    m: usize,
    n: usize,
    alphabet: Alphabet,
    p_x: CategoricalDistribution,
    channel: ObfuscationChannel,
    p_s: CategoricalDistribution,
    s_max: usize,
}

impl Model {
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }
    pub fn p_x(&self) -> &CategoricalDistribution {
        &self.p_x
    }
    pub fn channel(&self) -> &ObfuscationChannel {
        &self.channel
    }
    pub fn p_s(&self) -> &CategoricalDistribution {
        &self.p_s
    }
    pub fn s_max(&self) -> usize {
        self.s_max
    }
    /// Deletion probability `delta = p_S(0)`.
    pub fn deletion_probability(&self) -> f64 {
        self.p_s.prob(0)
    }
}

/// Dense row-major matrix of symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Symbol>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Symbol>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: Symbol) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[Symbol]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Symbol] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Symbol {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Symbol) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Symbol] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Symbol] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[Symbol]> {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<Symbol> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix holding the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * columns.len());
        for row in self.iter_rows() {
            data.extend(columns.iter().map(|&j| row[j]));
        }
        Matrix {
            rows: self.rows,
            cols: columns.len(),
            data,
        }
    }

    /// Row `i` of `self` becomes row `sigma(i)` of the result.
    pub fn permute_rows(&self, sigma: &Permutation) -> Result<Matrix> {
        if sigma.len() != self.rows {
            return Err(Error::ShapeMismatch(format!(
                "permutation of {} rows applied to {} rows",
                sigma.len(),
                self.rows
            )));
        }
        let mut out = Matrix::filled(self.rows, self.cols, 0);
        for i in 0..self.rows {
            out.row_mut(sigma.apply(i)).copy_from_slice(self.row(i));
        }
        Ok(out)
    }

    /// Applies a symbol map to every cell.
    pub fn map_symbols(&self, table: &[Symbol]) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| table[v as usize]).collect(),
        }
    }

    /// Checks every entry lies in the alphabet (optionally allowing erasures).
    pub fn check_symbols(&self, alphabet: Alphabet, allow_erasure: bool) -> Result<()> {
        let limit = alphabet.size() + usize::from(allow_erasure);
        match self.data.iter().position(|&v| v as usize >= limit) {
            Some(pos) => Err(Error::InvalidArgument(format!(
                "entry ({}, {}) = {} outside the alphabet of size {}",
                pos / self.cols.max(1),
                pos % self.cols.max(1),
                self.data[pos],
                alphabet.size()
            ))),
            None => Ok(()),
        }
    }
}

/// Column repetition pattern `S^n`: column `j` of `X` appears `s[j]` times in `Y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RepetitionPattern {
    s: Vec<usize>,
}

impl RepetitionPattern {
    pub fn new(s: Vec<usize>) -> Self {
        Self { s }
    }

    pub fn all_ones(n: usize) -> Self {
        Self { s: vec![1; n] }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.s
    }

    /// Number of columns `n` of the source database.
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// `K_n = sum_j S_j`, the column count of `Y`.
    pub fn total_columns(&self) -> usize {
        self.s.iter().sum()
    }

    /// `K~_n = #{j : S_j != 0}`.
    pub fn retained_count(&self) -> usize {
        self.s.iter().filter(|&&s| s != 0).count()
    }

    /// `I_R`, the 0-based indices of retained columns in increasing order.
    pub fn retained_indices(&self) -> Vec<usize> {
        self.s
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn deleted_indices(&self) -> Vec<usize> {
        self.s
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn max(&self) -> usize {
        self.s.iter().copied().max().unwrap_or(0)
    }

    /// `K_{j-1}` for every `j`: the first `Y` column of each run.
    pub fn run_starts(&self) -> Vec<usize> {
        let mut acc = 0;
        self.s
            .iter()
            .map(|&s| {
                let start = acc;
                acc += s;
                start
            })
            .collect()
    }

    /// For each `Y` column, the `X` column it was copied from.
    pub fn source_columns(&self) -> Vec<usize> {
        self.s
            .iter()
            .enumerate()
            .flat_map(|(j, &s)| std::iter::repeat_n(j, s))
            .collect()
    }

    /// Adjacency flags of `Y`: entry `k` is true iff columns `k` and `k+1` are replicas.
    pub fn replica_flags(&self) -> Vec<bool> {
        let src = self.source_columns();
        src.windows(2).map(|w| w[0] == w[1]).collect()
    }
}

/// A bijection on `0..m`: row `i` of `X` corresponds to row `apply(i)` of `Y`.
///
/// Serialized 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &v in &map {
            if v >= map.len() || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation of 0..{}",
                    map.len()
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            map: (0..m).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Self { map: inv }
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.map.iter().map(|&v| v + 1).collect()
    }

    pub fn from_one_based(values: &[usize]) -> Result<Self> {
        if values.contains(&0) {
            return Err(Error::InvalidArgument(
                "a permutation cannot contain the unmatched sentinel 0".into(),
            ));
        }
        Self::new(values.iter().map(|&v| v - 1).collect())
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Permutation) -> Self {
        Self {
            map: other.map.iter().map(|&v| self.map[v]).collect(),
        }
    }
}

/// Estimated row correspondence; `None` marks an unmatched (error) row.
///
/// Serialized 1-based with 0 as the unmatched sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", from = "Vec<usize>")]
pub struct Assignment {
    map: Vec<Option<usize>>,
}

impl Assignment {
    pub fn new(map: Vec<Option<usize>>) -> Self {
        Self { map }
    }

    pub fn unmatched(m: usize) -> Self {
        Self { map: vec![None; m] }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.map[i]
    }

    pub fn set(&mut self, i: usize, target: Option<usize>) {
        self.map[i] = target;
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.map
    }

    pub fn matched_count(&self) -> usize {
        self.map.iter().filter(|v| v.is_some()).count()
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.map.iter().map(|v| v.map_or(0, |t| t + 1)).collect()
    }

    pub fn from_one_based(values: &[usize]) -> Self {
        Self {
            map: values
                .iter()
                .map(|&v| if v == 0 { None } else { Some(v - 1) })
                .collect(),
        }
    }
}

impl From<&Permutation> for Assignment {
    fn from(p: &Permutation) -> Self {
        Self {
            map: p.map.iter().map(|&v| Some(v)).collect(),
        }
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.to_one_based()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(values: Vec<usize>) -> Result<Self> {
        Permutation::from_one_based(&values)
    }
}

impl From<Assignment> for Vec<usize> {
    fn from(a: Assignment) -> Self {
        a.to_one_based()
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(values: Vec<usize>) -> Self {
        Assignment::from_one_based(&values)
    }
}
