//! Exact information-theoretic quantities on finite distributions.
//!
//! All logarithms are base 2 and infinities propagate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CategoricalDistribution, ObfuscationChannel, NORMALIZATION_TOLERANCE};

/// Default ceiling on the number of cells of an enumerated joint table.
pub const DEFAULT_CELL_BUDGET: u128 = 10_000_000;

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

fn entropy_of(probs: &[f64]) -> f64 {
    probs.iter().copied().map(plogp).sum()
}

pub fn entropy(p: &CategoricalDistribution) -> f64 {
    entropy_of(p.probs())
}

/// `H(Y | X)` for `X ~ p_x` through `channel`.
pub fn conditional_entropy(p_x: &CategoricalDistribution, channel: &ObfuscationChannel) -> f64 {
    p_x.probs()
        .iter()
        .enumerate()
        .map(|(x, &px)| px * entropy(channel.row(x)))
        .sum()
}

/// Binary relative entropy `D(p || q)`; `+inf` when `q` puts no mass where `p` does.
pub fn binary_kl(p: f64, q: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).log2()
        }
    }
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// Probability table over a product of finite axes, stored row-major with the
/// last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    axes: Vec<(String, usize)>,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(axes: Vec<(String, usize)>, probs: Vec<f64>) -> Result<Self> {
        let cells: usize = axes.iter().map(|a| a.1).product();
        if cells != probs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cells declared, {} probabilities given",
                cells,
                probs.len()
            )));
        }
        for (i, (name, _)) in axes.iter().enumerate() {
            if axes[..i].iter().any(|a| &a.0 == name) {
                return Err(Error::InvalidArgument(format!("duplicate axis {name}")));
            }
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("negative or non-finite cell".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE * probs.len().max(1) as f64 {
            return Err(Error::InvalidArgument(format!(
                "joint table not normalized (sum = {total})"
            )));
        }
        Ok(Self { axes, probs })
    }

    /// `p_{X,Y}` with axes `X` and `Y`.
    pub fn channel_joint(p_x: &CategoricalDistribution, channel: &ObfuscationChannel) -> Self {
        let mut joint = Self::replicated(p_x, channel, 1, DEFAULT_CELL_BUDGET)
            .expect("two axes fit the budget");
        joint.axes[1].0 = "Y".into();
        joint
    }

    /// Joint law of `(X, Y_1, .., Y_s)` with the `Y_k` conditionally i.i.d.
    /// given `X`. Axes are named `X`, `Y1`, .., `Ys`.
    pub fn replicated(
        p_x: &CategoricalDistribution,
        channel: &ObfuscationChannel,
        s: usize,
        budget: u128,
    ) -> Result<Self> {
        let k = p_x.len();
        check_budget(k, s, budget)?;
        let mut axes = vec![("X".to_string(), k)];
        axes.extend((1..=s).map(|i| (format!("Y{i}"), k)));
        let block = k.pow(s as u32);
        let mut probs = vec![0.0; k * block];
        for x in 0..k {
            let row = &mut probs[x * block..(x + 1) * block];
            row[0] = p_x.prob(x);
            // expand one observation axis at a time
            let mut filled = 1;
            for _ in 0..s {
                for idx in (0..filled).rev() {
                    let base = row[idx];
                    for y in 0..k {
                        row[idx * k + y] = base * channel.prob(y, x);
                    }
                }
                filled *= k;
            }
        }
        Ok(Self { axes, probs })
    }

    pub fn axes(&self) -> &[(String, usize)] {
        &self.axes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn axis_position(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.0 == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown axis {name}")))
    }

    /// Marginal over the named axes, in the order given.
    pub fn marginal(&self, keep: &[&str]) -> Result<JointDistribution> {
        let positions = keep
            .iter()
            .map(|n| self.axis_position(n))
            .collect::<Result<Vec<_>>>()?;
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.1).collect();
        let out_axes: Vec<(String, usize)> =
            positions.iter().map(|&p| self.axes[p].clone()).collect();
        let out_cells: usize = out_axes.iter().map(|a| a.1).product();
        let mut out = vec![0.0; out_cells];
        let mut index = vec![0usize; sizes.len()];
        for &p in &self.probs {
            let mut o = 0;
            for &pos in &positions {
                o = o * sizes[pos] + index[pos];
            }
            out[o] += p;
            for d in (0..sizes.len()).rev() {
                index[d] += 1;
                if index[d] < sizes[d] {
                    break;
                }
                index[d] = 0;
            }
        }
        Ok(JointDistribution {
            axes: out_axes,
            probs: out,
        })
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    /// `I(A; B)` between two disjoint groups of axes.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        let both: Vec<&str> = a.iter().chain(b).copied().collect();
        let ha = self.marginal(a)?.entropy();
        let hb = self.marginal(b)?.entropy();
        let hab = self.marginal(&both)?.entropy();
        Ok((ha + hb - hab).max(0.0))
    }

    /// Whether the named axes are independent (up to `tol` per cell).
    pub fn is_product(&self, a: &str, b: &str, tol: f64) -> Result<bool> {
        let pa = self.marginal(&[a])?;
        let pb = self.marginal(&[b])?;
        let pab = self.marginal(&[a, b])?;
        let nb = pb.probs.len();
        Ok(pab
            .probs
            .iter()
            .enumerate()
            .all(|(i, &p)| (p - pa.probs[i / nb] * pb.probs[i % nb]).abs() <= tol))
    }
}

fn check_budget(alphabet: usize, s: usize, budget: u128) -> Result<()> {
    let cells = (alphabet as u128)
        .checked_pow(s as u32 + 1)
        .unwrap_or(u128::MAX);
    if cells > budget {
        return Err(Error::CellBudgetExceeded { cells, budget });
    }
    Ok(())
}

/// `I(X; Y_1 .. Y_s)` for `s` conditionally independent channel uses.
pub fn replicated_mutual_information(
    p_x: &CategoricalDistribution,
    channel: &ObfuscationChannel,
    s: usize,
) -> Result<f64> {
    replicated_mutual_information_with_budget(p_x, channel, s, DEFAULT_CELL_BUDGET)
}

/// As [`replicated_mutual_information`] with an explicit cell budget.
///
/// Computed as `H(Y^s) - s H(Y|X)`, enumerating every output sequence once.
pub fn replicated_mutual_information_with_budget(
    p_x: &CategoricalDistribution,
    channel: &ObfuscationChannel,
    s: usize,
    budget: u128,
) -> Result<f64> {
    if s == 0 {
        return Ok(0.0);
    }
    let k = p_x.len();
    check_budget(k, s, budget)?;
    // depth-first over y-sequences carrying p(x) * prod p(y_i | x) for every x
    let mut stack: Vec<Vec<f64>> = vec![p_x.probs().to_vec()];
    stack.extend((0..s).map(|_| vec![0.0; k]));
    let mut digits = vec![0usize; s];
    let mut h_ys = 0.0;
    let mut depth = 0;
    loop {
        if depth == s {
            h_ys += plogp(stack[s].iter().sum());
            // advance to the next sequence
            loop {
                if depth == 0 {
                    let h_y_x = conditional_entropy(p_x, channel);
                    return Ok((h_ys - s as f64 * h_y_x).max(0.0));
                }
                depth -= 1;
                digits[depth] += 1;
                if digits[depth] < k {
                    break;
                }
                digits[depth] = 0;
            }
        }
        let y = digits[depth];
        let (head, tail) = stack.split_at_mut(depth + 1);
        for (x, out) in tail[0].iter_mut().enumerate() {
            *out = head[depth][x] * channel.prob(y, x);
        }
        depth += 1;
    }
}

/// `C = sum_s p_S(s) I(X; Y^s)`.
pub fn matching_capacity(
    p_x: &CategoricalDistribution,
    channel: &ObfuscationChannel,
    p_s: &CategoricalDistribution,
) -> Result<f64> {
    Ok(capacity_report(p_x, channel, p_s)?.capacity)
}

/// Capacity together with its per-repetition terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub capacity: f64,
    pub entropy_x: f64,
    pub conditional_entropy: f64,
    /// `I(X; Y^s)` for `s = 0..=s_max`.
    pub mutual_information: Vec<f64>,
    /// `(1 - delta) H(X)`, the capacity of the noiseless channel.
    pub noiseless_capacity: f64,
}

pub fn capacity_report(
    p_x: &CategoricalDistribution,
    channel: &ObfuscationChannel,
    p_s: &CategoricalDistribution,
) -> Result<CapacityReport> {
    let mut mutual_information = Vec::with_capacity(p_s.len());
    let mut capacity = 0.0;
    for (s, &w) in p_s.probs().iter().enumerate() {
        let i = if w > 0.0 || s <= 1 {
            replicated_mutual_information(p_x, channel, s)?
        } else {
            // zero-weight terms are reported only when cheap
            replicated_mutual_information(p_x, channel, s).unwrap_or(f64::NAN)
        };
        if w > 0.0 {
            capacity += w * i;
        }
        mutual_information.push(i);
    }
    let entropy_x = entropy(p_x);
    Ok(CapacityReport {
        capacity,
        entropy_x,
        conditional_entropy: conditional_entropy(p_x, channel),
        mutual_information,
        noiseless_capacity: (1.0 - p_s.prob(0)) * entropy_x,
    })
}

/// Union bound on the replica detection error:
/// `(K-1) [2^{-m D(tau||p0)} + 2^{-m D(1-tau||1-p1)}]`.
pub fn replica_error_bound(k: usize, m: usize, tau: f64, p0: f64, p1: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) || !(0.0..=1.0).contains(&p1) || !(p1 < tau && tau < p0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {tau} not strictly between p1 = {p1} and p0 = {p0}"
        )));
    }
    let m = m as f64;
    let a = (-m * binary_kl(tau, p0)).exp2();
    let b = (-m * binary_kl(1.0 - tau, 1.0 - p1)).exp2();
    Ok(k.saturating_sub(1) as f64 * (a + b))
}

/// Intercept `C_k = ((1-k)/2) log2(4 pi) + (k/2) log2 k` of the log-linear
/// collision estimate.
pub fn collision_intercept(alphabet: usize) -> f64 {
    let k = alphabet as f64;
    (1.0 - k) / 2.0 * (4.0 * std::f64::consts::PI).log2() + k / 2.0 * k.log2()
}

/// `log2 xi = ((1-k)/2) log2 m + C_k + 2 log2 n`.
pub fn histogram_collision_log2(n: usize, m: usize, alphabet: usize) -> f64 {
    let k = alphabet as f64;
    (1.0 - k) / 2.0 * (m as f64).log2() + collision_intercept(alphabet) + 2.0 * (n as f64).log2()
}

/// Leading-order probability that some two column histograms of a uniform
/// `m x n` database coincide: `n^2 (4 pi m)^{(1-k)/2} k^{k/2}`.
pub fn histogram_collision_estimate(n: usize, m: usize, alphabet: usize) -> f64 {
    histogram_collision_log2(n, m, alphabet).exp2()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn symmetric(k: usize, eps: f64) -> ObfuscationChannel {
        ObfuscationChannel::symmetric(k, eps).unwrap()
    }

    #[test]
    fn entropy_examples() {
        close(
            entropy(&CategoricalDistribution::uniform(5)),
            5f64.log2(),
            1e-12,
        );
        assert_eq!(entropy(&CategoricalDistribution::point_mass(4, 1)), 0.0);
        let p = CategoricalDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        close(entropy(&p), 1.5, 1e-15);
    }

    #[test]
    fn kl_examples() {
        for p in [0.0, 0.1, 0.5, 0.93, 1.0] {
            assert_eq!(binary_kl(p, p), 0.0);
        }
        // 0.5 log2(2) + 0.5 log2(0.5/0.75)
        close(
            binary_kl(0.5, 0.25),
            0.5 + 0.5 * (2.0f64 / 3.0).log2(),
            1e-15,
        );
        close(binary_kl(0.5, 0.25), 0.207519, 1e-6);
        close(binary_kl(1.0, 0.5), 1.0, 1e-15);
        assert_eq!(binary_kl(0.5, 0.0), f64::INFINITY);
        assert_eq!(binary_kl(0.5, 1.0), f64::INFINITY);
        assert_eq!(binary_kl(0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn kl_nonnegative_on_grid() {
        for i in 0..=20 {
            for j in 0..=20 {
                let (p, q) = (i as f64 / 20.0, j as f64 / 20.0);
                let d = binary_kl(p, q);
                assert!(d >= 0.0);
                assert_eq!(d == 0.0, i == j, "{p} {q} {d}");
            }
        }
    }

    /// Independent oracle: nested loops over (x, y_1, .., y_s) with
    /// `I = sum p(x, y) log2(p(x, y) / (p(x) p(y)))`.
    fn brute_force_mi(p_x: &[f64], w: &[Vec<f64>], s: usize) -> f64 {
        let k = p_x.len();
        let seqs = k.pow(s as u32);
        let mut p_y = vec![0.0; seqs];
        let mut joint = vec![vec![0.0; seqs]; k];
        for x in 0..k {
            for (seq, slot) in joint[x].iter_mut().enumerate() {
                let mut p = p_x[x];
                let mut rest = seq;
                for _ in 0..s {
                    p *= w[x][rest % k];
                    rest /= k;
                }
                *slot = p;
                p_y[seq] += p;
            }
        }
        let mut mi = 0.0;
        for x in 0..k {
            for seq in 0..seqs {
                let p = joint[x][seq];
                if p > 0.0 {
                    mi += p * (p / (p_x[x] * p_y[seq])).log2();
                }
            }
        }
        mi
    }

    fn channel_rows(ch: &ObfuscationChannel) -> Vec<Vec<f64>> {
        (0..ch.size()).map(|x| ch.row(x).probs().to_vec()).collect()
    }

    #[test]
    fn replicated_mi_examples() {
        let p = CategoricalDistribution::uniform(5);
        let ch = symmetric(5, 0.2);
        assert_eq!(replicated_mutual_information(&p, &ch, 0).unwrap(), 0.0);
        close(
            replicated_mutual_information(&p, &ObfuscationChannel::identity(5), 1).unwrap(),
            5f64.log2(),
            1e-12,
        );
        let rows = channel_rows(&ch);
        for s in 1..=4 {
            close(
                replicated_mutual_information(&p, &ch, s).unwrap(),
                brute_force_mi(p.probs(), &rows, s),
                1e-12,
            );
        }
        // closed form for s = 1: log2 5 - H(0.8, 0.05 x 4)
        let h_row = -(0.8f64 * 0.8f64.log2()) - 4.0 * 0.05 * 0.05f64.log2();
        close(
            replicated_mutual_information(&p, &ch, 1).unwrap(),
            5f64.log2() - h_row,
            1e-12,
        );
    }

    #[test]
    fn replicated_mi_matches_joint_table() {
        let p = CategoricalDistribution::new(vec![0.35, 0.3, 0.2, 0.15]).unwrap();
        let ch = ObfuscationChannel::new(vec![
            vec![0.7, 0.1, 0.1, 0.1],
            vec![0.2, 0.5, 0.2, 0.1],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.25, 0.25, 0.25, 0.25],
        ])
        .unwrap();
        for s in 1..=3 {
            let joint = JointDistribution::replicated(&p, &ch, s, DEFAULT_CELL_BUDGET).unwrap();
            let ys: Vec<String> = (1..=s).map(|i| format!("Y{i}")).collect();
            let ys: Vec<&str> = ys.iter().map(String::as_str).collect();
            let via_table = joint.mutual_information(&["X"], &ys).unwrap();
            close(
                replicated_mutual_information(&p, &ch, s).unwrap(),
                via_table,
                1e-12,
            );
            close(
                via_table,
                brute_force_mi(p.probs(), &channel_rows(&ch), s),
                1e-12,
            );
        }
    }

    #[test]
    fn cell_budget_is_enforced() {
        let p = CategoricalDistribution::uniform(5);
        let ch = symmetric(5, 0.2);
        let err = replicated_mutual_information_with_budget(&p, &ch, 3, 100).unwrap_err();
        assert_eq!(
            err,
            Error::CellBudgetExceeded {
                cells: 625,
                budget: 100
            }
        );
        assert!(replicated_mutual_information(&p, &ch, 30).is_err());
    }

    #[test]
    fn data_processing_monotone_in_s() {
        for eps in [0.05, 0.2, 0.5, 0.79] {
            let p = CategoricalDistribution::uniform(5);
            let ch = symmetric(5, eps);
            let mut prev = 0.0;
            for s in 0..=6 {
                let i = replicated_mutual_information(&p, &ch, s).unwrap();
                assert!(i >= prev - 1e-12, "eps {eps} s {s}");
                assert!(i <= 5f64.log2() + 1e-12);
                prev = i;
            }
        }
    }

    #[test]
    fn noiseless_capacity_identity() {
        let p_x = CategoricalDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let p_s = CategoricalDistribution::new(vec![0.25, 0.5, 0.15, 0.1]).unwrap();
        let c = matching_capacity(&p_x, &ObfuscationChannel::identity(4), &p_s).unwrap();
        close(c, 0.75 * entropy(&p_x), 1e-9);
        let zero = matching_capacity(
            &p_x,
            &symmetric(4, 0.1),
            &CategoricalDistribution::point_mass(3, 0),
        )
        .unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn section_four_capacity_sandwich() {
        let p_x = CategoricalDistribution::uniform(5);
        let ch = symmetric(5, 0.2);
        let p_s = CategoricalDistribution::deletion_duplication(0.3, 0.2).unwrap();
        let rows = channel_rows(&ch);
        let oracle = 0.5 * brute_force_mi(p_x.probs(), &rows, 1)
            + 0.2 * brute_force_mi(p_x.probs(), &rows, 2);
        let c = matching_capacity(&p_x, &ch, &p_s).unwrap();
        close(c, oracle, 1e-12);
        assert!(c > 0.0 && c < 0.7 * 5f64.log2());
    }

    #[test]
    fn capacity_non_increasing_in_noise() {
        let p_x = CategoricalDistribution::uniform(5);
        let p_s = CategoricalDistribution::deletion_duplication(0.3, 0.2).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=16 {
            let eps = 0.8 * i as f64 / 16.0;
            let c = matching_capacity(&p_x, &symmetric(5, eps), &p_s).unwrap();
            assert!(c <= prev + 1e-12, "eps {eps}");
            prev = c;
        }
        assert!(prev.abs() < 1e-12);
    }

    #[test]
    fn capacity_report_fields() {
        let p_x = CategoricalDistribution::uniform(5);
        let p_s = CategoricalDistribution::deletion_duplication(0.3, 0.2).unwrap();
        let r = capacity_report(&p_x, &ObfuscationChannel::identity(5), &p_s).unwrap();
        assert_eq!(r.mutual_information.len(), 3);
        close(r.capacity, r.noiseless_capacity, 1e-12);
        assert_eq!(r.conditional_entropy, 0.0);
    }

    #[test]
    fn joint_marginals_and_independence() {
        let p_x = CategoricalDistribution::uniform(3);
        let joint = JointDistribution::channel_joint(&p_x, &symmetric(3, 0.1));
        let px = joint.marginal(&["X"]).unwrap();
        for &p in px.probs() {
            close(p, 1.0 / 3.0, 1e-15);
        }
        assert!(!joint.is_product("X", "Y", 1e-12).unwrap());
        let flat = JointDistribution::channel_joint(&p_x, &symmetric(3, 2.0 / 3.0));
        assert!(flat.is_product("X", "Y", 1e-12).unwrap());
        let swapped = joint.marginal(&["Y", "X"]).unwrap();
        assert_eq!(swapped.axes()[0].0, "Y");
        assert!(joint.marginal(&["Z"]).is_err());
        assert!(JointDistribution::new(vec![("A".into(), 2)], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn replica_error_bound_behaviour() {
        let (p0, p1) = (0.8, 0.35);
        assert!(replica_error_bound(90, 200, 0.9, p0, p1).is_err());
        assert!(replica_error_bound(90, 200, 0.35, p0, p1).is_err());
        // near p0 the first exponent vanishes
        let tau = p0 - 1e-9;
        let b = replica_error_bound(2, 200, tau, p0, p1).unwrap();
        close(b, 1.0, 1e-4);
        let tau = (p0 + p1) / 2.0;
        let small = replica_error_bound(90, 200, tau, p0, p1).unwrap();
        let large = replica_error_bound(90, 400, tau, p0, p1).unwrap();
        let dmin = binary_kl(tau, p0).min(binary_kl(1.0 - tau, 1.0 - p1));
        assert!(small.log2() - large.log2() >= 200.0 * dmin - 1e-9);
        let direct = 89.0
            * (2f64.powf(-200.0 * binary_kl(tau, p0))
                + 2f64.powf(-200.0 * binary_kl(1.0 - tau, 1.0 - p1)));
        close(small, direct, 1e-12 * direct);
    }

    #[test]
    fn collision_estimate_shape() {
        let a = histogram_collision_log2(100, 1_000, 5);
        let b = histogram_collision_log2(100, 2_000, 5);
        close(b - a, -2.0, 1e-12);
        for (k, slope) in [(4, -1.5), (5, -2.0), (6, -2.5), (7, -3.0)] {
            let d =
                histogram_collision_log2(100, 4_000, k) - histogram_collision_log2(100, 2_000, k);
            close(d, slope, 1e-12);
        }
        let r = histogram_collision_estimate(200, 1_000, 5)
            / histogram_collision_estimate(100, 1_000, 5);
        close(r, 4.0, 1e-12);
        let direct = 100f64.powi(2)
            * (1e4f64).powf(-2.0)
            * (4.0 * std::f64::consts::PI).powf(-2.0)
            * 5f64.powf(2.5);
        close(histogram_collision_estimate(100, 10_000, 5), direct, 1e-15);
    }
}
