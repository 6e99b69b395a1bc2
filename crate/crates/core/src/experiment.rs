//! Monte Carlo sweeps over grids of model parameters.
//!
//! Every trial draws from its own [`SeedTree`] child keyed by the master
//! seed, the grid point index and the trial index, so a sweep gives the same
//! counts whatever the number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deletion::{detect_deletions_modified, DEFAULT_RATIO_THRESHOLD};
use crate::error::{Error, Result};
use crate::gen::{
    apply_repetition_and_noise, generate_pair, generate_seeds, sample_database,
    sample_repetition_pattern,
};
use crate::histogram::sample_column_histograms;
use crate::infotheory::{histogram_collision_estimate, replica_error_bound};
use crate::matching::Decoder;
use crate::model::{Model, ModelSpec, Permutation};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::replica::{analyze_replicas, mixture_parameters};
use crate::rng::{labels, SeedTree};

/// Which stage a sweep measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Replica detection on `Y`; a trial fails unless every adjacency is
    /// classified correctly.
    Replica,
    /// Ratio-based deletion detection on seeds whose extra replicas were
    /// removed with the true pattern; a trial fails unless `Î_R = I_R`.
    Deletion,
    /// The full pipeline; errors are mismatched rows.
    Matching,
    /// Column histogram collisions in `X`.
    Histogram,
}

/// One point of a sweep grid: uniform `p_X` over `alphabet` symbols, the
/// symmetric channel with crossover `epsilon` and repetition law
/// `(delta, 1 - delta - gamma, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub m: usize,
    pub n: usize,
    pub alphabet: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Seed rows `Λ`.
    pub seeds: usize,
}

impl GridPoint {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec::deletion_duplication(
            self.m,
            self.n,
            self.alphabet,
            self.epsilon,
            self.delta,
            self.gamma,
        )
    }

    pub fn model(&self) -> Result<Model> {
        self.spec().build()
    }
}

fn default_ratio_threshold() -> f64 {
    DEFAULT_RATIO_THRESHOLD
}

fn default_decoder() -> Decoder {
    Decoder::MinDelta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// `fig4` .. `fig7` or a free label for custom sweeps.
    pub figure: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub trials: usize,
    pub grid: Vec<GridPoint>,
    #[serde(default = "default_ratio_threshold")]
    pub ratio_threshold: f64,
    #[serde(default = "default_decoder")]
    pub decoder: Decoder,
}

/// Default and `--full` trial counts of the figure presets.
pub const FIG4_TRIALS: (usize, usize) = (10_000, 100_000);
pub const FIG5_TRIALS: (usize, usize) = (1_000, 10_000);
pub const FIG6_TRIALS: (usize, usize) = (1_000, 10_000);
pub const FIG7_TRIALS: (usize, usize) = (10_000, 1_000_000);

const DELTA: f64 = 0.3;
const GAMMA: f64 = 0.2;

fn point(m: usize, n: usize, alphabet: usize, epsilon: f64, seeds: usize) -> GridPoint {
    GridPoint {
        m,
        n,
        alphabet,
        epsilon,
        delta: DELTA,
        gamma: GAMMA,
        seeds,
    }
}

fn pick(trials: (usize, usize), full: bool) -> usize {
    if full {
        trials.1
    } else {
        trials.0
    }
}

/// Row sizes of the histogram sweep for each alphabet size.
pub fn fig7_rows(alphabet: usize) -> Vec<usize> {
    match alphabet {
        4 => vec![750, 1250, 2000, 3300, 5500, 9000],
        5 => vec![140, 230, 380, 620, 1000, 1700],
        6 => vec![60, 90, 130, 190, 280, 420],
        7 => vec![32, 45, 63, 88, 125, 180],
        _ => vec![],
    }
}

impl ExperimentPlan {
    /// Replica detection error against `m` (n = 100, |X| = 5).
    pub fn fig4(seed: u64, full: bool) -> Self {
        let grid = [0.1, 0.2, 0.3]
            .iter()
            .flat_map(|&e| (1..=8).map(move |k| point(50 * k, 100, 5, e, 0)))
            .collect();
        Self::preset(
            "fig4",
            ExperimentKind::Replica,
            seed,
            pick(FIG4_TRIALS, full),
            grid,
        )
    }

    /// Deletion detection error against the seed count (n = 100, τ̃ = 1.5).
    pub fn fig5(seed: u64, full: bool) -> Self {
        let grid = [0.1, 0.2, 0.3]
            .iter()
            .flat_map(|&e| {
                [10, 15, 20, 25, 30, 40, 50, 75, 100, 150, 200]
                    .into_iter()
                    .map(move |l| point(l, 100, 5, e, l))
            })
            .collect();
        Self::preset(
            "fig5",
            ExperimentKind::Deletion,
            seed,
            pick(FIG5_TRIALS, full),
            grid,
        )
    }

    /// Matching error against `m` (n = 25, Λ = 25).
    pub fn fig6(seed: u64, full: bool) -> Self {
        let grid = [0.1, 0.2]
            .iter()
            .flat_map(|&e| {
                [100, 200, 400, 800]
                    .into_iter()
                    .map(move |m| point(m, 25, 5, e, 25))
            })
            .collect();
        Self::preset(
            "fig6",
            ExperimentKind::Matching,
            seed,
            pick(FIG6_TRIALS, full),
            grid,
        )
    }

    /// Histogram collision probability against `m` (n = 100).
    pub fn fig7(seed: u64, full: bool) -> Self {
        let grid = (4..=7)
            .flat_map(|k| {
                fig7_rows(k)
                    .into_iter()
                    .map(move |m| point(m, 100, k, 0.0, 0))
            })
            .collect();
        Self::preset(
            "fig7",
            ExperimentKind::Histogram,
            seed,
            pick(FIG7_TRIALS, full),
            grid,
        )
    }

    pub fn figure(name: &str, seed: u64, full: bool) -> Result<Self> {
        match name {
            "fig4" => Ok(Self::fig4(seed, full)),
            "fig5" => Ok(Self::fig5(seed, full)),
            "fig6" => Ok(Self::fig6(seed, full)),
            "fig7" => Ok(Self::fig7(seed, full)),
            _ => Err(Error::InvalidArgument(format!("unknown figure {name:?}"))),
        }
    }

    fn preset(
        figure: &str,
        kind: ExperimentKind,
        seed: u64,
        trials: usize,
        grid: Vec<GridPoint>,
    ) -> Self {
        Self {
            figure: figure.into(),
            kind,
            seed,
            trials,
            grid,
            ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            decoder: Decoder::MinDelta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.kind == ExperimentKind::Deletion
            && (self.ratio_threshold.is_nan() || self.ratio_threshold <= 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "ratio threshold must exceed 1, got {}",
                self.ratio_threshold
            )));
        }
        for (i, p) in self.grid.iter().enumerate() {
            p.model()
                .map_err(|e| Error::InvalidArgument(format!("grid point {i}: {e}")))?;
            let needs_seeds = matches!(
                self.kind,
                ExperimentKind::Deletion | ExperimentKind::Matching
            );
            if needs_seeds && p.seeds < 2 {
                return Err(Error::InvalidArgument(format!(
                    "grid point {i}: need at least 2 seed rows"
                )));
            }
        }
        Ok(())
    }
}

/// Counts at one grid point. `rate = errors / rows`, where `rows` equals the
/// trial count except for matching sweeps, which count every row of every
/// trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: GridPoint,
    pub trials: usize,
    pub rows: usize,
    pub errors: usize,
    pub rate: f64,
    /// Analytic companion value: the union bound for replica sweeps, the
    /// leading-order collision probability for histogram sweeps.
    pub overlay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub plan: ExperimentPlan,
    pub points: Vec<PointResult>,
    /// Wall time in seconds; never written to the output files.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Number of failed units in one trial.
fn trial(plan: &ExperimentPlan, p: &GridPoint, model: &Model, tree: &SeedTree) -> Result<usize> {
    let outcome = match plan.kind {
        ExperimentKind::Replica => replica_trial(p, model, tree),
        ExperimentKind::Deletion => deletion_trial(p, model, tree, plan.ratio_threshold),
        ExperimentKind::Matching => matching_trial(p, model, tree, plan.decoder),
        ExperimentKind::Histogram => {
            let mut rng = tree.stream(labels::DATABASE, &[]);
            Ok(sample_column_histograms(model.p_x(), p.m, p.n, &mut rng).has_collision() as usize)
        }
    };
    match outcome {
        Err(e) if e.is_algorithmic() => Ok(units(plan.kind, p)),
        other => other,
    }
}

fn units(kind: ExperimentKind, p: &GridPoint) -> usize {
    if kind == ExperimentKind::Matching {
        p.m
    } else {
        1
    }
}

fn replica_trial(p: &GridPoint, model: &Model, tree: &SeedTree) -> Result<usize> {
    let pattern =
        sample_repetition_pattern(model.p_s(), p.n, &mut tree.stream(labels::PATTERN, &[]));
    if pattern.total_columns() == 0 {
        return Err(Error::AllColumnsDeleted);
    }
    let x = sample_database(model, &mut tree.stream(labels::DATABASE, &[]));
    // running distances do not depend on the row order
    let y = apply_repetition_and_noise(
        &x,
        &pattern,
        model.channel(),
        &Permutation::identity(p.m),
        &mut tree.stream(labels::NOISE, &[]),
    )?;
    let flags = analyze_replicas(&y)?.flags;
    Ok((flags != pattern.replica_flags()) as usize)
}

fn deletion_trial(p: &GridPoint, model: &Model, tree: &SeedTree, ratio: f64) -> Result<usize> {
    let pattern =
        sample_repetition_pattern(model.p_s(), p.n, &mut tree.stream(labels::PATTERN, &[]));
    if pattern.retained_count() == 0 {
        return Err(Error::AllColumnsDeleted);
    }
    let seeds = generate_seeds(
        model.p_x(),
        &pattern,
        p.seeds,
        model.channel(),
        &mut tree.stream(labels::SEED_DATABASE, &[]),
        &mut tree.stream(labels::SEED_NOISE, &[]),
    )?;
    let starts = pattern.run_starts();
    let firsts: Vec<usize> = pattern
        .retained_indices()
        .iter()
        .map(|&j| starts[j])
        .collect();
    let g2 = seeds.g2.select_columns(&firsts);
    let det = detect_deletions_modified(&seeds.g1, &g2, model.alphabet(), ratio)?;
    Ok((det.retained != pattern.retained_indices()) as usize)
}

fn matching_trial(
    p: &GridPoint,
    model: &Model,
    tree: &SeedTree,
    decoder: Decoder,
) -> Result<usize> {
    let pair = generate_pair(model, p.seeds, tree)?;
    let config = PipelineConfig {
        decoder,
        ..PipelineConfig::finite_n(model.s_max())
    };
    let report = run_pipeline(&pair.x, &pair.y, &pair.seeds, model.alphabet(), &config)?;
    Ok((0..p.m)
        .filter(|&i| report.assignment.get(i) != Some(pair.sigma.apply(i)))
        .count())
}

/// Analytic companion of a grid point, if the sweep kind has one.
pub fn overlay(kind: ExperimentKind, p: &GridPoint) -> Option<f64> {
    match kind {
        ExperimentKind::Replica => {
            let model = p.model().ok()?;
            let (p0, p1) = mixture_parameters(model.p_x(), model.channel());
            let k = (p.n as f64 * model.p_s().mean()).round() as usize;
            replica_error_bound(k, p.m, (p0 + p1) / 2.0, p0, p1).ok()
        }
        ExperimentKind::Histogram => Some(histogram_collision_estimate(p.n, p.m, p.alphabet)),
        _ => None,
    }
}

/// Runs every trial of every grid point on the current rayon pool.
///
/// Algorithmic failures of a trial count as errors on all of its units;
/// any other failure aborts the sweep.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<SweepResult> {
    plan.validate()?;
    let start = Instant::now();
    let root = SeedTree::new(plan.seed);
    let models: Vec<Model> = plan
        .grid
        .iter()
        .map(GridPoint::model)
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..plan.grid.len())
        .flat_map(|p| (0..plan.trials).map(move |t| (p, t)))
        .collect();
    let errors: Vec<usize> = tasks
        .par_iter()
        .map(|&(p, t)| {
            let tree = root.child(labels::TRIAL, &[p as u64, t as u64]);
            trial(plan, &plan.grid[p], &models[p], &tree)
        })
        .collect::<Result<_>>()?;
    let points = plan
        .grid
        .iter()
        .enumerate()
        .map(|(p, point)| {
            let errors: usize = errors[p * plan.trials..(p + 1) * plan.trials].iter().sum();
            let rows = plan.trials * units(plan.kind, point);
            PointResult {
                point: *point,
                trials: plan.trials,
                rows,
                errors,
                rate: errors as f64 / rows as f64,
                overlay: overlay(plan.kind, point),
            }
        })
        .collect();
    Ok(SweepResult {
        plan: plan.clone(),
        points,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
