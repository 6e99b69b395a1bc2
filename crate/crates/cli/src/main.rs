use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use deanon::deletion::DEFAULT_RATIO_THRESHOLD;
use deanon::histogram::detect_repetitions_histogram;
use deanon::io::{read_indices, read_json, read_matrix, write_indices, write_json, write_matrix};
use deanon::matching::default_epsilon;
use deanon::pipeline::PipelineConfig;
use deanon::replica::{analyze_replicas, remove_extra_replicas};
use deanon::report::emit_report;
use deanon::{
    capacity_report, detect_deletions, estimate_distributions, generate_pair, match_exact,
    run_experiment, run_pipeline, score_match, Alphabet, Assignment, Decoder, DeletionMode, Error,
    ExperimentPlan, ModelSpec, Permutation, RepetitionPattern, SeedTree,
};

const AFTER_HELP: &str = "\
Exit codes: 0 success, 2 configuration or I/O error, 3 detection failure.

Files: matrices are headerless CSV of 0-based symbols, one row per line.
Index files (pattern, sigma) hold one integer per line; sigma is 1-based
and 0 marks an unmatched row.

Experiment CSV columns:
  fig4 (replica)    epsilon,m,n,trials,errors,rate,bound
  fig5 (deletion)   epsilon,seeds,n,trials,errors,rate
  fig6 (matching)   epsilon,m,n,seeds,trials,rows,errors,rate
  fig7 (histogram)  alphabet,m,n,trials,errors,rate
Each sweep also writes <figure>.json (plan, seed, version, results with
analytic overlays) and, with --svg, <figure>.svg.";

#[derive(Parser)]
#[command(name = "deanon", version, about = "Distribution-agnostic database de-anonymization", after_help = AFTER_HELP)]
struct Cli {
    /// Master seed of every random stream
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// JSON model spec, or experiment plan for `experiment custom`
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Alphabet size |X|
    #[arg(long, default_value_t = 5)]
    alphabet: usize,
    /// Crossover probability of the symmetric channel
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Deletion probability
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    /// Duplication probability
    #[arg(long, default_value_t = 0.2)]
    gamma: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Asymptotic,
    Modified,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Typicality,
    Mindelta,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Custom,
}

#[derive(Args, Clone)]
struct DeletionArgs {
    #[arg(long, value_enum, default_value = "modified")]
    mode: ModeArg,
    /// τ̃ of the ratio test
    #[arg(long, default_value_t = DEFAULT_RATIO_THRESHOLD)]
    ratio_threshold: f64,
}

impl DeletionArgs {
    fn mode(&self) -> DeletionMode {
        match self.mode {
            ModeArg::Asymptotic => DeletionMode::Asymptotic,
            ModeArg::Modified => DeletionMode::Modified {
                ratio_threshold: self.ratio_threshold,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a database pair with seeds into the output directory
    Gen {
        #[command(flatten)]
        model: ModelArgs,
        /// Seed rows Λ
        #[arg(long, default_value_t = 100)]
        seeds: usize,
    },
    /// Flag adjacent replica columns of Y
    DetectReplicas {
        #[arg(long)]
        y: PathBuf,
    },
    /// Find the retained columns of X from the seeds
    DetectDeletions {
        #[arg(long)]
        g1: PathBuf,
        #[arg(long)]
        g2: PathBuf,
        #[arg(long)]
        alphabet: usize,
        /// Replica report of Y; extra replicas are dropped from G2 first
        #[arg(long)]
        replicas: Option<PathBuf>,
        #[command(flatten)]
        deletion: DeletionArgs,
    },
    /// Estimate p_X, p_{Y|X} and p_S from the seeds and a repetition pattern
    Estimate {
        #[arg(long)]
        g1: PathBuf,
        #[arg(long)]
        g2: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        alphabet: usize,
        #[arg(long, default_value_t = 2)]
        s_max: usize,
    },
    /// Run the full pipeline and match the rows of X to those of Y
    Match {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        g1: PathBuf,
        #[arg(long)]
        g2: PathBuf,
        #[arg(long)]
        alphabet: usize,
        #[arg(long, default_value_t = 2)]
        s_max: usize,
        #[arg(long, value_enum, default_value = "mindelta")]
        decoder: DecoderArg,
        /// Typicality slack; defaults to 4/sqrt(n)
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        deletion: DeletionArgs,
        /// True permutation, for scoring
        #[arg(long)]
        sigma: Option<PathBuf>,
        /// True repetition pattern, for the stage breakdown
        #[arg(long)]
        pattern: Option<PathBuf>,
    },
    /// Noiseless matching through column histograms
    MatchNoiseless {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        alphabet: usize,
        #[arg(long)]
        sigma: Option<PathBuf>,
    },
    /// Print the matching capacity of a model as JSON
    Capacity {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run a Monte Carlo sweep
    Experiment {
        #[arg(value_enum)]
        figure: FigureArg,
        /// Trials per grid point (overrides the preset)
        #[arg(long)]
        trials: Option<usize>,
        /// Paper-scale trial counts
        #[arg(long)]
        full: bool,
        /// Also write an SVG plot
        #[arg(long)]
        svg: bool,
        /// Print the plan as JSON without running it
        #[arg(long)]
        plan: bool,
    },
}

fn model_spec(cli_config: Option<&Path>, args: &ModelArgs) -> anyhow::Result<ModelSpec> {
    Ok(match cli_config {
        Some(path) => read_json(path)?,
        None => ModelSpec::deletion_duplication(
            args.m,
            args.n,
            args.alphabet,
            args.epsilon,
            args.delta,
            args.gamma,
        ),
    })
}

fn alphabet(size: usize) -> anyhow::Result<Alphabet> {
    Ok(Alphabet::new(size)?)
}

fn sigma_from(path: &Path) -> anyhow::Result<Permutation> {
    Permutation::from_one_based(&read_indices(path)?)
        .with_context(|| format!("{}: not a 1-based permutation", path.display()))
}

fn score(assignment: &Assignment, sigma: Option<&Path>) -> anyhow::Result<Option<f64>> {
    match sigma {
        Some(path) => Ok(Some(score_match(assignment, &sigma_from(path)?)?)),
        None => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = &cli.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Gen { model, seeds } => {
            let spec = model_spec(config, &model)?;
            let model = spec.build()?;
            let pair = generate_pair(&model, seeds, &SeedTree::new(cli.seed))?;
            write_matrix(&out.join("x.csv"), &pair.x)?;
            write_matrix(&out.join("y.csv"), &pair.y)?;
            write_matrix(&out.join("g1.csv"), &pair.seeds.g1)?;
            write_matrix(&out.join("g2.csv"), &pair.seeds.g2)?;
            write_indices(&out.join("pattern.csv"), pair.pattern.as_slice())?;
            write_indices(&out.join("sigma.csv"), &pair.sigma.to_one_based())?;
            write_json(&out.join("model.json"), &spec)?;
        }
        Command::DetectReplicas { y } => {
            let det = analyze_replicas(&read_matrix(&y)?)?;
            write_json(&out.join("replicas.json"), &det)?;
        }
        Command::DetectDeletions {
            g1,
            g2,
            alphabet: k,
            replicas,
            deletion,
        } => {
            let g1 = read_matrix(&g1)?;
            let mut g2 = read_matrix(&g2)?;
            if let Some(path) = replicas {
                let report: serde_json::Value = read_json(&path)?;
                let flags: Vec<bool> = serde_json::from_value(report["flags"].clone())
                    .with_context(|| format!("{}: no replica flags", path.display()))?;
                g2 = remove_extra_replicas(&g2, &flags)?;
            }
            let det = detect_deletions(&g1, &g2, alphabet(k)?, deletion.mode())?;
            write_json(&out.join("deletions.json"), &det)?;
        }
        Command::Estimate {
            g1,
            g2,
            pattern,
            alphabet: k,
            s_max,
        } => {
            let pattern = RepetitionPattern::new(read_indices(&pattern)?);
            let est = estimate_distributions(
                &read_matrix(&g1)?,
                &read_matrix(&g2)?,
                &pattern,
                alphabet(k)?,
                s_max,
            )?;
            write_json(&out.join("estimate.json"), &est)?;
        }
        Command::Match {
            x,
            y,
            g1,
            g2,
            alphabet: k,
            s_max,
            decoder,
            epsilon,
            deletion,
            sigma,
            pattern,
        } => {
            let x = read_matrix(&x)?;
            let y = read_matrix(&y)?;
            let seeds = deanon::SeedPair {
                g1: read_matrix(&g1)?,
                g2: read_matrix(&g2)?,
            };
            let decoder = match decoder {
                DecoderArg::Mindelta => Decoder::MinDelta,
                DecoderArg::Typicality => Decoder::Typicality {
                    epsilon: epsilon.unwrap_or_else(|| default_epsilon(x.cols())),
                },
            };
            let cfg = PipelineConfig {
                deletion: deletion.mode(),
                decoder,
                s_max,
                replica_fallback: true,
            };
            let start = Instant::now();
            let report = run_pipeline(&x, &y, &seeds, alphabet(k)?, &cfg)?;
            eprintln!("matched in {:.2}s", start.elapsed().as_secs_f64());
            let error_fraction = score(&report.assignment, sigma.as_deref())?;
            let stages = match pattern {
                Some(p) => {
                    let truth = RepetitionPattern::new(read_indices(&p)?);
                    Some(json!({
                        "replica_error": report.replicas.flags != truth.replica_flags(),
                        "deletion_error": report.deletions.retained != truth.retained_indices(),
                        "pattern_error": report.pattern != truth,
                    }))
                }
                None => None,
            };
            write_indices(
                &out.join("sigma_hat.csv"),
                &report.assignment.to_one_based(),
            )?;
            write_json(
                &out.join("match.json"),
                &json!({
                    "config": cfg,
                    "matched": report.assignment.matched_count(),
                    "error_fraction": error_fraction,
                    "stages": stages,
                    "report": report,
                }),
            )?;
        }
        Command::MatchNoiseless {
            x,
            y,
            alphabet: k,
            sigma,
        } => {
            let x = read_matrix(&x)?;
            let y = read_matrix(&y)?;
            let det = detect_repetitions_histogram(&x, &y, alphabet(k)?)?;
            let assignment: Assignment = if det.pattern.total_columns() == y.cols() {
                match_exact(&x, &y, &det.pattern)?
            } else {
                Assignment::unmatched(x.rows())
            };
            let error_fraction = score(&assignment, sigma.as_deref())?;
            write_indices(&out.join("sigma_hat.csv"), &assignment.to_one_based())?;
            write_json(
                &out.join("match_noiseless.json"),
                &json!({
                    "detection": det,
                    "matched": assignment.matched_count(),
                    "error_fraction": error_fraction,
                }),
            )?;
        }
        Command::Capacity { model } => {
            let spec = model_spec(config, &model)?;
            let model = spec.build()?;
            let report = capacity_report(model.p_x(), model.channel(), model.p_s())?;
            let text = serde_json::to_string_pretty(&json!({
                "growth_rate": spec.growth_rate(),
                "capacity": report,
            }))?;
            println!("{text}");
        }
        Command::Experiment {
            figure,
            trials,
            full,
            svg,
            plan: dry_run,
        } => {
            let mut plan = match figure {
                FigureArg::Custom => {
                    let Some(path) = config else {
                        bail!(Error::InvalidArgument(
                            "experiment custom needs --config <plan.json>".into()
                        ));
                    };
                    let mut plan: ExperimentPlan = read_json(path)?;
                    plan.seed = cli.seed;
                    plan
                }
                FigureArg::Fig4 => ExperimentPlan::fig4(cli.seed, full),
                FigureArg::Fig5 => ExperimentPlan::fig5(cli.seed, full),
                FigureArg::Fig6 => ExperimentPlan::fig6(cli.seed, full),
                FigureArg::Fig7 => ExperimentPlan::fig7(cli.seed, full),
            };
            if let Some(t) = trials {
                plan.trials = t;
            }
            plan.validate()?;
            if dry_run {
                println!("{}", serde_json::to_string_pretty(&plan)?);
                return Ok(());
            }
            let result = run_experiment(&plan)?;
            let paths = emit_report(&result, out, svg)?;
            eprintln!(
                "{}: {} points x {} trials in {:.1}s -> {}",
                plan.figure,
                plan.grid.len(),
                plan.trials,
                result.wall_seconds,
                paths.csv.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let algorithmic = e.downcast_ref::<Error>().is_some_and(Error::is_algorithmic);
            ExitCode::from(if algorithmic { 3 } else { 2 })
        }
    }
}
