//! End-to-end de-anonymization of a labeled database from its seeds:
//! replica detection, deletion detection, plug-in estimation and matching.

use serde::Serialize;

use crate::deletion::{detect_deletions, DeletionDetection, DeletionMode, DEFAULT_RATIO_THRESHOLD};
use crate::error::{Error, Result};
use crate::estimate::{estimate_distributions, estimate_repetition_pattern, EstimatedModel};
use crate::gen::{DatabasePair, SeedPair};
use crate::infotheory::matching_capacity;
use crate::matching::{deanonymize, score_match, Decoder};
use crate::model::{Alphabet, Assignment, Matrix, Model, RepetitionPattern};
use crate::replica::{analyze_replicas, remove_extra_replicas, MixtureEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub deletion: DeletionMode,
    pub decoder: Decoder,
    /// Largest repetition count assumed when estimating `p_S`.
    pub s_max: usize,
    /// Treat a degenerate replica mixture (or too few columns) as "no
    /// replicas" instead of failing.
    pub replica_fallback: bool,
}

impl PipelineConfig {
    /// Ratio-based deletion detection and min-Δ matching.
    pub fn finite_n(s_max: usize) -> Self {
        Self {
            deletion: DeletionMode::Modified {
                ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            },
            decoder: Decoder::MinDelta,
            s_max,
            replica_fallback: false,
        }
    }
}

/// Replica flags over the columns of `Y`, with the mixture fit when one was
/// obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaStage {
    pub flags: Vec<bool>,
    pub estimate: Option<MixtureEstimate>,
    /// Set when the fallback replaced a failed detection.
    pub fallback: Option<String>,
}

pub fn replica_stage(y: &Matrix, fallback: bool) -> Result<ReplicaStage> {
    match analyze_replicas(y) {
        Ok(det) => Ok(ReplicaStage {
            flags: det.flags,
            estimate: Some(det.estimate),
            fallback: None,
        }),
        Err(e @ (Error::DegenerateMixture(_) | Error::TooFewColumns { .. })) if fallback => {
            Ok(ReplicaStage {
                flags: vec![false; y.cols().saturating_sub(1)],
                estimate: None,
                fallback: Some(e.to_string()),
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub replicas: ReplicaStage,
    pub deletions: DeletionDetection,
    pub pattern: RepetitionPattern,
    pub model: EstimatedModel,
    pub assignment: Assignment,
}

/// Runs every stage on `(x, y)` with the seeds.
///
/// Replicas are detected on `y` and removed from `G2` before deletion
/// detection; the two detections must agree on the number of retained
/// columns.
pub fn run_pipeline(
    x: &Matrix,
    y: &Matrix,
    seeds: &SeedPair,
    alphabet: Alphabet,
    config: &PipelineConfig,
) -> Result<PipelineReport> {
    if seeds.g2.cols() != y.cols() || seeds.g1.cols() != x.cols() {
        return Err(Error::ShapeMismatch(format!(
            "seeds are {}x{} / {}x{}, databases have {} / {} columns",
            seeds.g1.rows(),
            seeds.g1.cols(),
            seeds.g2.rows(),
            seeds.g2.cols(),
            x.cols(),
            y.cols()
        )));
    }
    let replicas = replica_stage(y, config.replica_fallback)?;
    let g2_bar = remove_extra_replicas(&seeds.g2, &replicas.flags)?;
    let deletions = detect_deletions(&seeds.g1, &g2_bar, alphabet, config.deletion)?;
    let pattern = estimate_repetition_pattern(&replicas.flags, &deletions.retained, x.cols())?;
    let model = estimate_distributions(&seeds.g1, &seeds.g2, &pattern, alphabet, config.s_max)?;
    let assignment = deanonymize(x, y, &pattern, &model, config.decoder)?;
    Ok(PipelineReport {
        replicas,
        deletions,
        pattern,
        model,
        assignment,
    })
}

/// Which stages went wrong against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub error_fraction: f64,
    pub replica_error: bool,
    pub deletion_error: bool,
    /// `|Ĥ(X,Y^S|S) - H(X,Y^S|S)|`.
    pub entropy_gap: f64,
    /// `|Î(X;Y^S|S) - I(X;Y^S|S)|`; absent when the estimate is too large to
    /// evaluate.
    pub information_gap: Option<f64>,
}

pub fn diagnose(
    report: &PipelineReport,
    pair: &DatabasePair,
    model: &Model,
) -> Result<Diagnostics> {
    let truth = EstimatedModel::from_model(model);
    let information_gap = match (
        matching_capacity(&report.model.p_x, &report.model.channel, &report.model.p_s),
        matching_capacity(model.p_x(), model.channel(), model.p_s()),
    ) {
        (Ok(a), Ok(b)) => Some((a - b).abs()),
        (Err(Error::CellBudgetExceeded { .. }), _) => None,
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok(Diagnostics {
        error_fraction: score_match(&report.assignment, &pair.sigma)?,
        replica_error: report.replicas.flags != pair.pattern.replica_flags(),
        deletion_error: report.deletions.retained != pair.pattern.retained_indices(),
        entropy_gap: (report.model.joint_entropy_given_s() - truth.joint_entropy_given_s()).abs(),
        information_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::generate_pair;
    use crate::model::ModelSpec;
    use crate::rng::SeedTree;

    #[test]
    fn recovers_moderate_instance() {
        let model = ModelSpec::deletion_duplication(200, 100, 5, 0.05, 0.3, 0.2)
            .build()
            .unwrap();
        let pair = generate_pair(&model, 200, &SeedTree::new(11)).unwrap();
        let cfg = PipelineConfig::finite_n(2);
        let report = run_pipeline(&pair.x, &pair.y, &pair.seeds, model.alphabet(), &cfg).unwrap();
        let diag = diagnose(&report, &pair, &model).unwrap();
        assert!(!diag.replica_error);
        assert!(!diag.deletion_error);
        assert_eq!(report.pattern, pair.pattern);
        assert_eq!(diag.error_fraction, 0.0);
        assert!(diag.entropy_gap < 0.5);
        assert!(diag.information_gap.unwrap() < 0.5);
    }

    #[test]
    fn fallback_replaces_degenerate_mixture() {
        // a single column cannot be analysed
        let y = Matrix::filled(10, 2, 0);
        assert!(replica_stage(&y, false).is_err());
        let stage = replica_stage(&y, true).unwrap();
        assert_eq!(stage.flags, vec![false]);
        assert!(stage.fallback.is_some());
    }

    #[test]
    fn seed_shape_checked() {
        let model = ModelSpec::deletion_duplication(20, 10, 3, 0.1, 0.3, 0.2)
            .build()
            .unwrap();
        let pair = generate_pair(&model, 20, &SeedTree::new(1)).unwrap();
        let bad = SeedPair {
            g1: pair.seeds.g1.clone(),
            g2: Matrix::filled(20, pair.y.cols() + 1, 0),
        };
        let cfg = PipelineConfig::finite_n(2);
        assert!(matches!(
            run_pipeline(&pair.x, &pair.y, &bad, model.alphabet(), &cfg),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
