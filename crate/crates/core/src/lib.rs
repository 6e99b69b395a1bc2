//! Simulation of database de-anonymization when the attacker does not know
//! the underlying distributions.
//!
//! An anonymized database `X` (`m x n`, i.i.d. entries) is turned into a
//! labeled database `Y` by repeating or deleting columns, passing every copy
//! through a noisy channel and shuffling the rows. A few correctly matched
//! seed rows are available. The crate implements every step of recovering
//! the row correspondence from `(X, Y, seeds)`:
//!
//! - [`replica`]: adjacent noisy replicas from running Hamming distances and
//!   a binomial mixture fit;
//! - [`deletion`]: deleted columns as missing outliers of seed Hamming
//!   distances;
//! - [`estimate`]: plug-in estimates of the three distributions;
//! - [`matching`]: typicality and min-Δ row matching;
//! - [`histogram`]: the noiseless shortcut through column histograms;
//! - [`pipeline`]: all of the above chained;
//! - [`experiment`] and [`report`]: Monte Carlo sweeps and their outputs.
//!
//! ```
//! use deanon::{generate_pair, run_pipeline, ModelSpec, PipelineConfig, SeedTree};
//!
//! let model = ModelSpec::deletion_duplication(100, 100, 5, 0.05, 0.3, 0.2)
//!     .build()
//!     .unwrap();
//! let pair = generate_pair(&model, 200, &SeedTree::new(1)).unwrap();
//! let report = run_pipeline(
//!     &pair.x,
//!     &pair.y,
//!     &pair.seeds,
//!     model.alphabet(),
//!     &PipelineConfig::finite_n(2),
//! )
//! .unwrap();
//! assert_eq!(report.pattern, pair.pattern);
//! ```
//!
//! Logarithms are base 2 throughout. Symbols are `0..|X|`; the erasure
//! symbol is `|X|`.

pub mod deletion;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod gen;
pub mod histogram;
pub mod infotheory;
pub mod io;
pub mod matching;
pub mod model;
pub mod pipeline;
pub mod replica;
pub mod report;
pub mod rng;

pub use deletion::{detect_deletions, DeletionDetection, DeletionMode};
pub use error::{Error, Result};
pub use estimate::{estimate_distributions, estimate_repetition_pattern, EstimatedModel};
pub use experiment::{run_experiment, ExperimentKind, ExperimentPlan, GridPoint, SweepResult};
pub use gen::{generate_pair, DatabasePair, SeedPair};
pub use histogram::{detect_repetitions_histogram, match_exact};
pub use infotheory::{capacity_report, matching_capacity};
pub use matching::{deanonymize, score_match, Decoder};
pub use model::{
    Alphabet, Assignment, CategoricalDistribution, Matrix, Model, ModelSpec, ObfuscationChannel,
    Permutation, RepetitionPattern, Symbol,
};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport};
pub use replica::detect_replicas;
pub use rng::SeedTree;
