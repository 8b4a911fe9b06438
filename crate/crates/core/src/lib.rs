//! Difficulty-influence quadrant (DIQ) data selection.
//!
//! * [`data`]: samples, Likert difficulty scores, score tables and their
//!   JSONL formats.
//! * [`influence`]: first-order gradient influence over training
//!   checkpoints, with reference models and a finite-difference checker.
//! * [`select`]: the quadrant split and priority fill.
//! * [`flops`]: closed-form FLOPs estimates.
//! * [`harness`]: synthetic data, SGD, exact one-step oracles and the
//!   DIQ-versus-random comparison.
//!
//! Data-parallel loops go through [`parallel`], which uses rayon when the
//! `parallel` feature is enabled and a sequential loop otherwise.

pub mod data;
pub mod flops;
pub mod harness;
pub mod influence;
pub mod numeric;
pub mod parallel;
pub mod select;

pub use data::{
    load_dataset, load_scores, validate_scores, Dataset, DifficultyScores, Dimension,
    InfluenceScore, Sample, ScoreTable, ScoredSample, ValidationReport,
};
pub use parallel::Workers;
pub use select::{select, Quadrant, SelectionConfig, SelectionManifest};
