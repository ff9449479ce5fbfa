//! Cohorts: synthetic generation, manifest ingestion and fold splitting.

pub mod cohort;
pub mod folds;
pub mod generate;
pub mod manifest;

pub use cohort::{Cohort, Instance, PatientRecord, RgbImage};
pub use folds::{split_folds, Fold};
pub use generate::{oracle_c_index, oracle_cohort, synth_generate, SynthSpec};
pub use manifest::{load_cohort, save_cohort};
