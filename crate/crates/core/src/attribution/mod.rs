//! Integrated Gradients and Grad-CAM.

pub mod export;
pub mod gradcam;
pub mod ig;
pub mod quadrature;

pub use export::{cohort_summary, node_saliency, write_cohort_summary_csv, write_patient_csv, FeatureRank};
pub use gradcam::{grad_cam, Heatmap};
pub use ig::{integrated_gradients, Attribution, IgMode};
pub use quadrature::gauss_legendre_unit;
