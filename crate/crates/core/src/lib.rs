//! Multimodal survival and grade modelling from histology images, cell
//! graphs and genomic profiles, fused by gated Kronecker products.

pub mod attribution;
pub mod cellgraph;
pub mod error;
pub mod evalstats;
pub mod fusion;
pub mod nets;
pub mod numcore;
pub mod pipeline;
pub mod synthio;

pub use error::{Error, Result};
pub use evalstats::SurvivalCohort;
pub use numcore::{ParamStore, Rng, Tensor};
