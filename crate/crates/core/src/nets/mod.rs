//! Unimodal networks and output heads.

pub mod cnn;
pub mod gcn;
pub mod head;
pub mod snn;

pub use cnn::{Cnn, CnnConfig, ConvLayer};
pub use gcn::{sage_conv, sagpool, Gcn, GcnConfig, Pooled};
pub use head::{OutputHead, Task};
pub use snn::{Snn, SnnConfig};

/// Width of every unimodal embedding.
pub const EMBED_DIM: usize = 32;
