//! Gated attention and one-appended Kronecker fusion of modality embeddings.

pub mod gate;
pub mod kron;
pub mod model;
pub mod schedule;

pub use gate::{gate, Gate};
pub use kron::{kron_fuse, FusionTensor};
pub use model::{Embeddings, FusionConfig, FusionHead, FusionMode, Modality};
pub use schedule::{FusionSchedule, Phase};
