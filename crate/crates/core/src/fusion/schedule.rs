//! Two-phase fine-tuning of a fusion model from unimodal checkpoints.

use serde::{Deserialize, Serialize};

use crate::numcore::LrSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSchedule {
    /// Epochs with only the fusion layers trainable.
    pub head_epochs: usize,
    /// Epochs after unfreezing the graph and genomic networks.
    pub finetune_epochs: usize,
    pub lr: f64,
    /// L1 coefficient on genomic network weights.
    pub l1: f64,
    pub batch_size: usize,
}

impl Default for FusionSchedule {
    fn default() -> Self {
        Self {
            head_epochs: 5,
            finetune_epochs: 25,
            lr: 1e-4,
            l1: 3e-4,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase {
    pub epochs: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    /// Parameter-name prefixes that receive updates.
    pub trainable: Vec<&'static str>,
}

impl FusionSchedule {
    /// The image network never trains here: fusion consumes cached image
    /// embeddings.
    pub fn phases(&self) -> Vec<Phase> {
        vec![
            Phase {
                epochs: self.head_epochs,
                lr: self.lr,
                schedule: LrSchedule::Constant,
                trainable: vec![super::model::FUSION_PREFIX],
            },
            Phase {
                epochs: self.finetune_epochs,
                lr: self.lr,
                schedule: LrSchedule::LinearDecay {
                    flat_epochs: 0,
                    decay_epochs: self.finetune_epochs.max(1),
                },
                trainable: vec![super::model::FUSION_PREFIX, "gcn", "snn"],
            },
        ]
    }
}
