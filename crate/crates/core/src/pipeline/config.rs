use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalstats::BinScheme;
use crate::fusion::{FusionConfig, FusionMode, FusionSchedule, Modality};
use crate::nets::{CnnConfig, GcnConfig, SnnConfig, Task};
use crate::synthio::Cohort;

/// A unimodal network or a fusion of two or three embeddings.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    Unimodal(Modality),
    Fusion(FusionMode),
}

impl ModelSpec {
    /// `snn`, `gcn`, `cnn`, or fusion names such as `gcn_snn`, `cnn-gcn-snn`
    /// and `snn_snn`.
    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        if norm.contains(['_', '+', '⊗']) {
            Ok(ModelSpec::Fusion(FusionMode::parse(&norm)?))
        } else {
            Ok(ModelSpec::Unimodal(Modality::parse(&norm)?))
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Unimodal(m) => m.code().to_string(),
            ModelSpec::Fusion(f) => f.to_string(),
        }
    }

    /// Distinct modalities read by the model.
    pub fn modalities(&self) -> Vec<Modality> {
        let mut ms = match self {
            ModelSpec::Unimodal(m) => vec![*m],
            ModelSpec::Fusion(f) => f.modalities().to_vec(),
        };
        ms.dedup();
        ms
    }

    pub fn is_fusion(&self) -> bool {
        matches!(self, ModelSpec::Fusion(_))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.name()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// L1 coefficient on the network's weight matrices.
    #[serde(default)]
    pub l1: f64,
}

impl TrainHyper {
    fn validate(&self, what: &str) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) || !(self.l1 >= 0.0) {
            return Err(Error::Configuration(format!(
                "{what}: epochs and batch size must be positive, lr > 0, l1 >= 0"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelSpec,
    pub seed: u64,
    pub folds: usize,
    pub train_fraction: f64,
    /// Run only this fold.
    pub fold: Option<usize>,
    pub snn: SnnConfig,
    pub gcn: GcnConfig,
    pub cnn: CnnConfig,
    pub fusion: FusionConfig,
    pub schedule: FusionSchedule,
    pub snn_train: TrainHyper,
    pub gcn_train: TrainHyper,
    pub cnn_train: TrainHyper,
    pub bins: BinScheme,
    /// Folds trained concurrently.
    pub parallel: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Survival,
            model: ModelSpec::Fusion(FusionMode::trimodal()),
            seed: 0,
            folds: 15,
            train_fraction: 0.8,
            fold: None,
            snn: SnnConfig::default(),
            gcn: GcnConfig::default(),
            cnn: CnnConfig::default(),
            fusion: FusionConfig::default(),
            schedule: FusionSchedule::default(),
            snn_train: TrainHyper {
                epochs: 30,
                lr: 0.002,
                batch_size: 64,
                l1: 3e-4,
            },
            gcn_train: TrainHyper {
                epochs: 30,
                lr: 0.002,
                batch_size: 32,
                l1: 0.0,
            },
            cnn_train: TrainHyper {
                epochs: 30,
                lr: 0.0005,
                batch_size: 8,
                l1: 0.0,
            },
            bins: BinScheme::P33_66_100,
            parallel: 1,
        }
    }
}

impl RunConfig {
    /// Settings tuned for the small synthetic cohorts: narrower graph
    /// network, shorter unimodal runs, a smaller reduced fusion width and
    /// a longer head-only phase.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.gcn.hidden = 32;
        cfg.gcn.head_widths = vec![32, 32];
        cfg.gcn_train.epochs = 10;
        cfg.cnn_train.epochs = 15;
        cfg.fusion.reduced_width = 8;
        cfg.schedule.head_epochs = 25;
        cfg.schedule.finetune_epochs = 5;
        cfg
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::Configuration(format!("unknown preset {name:?}; expected paper or desk"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn hyper(&self, m: Modality) -> &TrainHyper {
        match m {
            Modality::Genomic => &self.snn_train,
            Modality::Graph => &self.gcn_train,
            Modality::Image => &self.cnn_train,
        }
    }

    /// Fold indices to run.
    pub fn fold_indices(&self) -> Result<Vec<usize>> {
        match self.fold {
            Some(k) if k >= self.folds => Err(Error::Configuration(format!(
                "fold {k} requested but only {} folds",
                self.folds
            ))),
            Some(k) => Ok(vec![k]),
            None => Ok((0..self.folds).collect()),
        }
    }

    /// Checks the configuration and sizes the networks' inputs from the
    /// cohort: genomic width, node-feature width and image side. Only the
    /// modalities read by `models` need to be present.
    pub fn fit_to(&mut self, cohort: &Cohort, models: &[ModelSpec]) -> Result<()> {
        if self.folds == 0 || !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Configuration("need folds >= 1 and train_fraction in (0, 1)".into()));
        }
        self.fold_indices()?;
        self.snn_train.validate("snn_train")?;
        self.gcn_train.validate("gcn_train")?;
        self.cnn_train.validate("cnn_train")?;
        if self.schedule.batch_size == 0 || !(self.schedule.lr > 0.0) {
            return Err(Error::Configuration("fusion schedule needs batch_size > 0 and lr > 0".into()));
        }
        if self.task == Task::Grade && cohort.patients.iter().any(|p| p.grade.is_none()) {
            return Err(Error::Configuration("grade task but some patients have no grade label".into()));
        }
        let mut needed: Vec<Modality> = models.iter().flat_map(ModelSpec::modalities).collect();
        needed.sort();
        needed.dedup();
        for m in needed {
            match m {
                Modality::Genomic => {
                    if !cohort.patients.iter().any(|p| p.has_genomic()) {
                        return Err(Error::Configuration("model needs genomic data; cohort has none".into()));
                    }
                    self.snn.input_dim = cohort.genomic_dim();
                }
                Modality::Graph => {
                    let g = cohort
                        .patients
                        .iter()
                        .flat_map(|p| &p.instances)
                        .find_map(|i| i.graph.as_ref())
                        .ok_or_else(|| Error::Configuration("model needs cell graphs; cohort has none".into()))?;
                    self.gcn.input_dim = g.n_features();
                }
                Modality::Image => {
                    self.cnn.side = cohort
                        .image_side()
                        .ok_or_else(|| Error::Configuration("model needs images; cohort has none".into()))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_round_trip() {
        for s in ["snn", "gcn", "cnn", "gcn_snn", "cnn_snn", "cnn_gcn_snn", "snn_snn", "gcn_gcn"] {
            assert_eq!(ModelSpec::parse(s).unwrap().name(), s);
        }
        assert_eq!(ModelSpec::parse("cnn-gcn-snn").unwrap().name(), "cnn_gcn_snn");
        assert_eq!(ModelSpec::parse("SNN").unwrap().name(), "snn");
        assert!(ModelSpec::parse("vgg").is_err());
        assert_eq!(ModelSpec::parse("snn_snn").unwrap().modalities(), vec![Modality::Genomic]);
    }

    #[test]
    fn config_json_uses_defaults_for_missing_fields() {
        let c: RunConfig = serde_json::from_str(r#"{"model": "gcn-snn", "folds": 3}"#).unwrap();
        assert_eq!(c.folds, 3);
        assert_eq!(c.model.name(), "gcn_snn");
        assert_eq!(c.snn_train.lr, 0.002);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn fold_selection() {
        let mut c = RunConfig {
            folds: 4,
            ..RunConfig::default()
        };
        assert_eq!(c.fold_indices().unwrap(), vec![0, 1, 2, 3]);
        c.fold = Some(2);
        assert_eq!(c.fold_indices().unwrap(), vec![2]);
        c.fold = Some(4);
        assert!(c.fold_indices().is_err());
    }
}
