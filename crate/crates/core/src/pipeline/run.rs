//! Cross-validation orchestration and checkpoint layout.
//!
//! ```text
//! out/
//!   config.json
//!   folds.json
//!   fold00/
//!     graph_stats.json
//!     snn.json  gcn.json  cnn.json  cnn_gcn_snn.json ...
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, RunConfig};
use super::data::FoldData;
use super::train::{predict_samples, train_fusion, train_unimodal, History, Networks};
use crate::cellgraph::FeatureStats;
use crate::error::{Error, Result};
use crate::fusion::Modality;
use crate::nets::Task;
use crate::numcore::{ParamStore, Rng};
use crate::synthio::{split_folds, Cohort, Fold};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "PATHFUSE_THREADS";

/// Prediction for one test patient, aggregated over their ROIs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientPrediction {
    pub patient: usize,
    /// Mean hazard over ROIs (survival).
    pub hazard: Option<f64>,
    /// Per-class maximum softmax over ROIs (grade).
    pub class_scores: Option<Vec<f64>>,
    pub predicted_grade: Option<usize>,
}

/// Trained parameters for one fold, keyed by model name.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldModels {
    pub fold: Fold,
    pub graph_stats: Option<FeatureStats>,
    pub stores: BTreeMap<String, ParamStore>,
    pub histories: BTreeMap<String, History>,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub models: FoldModels,
    /// Test-set predictions keyed by model name.
    pub predictions: BTreeMap<String, Vec<PatientPrediction>>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stream for a model within a fold; independent of which other models run.
fn model_rng(seed: u64, fold: usize, name: &str) -> Rng {
    Rng::new(seed, 1 + fold as u64).fork(fnv1a(name))
}

/// Aggregates per-sample outputs to patients: mean hazard, or per-class max
/// softmax with its argmax as the predicted grade.
pub fn aggregate(task: Task, data: &FoldData, samples: &[usize], outputs: &[Vec<f64>]) -> Vec<PatientPrediction> {
    let mut by_patient: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for (&s, o) in samples.iter().zip(outputs) {
        by_patient.entry(data.samples[s].patient).or_default().push(o);
    }
    by_patient
        .into_iter()
        .map(|(patient, rows)| match task {
            Task::Survival => PatientPrediction {
                patient,
                hazard: Some(rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64),
                class_scores: None,
                predicted_grade: None,
            },
            Task::Grade => {
                let c = rows[0].len();
                let scores: Vec<f64> = (0..c)
                    .map(|k| rows.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max))
                    .collect();
                let best = (0..c).fold(0, |b, k| if scores[k] > scores[b] { k } else { b });
                PatientPrediction {
                    patient,
                    hazard: None,
                    class_scores: Some(scores),
                    predicted_grade: Some(best),
                }
            }
        })
        .collect()
}

/// Modalities whose unimodal networks a model needs.
fn prerequisites(model: &ModelSpec) -> Vec<Modality> {
    model.modalities()
}

/// Trains `models` (and the unimodal networks they build on) on one fold
/// and predicts its test patients.
pub fn run_fold(cohort: &Cohort, cfg: &RunConfig, fold: &Fold, models: &[ModelSpec]) -> Result<FoldOutcome> {
    let nets = Networks::new(cfg)?;
    let data = FoldData::build(cohort, fold, None)?;
    let mut needed: Vec<Modality> = models.iter().flat_map(prerequisites).collect();
    needed.sort();
    needed.dedup();
    let mut unimodal = BTreeMap::new();
    let mut histories = BTreeMap::new();
    for &m in &needed {
        let mut rng = model_rng(cfg.seed, fold.index, m.code());
        let (store, h) = train_unimodal(&nets, m, cfg.hyper(m), &data, &mut rng)?;
        log::info!("fold {} {}: final loss {:.4}", fold.index, m.code(), h.losses.last().unwrap_or(&f64::NAN));
        unimodal.insert(m, store);
        histories.insert(m.code().to_string(), h);
    }
    let mut stores: BTreeMap<String, ParamStore> = unimodal
        .iter()
        .map(|(m, s)| (m.code().to_string(), s.clone()))
        .collect();
    for model in models {
        if let ModelSpec::Fusion(mode) = model {
            let name = model.name();
            let mut rng = model_rng(cfg.seed, fold.index, &name);
            let (store, h) = train_fusion(&nets, mode, &unimodal, &data, &mut rng)?;
            log::info!("fold {} {name}: final loss {:.4}", fold.index, h.losses.last().unwrap_or(&f64::NAN));
            stores.insert(name.clone(), store);
            histories.insert(name, h);
        }
    }
    let fm = FoldModels {
        fold: fold.clone(),
        graph_stats: data.graph_stats.clone(),
        stores,
        histories,
    };
    let mut predictions = BTreeMap::new();
    for model in models {
        predictions.insert(model.name(), predict_with(&nets, cfg, &data, &fm, model)?);
    }
    Ok(FoldOutcome { models: fm, predictions })
}

fn predict_with(
    nets: &Networks,
    cfg: &RunConfig,
    data: &FoldData,
    models: &FoldModels,
    model: &ModelSpec,
) -> Result<Vec<PatientPrediction>> {
    let name = model.name();
    let store = models
        .stores
        .get(&name)
        .ok_or_else(|| Error::Load(format!("fold {}: no checkpoint for model {name}", models.fold.index)))?;
    let per_patient = *model == ModelSpec::Unimodal(Modality::Genomic);
    let samples = data.select(&data.fold.test, &model.modalities(), per_patient);
    let outputs = predict_samples(nets, model, store, data, &samples)?;
    Ok(aggregate(cfg.task, data, &samples, &outputs))
}

/// Test-set predictions of a trained fold (e.g. loaded from disk).
pub fn predict_fold(cohort: &Cohort, cfg: &RunConfig, models: &FoldModels, model: &ModelSpec) -> Result<Vec<PatientPrediction>> {
    let mut cfg = cfg.clone();
    cfg.fit_to(cohort, std::slice::from_ref(model))?;
    let cfg = &cfg;
    let nets = Networks::new(cfg)?;
    let data = FoldData::build(cohort, &models.fold, models.graph_stats.clone())?;
    predict_with(&nets, cfg, &data, models, model)
}

/// Worker threads: `requested`, capped by `PATHFUSE_THREADS` when set.
pub fn thread_count(requested: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let n = requested.max(1);
    cap.map_or(n, |c| n.min(c))
}

/// Splits the cohort and runs the selected folds, concurrently when
/// `cfg.parallel > 1`. Results are in fold order either way.
pub fn cross_validate(cohort: &Cohort, cfg: &RunConfig, models: &[ModelSpec]) -> Result<Vec<FoldOutcome>> {
    let mut cfg = cfg.clone();
    cfg.fit_to(cohort, models)?;
    let folds = split_folds(cohort, cfg.folds, cfg.train_fraction, cfg.seed)?;
    let chosen: Vec<&Fold> = cfg.fold_indices()?.into_iter().map(|k| &folds[k]).collect();
    let threads = thread_count(cfg.parallel).min(chosen.len());
    if threads <= 1 {
        return chosen.into_iter().map(|f| run_fold(cohort, &cfg, f, models)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
    pool.install(|| chosen.par_iter().map(|f| run_fold(cohort, &cfg, f, models)).collect())
}

fn fold_dir(out: &Path, k: usize) -> std::path::PathBuf {
    out.join(format!("fold{k:02}"))
}

/// Writes every store of a fold plus its split, graph statistics and
/// training losses.
pub fn save_fold_models(out: &Path, models: &FoldModels) -> Result<()> {
    let dir = fold_dir(out, models.fold.index);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("fold.json"), serde_json::to_string_pretty(&models.fold)?)?;
    if let Some(s) = &models.graph_stats {
        std::fs::write(dir.join("graph_stats.json"), serde_json::to_string(s)?)?;
    }
    for (name, store) in &models.stores {
        store.save_checkpoint(&dir.join(format!("{name}.json")))?;
    }
    if !models.histories.is_empty() {
        std::fs::write(dir.join("history.json"), serde_json::to_string_pretty(&models.histories)?)?;
    }
    Ok(())
}

/// Loads the checkpoint for `model` of fold `k` written by
/// [`save_fold_models`].
pub fn load_fold_models(out: &Path, k: usize, model: &ModelSpec) -> Result<FoldModels> {
    let dir = fold_dir(out, k);
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).map_err(|e| Error::Load(format!("{}: {e}", dir.join(name).display())))
    };
    let fold: Fold = serde_json::from_str(&read("fold.json")?)?;
    let graph_stats = if dir.join("graph_stats.json").exists() {
        Some(serde_json::from_str(&read("graph_stats.json")?)?)
    } else {
        None
    };
    let name = model.name();
    let path = dir.join(format!("{name}.json"));
    if !path.exists() {
        return Err(Error::Load(format!(
            "missing checkpoint {} (train model {name} first)",
            path.display()
        )));
    }
    let store = ParamStore::load_checkpoint(&path)?;
    Ok(FoldModels {
        fold,
        graph_stats,
        stores: BTreeMap::from([(name, store)]),
        histories: BTreeMap::new(),
    })
}
