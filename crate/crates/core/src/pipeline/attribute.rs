//! Attribution reports for a trained fold: Integrated Gradients on genomic
//! and node-feature inputs, Grad-CAM on images.

use std::path::Path;

use serde::Serialize;

use super::config::{ModelSpec, RunConfig};
use super::data::FoldData;
use super::run::FoldModels;
use super::train::Networks;
use crate::attribution::{
    cohort_summary, grad_cam, integrated_gradients, node_saliency, write_cohort_summary_csv, write_patient_csv, IgMode,
};
use crate::error::{Error, Result};
use crate::fusion::{Embeddings, Modality};
use crate::nets::Task;
use crate::numcore::{Rng, Tape, Tensor, Var};
use crate::synthio::Cohort;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionReport {
    pub model: String,
    pub fold: usize,
    pub patients: usize,
    pub nodes: usize,
    /// Largest `|sum IG - (F(x) - F(0))|` over patients.
    pub max_completeness_gap: f64,
    pub heatmaps: usize,
}

/// Scalar target: the hazard, or the log-probability of `class`.
fn target(tape: &mut Tape, out: Var, task: Task, class: usize) -> Result<Var> {
    match task {
        Task::Survival => Ok(out),
        Task::Grade => tape.slice_cols(out, class, 1),
    }
}

/// Writes per-patient attribution CSVs, a genomic cohort summary and
/// heatmaps under `out` for up to `limit` test patients of the fold.
pub fn attribute_fold(
    cohort: &Cohort,
    cfg: &RunConfig,
    models: &FoldModels,
    model: &ModelSpec,
    out: &Path,
    nodes: usize,
    limit: Option<usize>,
) -> Result<AttributionReport> {
    let mut cfg = cfg.clone();
    cfg.fit_to(cohort, std::slice::from_ref(model))?;
    let cfg = &cfg;
    let nets = Networks::new(cfg)?;
    let data = FoldData::build(cohort, &models.fold, models.graph_stats.clone())?;
    let name = model.name();
    let store = models
        .stores
        .get(&name)
        .ok_or_else(|| Error::Load(format!("no checkpoint for model {name}")))?;
    std::fs::create_dir_all(out)?;
    let mods = model.modalities();
    let mut samples = data.select(&data.fold.test, &mods, true);
    if let Some(l) = limit {
        samples.truncate(l);
    }
    let uses = |m| mods.contains(&m);
    let fusion = match model {
        ModelSpec::Fusion(mode) => Some(nets.fusion_head(mode)),
        ModelSpec::Unimodal(_) => None,
    };
    let cache = if fusion.is_some() && uses(Modality::Image) {
        nets.image_cache(store, &data, &samples)?
    } else {
        Vec::new()
    };

    let mut report = AttributionReport {
        model: name.clone(),
        fold: models.fold.index,
        patients: 0,
        nodes,
        max_completeness_gap: 0.0,
        heatmaps: 0,
    };
    let mut genomic_rows = Vec::new();
    for &s in &samples {
        let sample = &data.samples[s];
        let pid = &cohort.patients[sample.patient].id;
        let class = match cfg.task {
            Task::Survival => 0,
            Task::Grade => cohort.patients[sample.patient].grade.unwrap_or(0),
        };
        let mut inputs = Vec::new();
        let mut modes = Vec::new();
        if uses(Modality::Genomic) {
            inputs.push(sample.genomic.clone().expect("selected for genomic"));
            modes.push(IgMode::Vector);
        }
        if uses(Modality::Graph) {
            inputs.push(sample.graph.as_ref().expect("selected for graph").0.clone());
            modes.push(IgMode::Graph);
        }
        if !inputs.is_empty() {
            let adj = sample.graph.as_ref().map(|g| &g.1);
            let baselines: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.shape())).collect();
            let f = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
                let mut rng = Rng::new(0, 0);
                let mut k = 0;
                let mut emb = Embeddings::default();
                if uses(Modality::Genomic) {
                    emb.genomic = Some(nets.snn.embed(tape, store, vars[k], &mut rng, false)?);
                    k += 1;
                }
                if uses(Modality::Graph) {
                    let adj = adj.expect("graph sample");
                    emb.graph = Some(nets.gcn.embed(tape, store, &[(vars[k], adj)], &mut rng, false)?);
                }
                let out = match &fusion {
                    Some(head) => {
                        if uses(Modality::Image) {
                            let t = cache[s].clone().expect("cached");
                            emb.image = Some(tape.input(t));
                        }
                        head.forward(tape, store, &emb, &mut rng, false)?
                    }
                    None => {
                        let m = mods[0];
                        nets.head(m).forward(tape, store, emb.get(m).expect("embedded"))?
                    }
                };
                target(tape, out, cfg.task, class)
            };
            let res = integrated_gradients(f, &inputs, &baselines, &modes, nodes)?;
            report.max_completeness_gap = report.max_completeness_gap.max(res.completeness_gap());
            let mut k = 0;
            if uses(Modality::Genomic) {
                let a = &res.attributions[k];
                write_patient_csv(
                    out.join(format!("genomic_{pid}.csv")),
                    &cohort.genomic_names,
                    a.scores.data(),
                    inputs[k].data(),
                )?;
                genomic_rows.push(a.scores.data().to_vec());
                k += 1;
            }
            if uses(Modality::Graph) {
                let sal = node_saliency(&res.attributions[k].scores);
                let g = cohort.patients[sample.patient].instances[sample.roi]
                    .graph
                    .as_ref()
                    .expect("graph sample");
                let mut w = csv::Writer::from_path(out.join(format!("graph_{pid}.csv")))?;
                w.write_record(["node", "x", "y", "saliency"])?;
                for (i, v) in sal.iter().enumerate() {
                    let c = g.centroids[i];
                    w.write_record([i.to_string(), c[0].to_string(), c[1].to_string(), v.to_string()])?;
                }
                w.flush()?;
            }
        }
        if *model == ModelSpec::Unimodal(Modality::Image) {
            let image = sample.image.as_ref().expect("selected for image");
            let hm = grad_cam(&nets.cnn, &nets.head(Modality::Image), store, image, class)?;
            hm.save_csv(out.join(format!("gradcam_{pid}.csv")))?;
            hm.save_png(out.join(format!("gradcam_{pid}.png")))?;
            report.heatmaps += 1;
        }
        report.patients += 1;
    }
    if !genomic_rows.is_empty() {
        let ranks = cohort_summary(&cohort.genomic_names, &genomic_rows)?;
        write_cohort_summary_csv(out.join("genomic_summary.csv"), &ranks)?;
    }
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}
