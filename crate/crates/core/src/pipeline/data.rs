//! Per-fold tensors: graphs standardised with training statistics, images
//! scaled, genomic rows, and the labels they share with their patient.

use crate::cellgraph::{fit_normalizer, Adjacency, FeatureStats};
use crate::error::{Error, Result};
use crate::fusion::Modality;
use crate::numcore::Tensor;
use crate::synthio::{Cohort, Fold};

/// One ROI of one patient. Genomic data is per patient and repeated.
#[derive(Clone, Debug)]
pub struct Sample {
    pub patient: usize,
    pub roi: usize,
    /// `[1, p]`.
    pub genomic: Option<Tensor>,
    /// Standardised `[N, F]` node features and adjacency.
    pub graph: Option<(Tensor, Adjacency)>,
    /// `[3, H, W]`.
    pub image: Option<Tensor>,
}

impl Sample {
    pub fn has(&self, m: Modality) -> bool {
        match m {
            Modality::Genomic => self.genomic.is_some(),
            Modality::Graph => self.graph.is_some(),
            Modality::Image => self.image.is_some(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FoldData {
    pub fold: Fold,
    pub samples: Vec<Sample>,
    pub graph_stats: Option<FeatureStats>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub grades: Vec<Option<usize>>,
}

impl FoldData {
    /// Fits graph standardisation on the fold's training patients; pass
    /// `stats` to reuse saved statistics instead.
    pub fn build(cohort: &Cohort, fold: &Fold, stats: Option<FeatureStats>) -> Result<Self> {
        let graph_stats = match stats {
            Some(s) => Some(s),
            None => {
                let train_graphs: Vec<_> = fold
                    .train
                    .iter()
                    .flat_map(|&i| &cohort.patients[i].instances)
                    .filter_map(|inst| inst.graph.as_ref())
                    .collect();
                if train_graphs.is_empty() {
                    None
                } else {
                    Some(fit_normalizer(train_graphs)?)
                }
            }
        };
        let mut samples = Vec::new();
        for (pi, p) in cohort.patients.iter().enumerate() {
            let genomic = p
                .genomic
                .as_ref()
                .map(|g| Tensor::matrix(1, g.len(), g.clone()))
                .transpose()?;
            let rois = p.instances.len().max(1);
            for roi in 0..rois {
                let inst = p.instances.get(roi);
                let graph = match inst.and_then(|i| i.graph.as_ref()) {
                    Some(g) => {
                        let stats = graph_stats.as_ref().ok_or_else(|| {
                            Error::Configuration("graphs present but no training graphs to standardise".into())
                        })?;
                        let n = g.normalized(stats)?;
                        Some((n.x, n.adjacency))
                    }
                    None => None,
                };
                let image = inst.and_then(|i| i.image.as_ref()).map(|im| im.to_tensor());
                samples.push(Sample {
                    patient: pi,
                    roi,
                    genomic: genomic.clone(),
                    graph,
                    image,
                });
            }
        }
        Ok(Self {
            fold: fold.clone(),
            samples,
            graph_stats,
            times: cohort.patients.iter().map(|p| p.time).collect(),
            events: cohort.patients.iter().map(|p| p.event).collect(),
            grades: cohort.patients.iter().map(|p| p.grade).collect(),
        })
    }

    /// Samples of `patients` carrying every modality in `needs`. With
    /// `per_patient`, only the first such ROI of each patient is kept.
    pub fn select(&self, patients: &[usize], needs: &[Modality], per_patient: bool) -> Vec<usize> {
        let mut wanted = vec![false; self.times.len()];
        for &p in patients {
            wanted[p] = true;
        }
        let mut taken = vec![false; self.times.len()];
        let mut out = Vec::new();
        for (si, s) in self.samples.iter().enumerate() {
            if !wanted[s.patient] || !needs.iter().all(|&m| s.has(m)) {
                continue;
            }
            if per_patient {
                if taken[s.patient] {
                    continue;
                }
                taken[s.patient] = true;
            }
            out.push(si);
        }
        out
    }
}
