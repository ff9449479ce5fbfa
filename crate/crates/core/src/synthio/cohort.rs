use crate::cellgraph::CellGraph;
use crate::error::{dim_err, Error, Result};
use crate::evalstats::SurvivalCohort;
use crate::numcore::Tensor;

/// 8-bit RGB image, channel-interleaved, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != 3 * height * width {
            return dim_err(format!("{} bytes for a {height}x{width} RGB image", data.len()));
        }
        Ok(Self { height, width, data })
    }

    /// `[3, H, W]` tensor scaled to roughly [-1, 1].
    pub fn to_tensor(&self) -> Tensor {
        let hw = self.height * self.width;
        let mut out = vec![0.0; 3 * hw];
        for (k, px) in self.data.chunks(3).enumerate() {
            for c in 0..3 {
                out[c * hw + k] = px[c] as f64 / 127.5 - 1.0;
            }
        }
        Tensor::new(vec![3, self.height, self.width], out).expect("non-empty image")
    }

    /// Channel means on the `to_tensor` scale.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for px in self.data.chunks(3) {
            for c in 0..3 {
                m[c] += px[c] as f64;
            }
        }
        let n = (self.height * self.width) as f64;
        m.map(|s| s / n / 127.5 - 1.0)
    }
}

/// One region of interest; either modality may be missing.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub graph: Option<CellGraph>,
    pub image: Option<RgbImage>,
}

impl Instance {
    pub fn is_complete(&self) -> bool {
        self.graph.is_some() && self.image.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub time: f64,
    pub event: bool,
    pub grade: Option<usize>,
    pub genomic: Option<Vec<f64>>,
    pub instances: Vec<Instance>,
    /// Generating log-hazard, synthetic cohorts only.
    pub true_risk: Option<f64>,
}

impl PatientRecord {
    pub fn has_genomic(&self) -> bool {
        self.genomic.is_some()
    }

    pub fn has_graph(&self) -> bool {
        self.instances.iter().any(|i| i.graph.is_some())
    }

    pub fn has_image(&self) -> bool {
        self.instances.iter().any(|i| i.image.is_some())
    }

    /// Every modality present (genomic plus one ROI with graph and image).
    pub fn is_complete(&self) -> bool {
        self.has_genomic() && self.instances.iter().any(Instance::is_complete)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub genomic_names: Vec<String>,
    pub patients: Vec<PatientRecord>,
}

impl Cohort {
    pub fn new(genomic_names: Vec<String>, patients: Vec<PatientRecord>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for p in &patients {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Ingestion {
                    record: p.id.clone(),
                    reason: "duplicate patient id".into(),
                });
            }
            if let Some(g) = &p.genomic {
                if g.len() != genomic_names.len() {
                    return Err(Error::Ingestion {
                        record: p.id.clone(),
                        reason: format!("{} genomic values for {} columns", g.len(), genomic_names.len()),
                    });
                }
            }
            if !(p.time > 0.0 && p.time.is_finite()) {
                return Err(Error::Ingestion {
                    record: p.id.clone(),
                    reason: format!("survival time {} is not positive", p.time),
                });
            }
        }
        Ok(Self {
            genomic_names,
            patients,
        })
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn genomic_dim(&self) -> usize {
        self.genomic_names.len()
    }

    /// Survival outcome of the given patients scored by `scores`.
    pub fn survival(&self, idx: &[usize], scores: Vec<f64>) -> Result<SurvivalCohort> {
        SurvivalCohort::new(
            idx.iter().map(|&i| self.patients[i].time).collect(),
            idx.iter().map(|&i| self.patients[i].event).collect(),
            scores,
        )
    }

    /// Whether `p` carries every modality found anywhere in the cohort, with
    /// graph and image on a shared ROI when the cohort has both.
    pub fn covers(&self, p: &PatientRecord) -> bool {
        let genomic = self.patients.iter().any(PatientRecord::has_genomic);
        let graph = self.patients.iter().any(PatientRecord::has_graph);
        let image = self.patients.iter().any(PatientRecord::has_image);
        (!genomic || p.has_genomic())
            && p.instances
                .iter()
                .any(|i| (!graph || i.graph.is_some()) && (!image || i.image.is_some()))
    }

    /// Side length of the first ROI image in the cohort.
    pub fn image_side(&self) -> Option<usize> {
        self.patients
            .iter()
            .flat_map(|p| p.instances.iter())
            .find_map(|i| i.image.as_ref().map(|im| im.height))
    }
}
