//! Cohort manifests.
//!
//! ```json
//! {
//!   "version": 1,
//!   "genomic_csv": "genomic.csv",
//!   "patients": [
//!     {"id": "P0001", "time": 412.5, "event": true, "grade": 2,
//!      "rois": [{"graph": "graphs/P0001_0.json", "image": "images/P0001_0.png"}]}
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest. The genomic CSV has a header row whose
//! first column is `patient_id`; patients absent from it have no genomic
//! profile. A ROI entry may omit `graph` or `image`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, Instance, PatientRecord, RgbImage};
use crate::cellgraph::CellGraph;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    genomic_csv: Option<String>,
    patients: Vec<ManifestPatient>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestPatient {
    id: String,
    time: f64,
    event: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grade: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_risk: Option<f64>,
    #[serde(default)]
    rois: Vec<ManifestRoi>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRoi {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
}

fn ingest_err(record: &str, reason: impl Into<String>) -> Error {
    Error::Ingestion {
        record: record.to_string(),
        reason: reason.into(),
    }
}

pub fn load_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    RgbImage::new(h, w, img.into_raw())
}

pub fn save_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, img.data.clone()).expect("buffer size matches");
    buf.save(path)?;
    Ok(())
}

fn read_genomic_csv(path: &Path) -> Result<(Vec<String>, HashMap<String, Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path).map_err(|e| ingest_err(&path.display().to_string(), e.to_string()))?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("patient_id") {
        return Err(ingest_err(
            &path.display().to_string(),
            "genomic CSV must start with a patient_id column",
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest_err(&path.display().to_string(), e.to_string()))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        if rec.len() != names.len() + 1 {
            return Err(ingest_err(
                &id,
                format!("{} genomic columns, header has {}", rec.len() - 1, names.len()),
            ));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|_| ingest_err(&id, format!("genomic value `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if rows.insert(id.clone(), values).is_some() {
            return Err(ingest_err(&id, "duplicate row in genomic CSV"));
        }
    }
    Ok((names, rows))
}

/// Reads a manifest and every file it references.
pub fn load_cohort(manifest_path: impl AsRef<Path>) -> Result<Cohort> {
    let manifest_path = manifest_path.as_ref();
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| ingest_err(&manifest_path.display().to_string(), e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let (names, mut genomic) = match &manifest.genomic_csv {
        Some(rel) => read_genomic_csv(&root.join(rel))?,
        None => (Vec::new(), HashMap::new()),
    };
    let mut patients = Vec::with_capacity(manifest.patients.len());
    for mp in manifest.patients {
        let resolve = |rel: &str| -> PathBuf { root.join(rel) };
        let mut instances = Vec::with_capacity(mp.rois.len());
        for roi in &mp.rois {
            let graph = roi
                .graph
                .as_deref()
                .map(|g| CellGraph::load(resolve(g)).map_err(|e| ingest_err(&mp.id, format!("graph {g}: {e}"))))
                .transpose()?;
            let image = roi
                .image
                .as_deref()
                .map(|i| load_rgb_png(resolve(i)).map_err(|e| ingest_err(&mp.id, format!("image {i}: {e}"))))
                .transpose()?;
            instances.push(Instance { graph, image });
        }
        patients.push(PatientRecord {
            genomic: genomic.remove(&mp.id),
            id: mp.id,
            time: mp.time,
            event: mp.event,
            grade: mp.grade,
            instances,
            true_risk: mp.true_risk,
        });
    }
    if !genomic.is_empty() {
        let mut extra: Vec<&String> = genomic.keys().collect();
        extra.sort();
        log::warn!("{} genomic rows have no manifest entry (first: {})", extra.len(), extra[0]);
    }
    Cohort::new(names, patients)
}

/// Writes `manifest.json`, `genomic.csv`, `graphs/` and `images/` under `dir`
/// and returns the manifest path.
pub fn save_cohort(cohort: &Cohort, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("graphs"))?;
    std::fs::create_dir_all(dir.join("images"))?;
    let mut w = csv::Writer::from_path(dir.join("genomic.csv"))?;
    let mut header = vec!["patient_id".to_string()];
    header.extend(cohort.genomic_names.iter().cloned());
    w.write_record(&header)?;
    for p in &cohort.patients {
        if let Some(g) = &p.genomic {
            let mut row = vec![p.id.clone()];
            row.extend(g.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let mut entries = Vec::with_capacity(cohort.len());
    for p in &cohort.patients {
        let mut rois = Vec::with_capacity(p.instances.len());
        for (k, inst) in p.instances.iter().enumerate() {
            let graph = match &inst.graph {
                Some(g) => {
                    let rel = format!("graphs/{}_{k}.json", p.id);
                    g.save(dir.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            let image = match &inst.image {
                Some(im) => {
                    let rel = format!("images/{}_{k}.png", p.id);
                    save_rgb_png(im, dir.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            rois.push(ManifestRoi { graph, image });
        }
        entries.push(ManifestPatient {
            id: p.id.clone(),
            time: p.time,
            event: p.event,
            grade: p.grade,
            true_risk: p.true_risk,
            rois,
        });
    }
    let manifest = Manifest {
        version: 1,
        genomic_csv: Some("genomic.csv".into()),
        patients: entries,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
