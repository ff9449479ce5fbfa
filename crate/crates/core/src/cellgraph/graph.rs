use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contour::{features_from_pixels, CONTOUR_FEATURE_NAMES};
use super::glcm::{crop_centered, glcm_features, GlcmConfig, GLCM_FEATURE_NAMES};
use super::knn::{knn_adjacency, Adjacency};
use super::mask::{GrayMatrix, LabelMask};
use crate::error::{dim_err, Error, Result};
use crate::numcore::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub k: usize,
    /// Edge cutoff in pixels.
    pub d: f64,
    pub glcm: GlcmConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: 5,
            d: 100.0,
            glcm: GlcmConfig::default(),
        }
    }
}

/// Per-column z-score statistics fitted on training graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGraph {
    /// `[x, y]` = `[col, row]` pixel coordinates of each nucleus.
    pub centroids: Vec<[f64; 2]>,
    pub feature_names: Vec<String>,
    /// `[N, F]` node features.
    pub x: Tensor,
    pub adjacency: Adjacency,
    /// Set once `x` has been standardised.
    pub normalization: Option<FeatureStats>,
}

pub fn build_cell_graph(
    mask: &LabelMask,
    gray: &GrayMatrix,
    external: Option<&Tensor>,
    cfg: &GraphConfig,
) -> Result<CellGraph> {
    if gray.height != mask.height() || gray.width != mask.width() {
        return dim_err(format!(
            "image {}x{} does not match mask {}x{}",
            gray.height,
            gray.width,
            mask.height(),
            mask.width()
        ));
    }
    let cells: Vec<(u32, Vec<(usize, usize)>)> = mask.pixels_by_label().into_iter().collect();
    let n = cells.len();
    if n == 0 {
        return Err(Error::Parameter("mask has no nuclei".into()));
    }
    let ext_width = match external {
        Some(e) => {
            let (rows, cols) = e.expect_2d("external features")?;
            if rows != n {
                return Err(Error::Alignment(format!("{rows} external feature rows for {n} nuclei")));
            }
            cols
        }
        None => 0,
    };

    let rows: Vec<([f64; 2], Vec<f64>)> = cells
        .par_iter()
        .map(|(label, px)| {
            let shape = features_from_pixels(px).map_err(|e| Error::Parameter(format!("nucleus {label}: {e}")))?;
            let cy = px.iter().map(|p| p.0 as f64).sum::<f64>() / px.len() as f64;
            let cx = px.iter().map(|p| p.1 as f64).sum::<f64>() / px.len() as f64;
            let crop = crop_centered(gray, cy, cx, cfg.glcm.side);
            let texture = glcm_features(&crop, &cfg.glcm)?;
            let mut feats = shape.to_array().to_vec();
            feats.extend_from_slice(&texture);
            Ok(([cx, cy], feats))
        })
        .collect::<Result<_>>()?;

    let width = 12 + ext_width;
    let mut data = Vec::with_capacity(n * width);
    let mut centroids = Vec::with_capacity(n);
    for (i, (c, feats)) in rows.into_iter().enumerate() {
        centroids.push(c);
        data.extend(feats);
        if let Some(e) = external {
            data.extend_from_slice(e.row_slice(i));
        }
    }
    let mut feature_names: Vec<String> = CONTOUR_FEATURE_NAMES
        .iter()
        .chain(GLCM_FEATURE_NAMES.iter())
        .map(|s| s.to_string())
        .collect();
    feature_names.extend((0..ext_width).map(|j| format!("ext_{j}")));
    let adjacency = knn_adjacency(&centroids, cfg.k, cfg.d)?;
    Ok(CellGraph {
        centroids,
        feature_names,
        x: Tensor::matrix(n, width, data)?,
        adjacency,
        normalization: None,
    })
}

/// Column means and population standard deviations over all nodes of the
/// given graphs. Constant columns get unit scale.
pub fn fit_normalizer<'a>(graphs: impl IntoIterator<Item = &'a CellGraph>) -> Result<FeatureStats> {
    let mut width = None;
    let mut count = 0.0;
    let mut sum: Vec<f64> = Vec::new();
    let mut sq: Vec<f64> = Vec::new();
    let all: Vec<&CellGraph> = graphs.into_iter().collect();
    for g in &all {
        let f = g.x.cols();
        if *width.get_or_insert(f) != f {
            return dim_err("graphs disagree on feature width");
        }
        sum.resize(f, 0.0);
        for i in 0..g.x.rows() {
            for (s, v) in sum.iter_mut().zip(g.x.row_slice(i)) {
                *s += v;
            }
            count += 1.0;
        }
    }
    if count == 0.0 {
        return Err(Error::Parameter("no training nodes to fit normalisation".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    sq.resize(mean.len(), 0.0);
    for g in &all {
        for i in 0..g.x.rows() {
            for ((q, v), m) in sq.iter_mut().zip(g.x.row_slice(i)).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
    }
    let std = sq
        .iter()
        .map(|q| {
            let s = (q / count).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(FeatureStats { mean, std })
}

impl CellGraph {
    pub fn n_nodes(&self) -> usize {
        self.centroids.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Standardises raw features with `stats`. Fails on an already
    /// normalised graph.
    pub fn normalized(&self, stats: &FeatureStats) -> Result<CellGraph> {
        if self.normalization.is_some() {
            return Err(Error::Parameter("graph features are already normalised".into()));
        }
        if stats.mean.len() != self.n_features() {
            return dim_err(format!(
                "{} normalisation columns for {} features",
                stats.mean.len(),
                self.n_features()
            ));
        }
        let mut x = self.x.clone();
        let f = self.n_features();
        for (k, v) in x.data_mut().iter_mut().enumerate() {
            *v = (*v - stats.mean[k % f]) / stats.std[k % f];
        }
        Ok(CellGraph {
            x,
            normalization: Some(stats.clone()),
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = GraphWire {
            centroids: self.centroids.clone(),
            feature_names: self.feature_names.clone(),
            x: (0..self.x.rows()).map(|i| self.x.row_slice(i).to_vec()).collect(),
            edges: self.adjacency.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            normalization: self.normalization.clone(),
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: GraphWire = serde_json::from_str(text)?;
        let n = wire.centroids.len();
        if wire.x.len() != n {
            return dim_err(format!("{} feature rows for {n} centroids", wire.x.len()));
        }
        if wire.x.iter().any(|r| r.len() != wire.feature_names.len()) {
            return dim_err("feature row width differs from feature_names");
        }
        let edges: Vec<(usize, usize)> = wire.edges.iter().map(|e| (e[0], e[1])).collect();
        Ok(CellGraph {
            adjacency: Adjacency::from_edges(n, &edges)?,
            x: Tensor::from_rows(&wire.x)?,
            centroids: wire.centroids,
            feature_names: wire.feature_names,
            normalization: wire.normalization,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphWire {
    centroids: Vec<[f64; 2]>,
    feature_names: Vec<String>,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    normalization: Option<FeatureStats>,
}
