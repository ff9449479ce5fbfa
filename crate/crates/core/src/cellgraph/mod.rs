//! Cell graphs from nuclei label masks.

pub mod contour;
pub mod glcm;
pub mod graph;
pub mod io;
pub mod knn;
pub mod mask;

pub use contour::{contour_features, ContourFeatures, CONTOUR_FEATURE_NAMES};
pub use glcm::{crop_centered, glcm_features, GlcmConfig, GLCM_FEATURE_NAMES, GLCM_SIDE};
pub use graph::{build_cell_graph, fit_normalizer, CellGraph, FeatureStats, GraphConfig};
pub use knn::{knn_adjacency, knn_directed, Adjacency};
pub use mask::{GrayMatrix, LabelMask};
