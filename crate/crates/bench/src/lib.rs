//! Input builders shared by the benchmarks.

use pathfuse::cellgraph::{knn_adjacency, Adjacency};
use pathfuse::{Rng, Tensor};

pub fn randn(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).expect("shape matches data")
}

/// Uniform points on a square canvas.
pub fn scatter(n: usize, side: f64, rng: &mut Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.uniform() * side, rng.uniform() * side]).collect()
}

/// A cell-graph-like adjacency: 5 nearest neighbours within 100 px.
pub fn spatial_graph(n: usize, rng: &mut Rng) -> Adjacency {
    let side = (n as f64).sqrt() * 30.0;
    knn_adjacency(&scatter(n, side, rng), 5, 100.0).expect("valid knn parameters")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_have_requested_sizes() {
        let mut rng = Rng::new(0, 0);
        assert_eq!(randn(&[3, 4], &mut rng).len(), 12);
        assert_eq!(spatial_graph(50, &mut rng).n_nodes(), 50);
    }
}
