//! Spatial k-nearest-neighbour graph over nucleus centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph as sorted neighbour lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds from index pairs, symmetrising and dropping self loops.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Parameter(format!("edge ({a},{b}) outside {n} nodes")));
            }
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(low, high)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let n = self.n_nodes();
        let mut a = vec![vec![0u8; n]; n];
        for (i, l) in self.neighbors.iter().enumerate() {
            for &j in l {
                a[i][j] = 1;
            }
        }
        a
    }

    /// Subgraph induced by `keep`, nodes renumbered in the order given.
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n_nodes()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let neighbors = keep
            .iter()
            .map(|&old| {
                let mut l: Vec<usize> = self.neighbors[old]
                    .iter()
                    .filter_map(|&j| (map[j] != usize::MAX).then_some(map[j]))
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        Self { neighbors }
    }

    /// Binarised `A + A^2` without self loops: neighbours within two hops.
    pub fn two_hop(&self) -> Self {
        let neighbors = (0..self.n_nodes())
            .map(|i| {
                let mut l: Vec<usize> = self.neighbors[i]
                    .iter()
                    .flat_map(|&j| std::iter::once(j).chain(self.neighbors[j].iter().cloned()))
                    .filter(|&j| j != i)
                    .collect();
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect();
        Self { neighbors }
    }

    /// Neighbour lists with each node also listed as its own neighbour.
    pub fn with_self_loops(&self) -> Vec<Vec<usize>> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut l = l.clone();
                let pos = l.partition_point(|&j| j < i);
                l.insert(pos, i);
                l
            })
            .collect()
    }
}

/// Directed edges `i -> j` for the `k` closest `j` with distance `< d`
/// (ties to the lower index), symmetrised by union.
pub fn knn_adjacency(centroids: &[[f64; 2]], k: usize, d: f64) -> Result<Adjacency> {
    let out = knn_directed(centroids, k, d)?;
    let edges: Vec<(usize, usize)> = out
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.iter().map(move |&j| (i, j)))
        .collect();
    Adjacency::from_edges(centroids.len(), &edges)
}

/// Outgoing neighbour lists before symmetrisation, nearest first.
pub fn knn_directed(centroids: &[[f64; 2]], k: usize, d: f64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || d.is_nan() || d <= 0.0 {
        return Err(Error::Parameter(format!("knn needs k >= 1 and d > 0, got k={k}, d={d}")));
    }
    let n = centroids.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = centroids[i][0] - centroids[j][0];
                let dy = centroids[i][1] - centroids[j][1];
                ((dx * dx + dy * dy).sqrt(), j)
            })
            .filter(|(dist, _)| *dist < d)
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.push(cand.into_iter().take(k).map(|(_, j)| j).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_boundary() {
        let a = knn_adjacency(&[[0.0, 0.0], [3.0, 4.0]], 5, 5.5).unwrap();
        assert_eq!(a.to_dense(), vec![vec![0, 1], vec![1, 0]]);
        let b = knn_adjacency(&[[0.0, 0.0], [3.0, 4.0]], 5, 5.0).unwrap();
        assert!(b.edges().is_empty());
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        // Node 0 sees 1, 2, 3 at the same distance; k = 1 keeps 0 -> 1.
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        let out = knn_directed(&pts, 1, 10.0).unwrap();
        assert_eq!(out[0], vec![1]);
        assert_eq!(out[3], vec![0]);
    }

    #[test]
    fn two_hop_and_self_loops() {
        let a = Adjacency::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let t = a.two_hop();
        assert_eq!(t.neighbors()[0], vec![1, 2]);
        assert_eq!(t.neighbors()[1], vec![0, 2, 3]);
        assert_eq!(a.with_self_loops()[1], vec![0, 1, 2]);
        let sub = a.induced(&[3, 2, 0]);
        assert_eq!(sub.neighbors(), &[vec![1], vec![0], vec![]]);
    }
}
