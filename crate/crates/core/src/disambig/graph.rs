//! Instance k-NN adjacency and candidate-set Jaccard similarity.

use crate::numkit::Matrix;
use crate::{Error, Result};

/// Symmetric binary adjacency stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
    self_loops: bool,
}

impl Adjacency {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Neighbours of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    /// Sets the diagonal to one (`true`) or zero (`false`).
    pub fn with_self_loops(mut self, on: bool) -> Self {
        self.self_loops = on;
        self
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        if i == j {
            self.self_loops
        } else {
            self.neighbors[i].binary_search(&j).is_ok()
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.len();
        let mut m = Matrix::zeros(n, n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                m.set(i, j, 1.0);
            }
            if self.self_loops {
                m.set(i, i, 1.0);
            }
        }
        m
    }

    /// Builds an adjacency from explicit undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Data(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if i != j {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Self { neighbors, self_loops: false })
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `P_ij = 1` iff `i` is among the `k` nearest (Euclidean) neighbours of `j` or
/// vice versa. Distance ties resolve to the lower index. Diagonal is zero.
pub fn knn_adjacency(features: &Matrix, k: usize) -> Result<Adjacency> {
    let n = features.rows();
    if k == 0 || k >= n {
        return Err(Error::config("k", format!("need 1 ≤ k < N, got k={k} with N={n}")));
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist.clear();
        let xi = features.row(i);
        dist.extend((0..n).filter(|&j| j != i).map(|j| (squared_distance(xi, features.row(j)), j)));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        dist.select_nth_unstable_by(k - 1, cmp);
        edges.extend(dist[..k].iter().map(|&(_, j)| (i, j)));
    }
    Adjacency::from_edges(n, &edges)
}

/// `|A ∩ B| / |A ∪ B|` for sorted, deduplicated label sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Dense candidate-set similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JaccardMatrix(pub Matrix);

pub fn jaccard_matrix(candidates: &[Vec<usize>]) -> Result<JaccardMatrix> {
    let sets = sorted_sets(candidates)?;
    let n = sets.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, 1.0);
        for j in i + 1..n {
            let v = jaccard(&sets[i], &sets[j]);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    Ok(JaccardMatrix(m))
}

pub(crate) fn sorted_sets(candidates: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.is_empty() {
                return Err(Error::Data(format!("candidate set of instance {i} is empty")));
            }
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            Ok(s)
        })
        .collect()
}
