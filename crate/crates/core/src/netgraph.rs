//! Weighted directed communication graphs and the network matrices derived
//! from them.
//!
//! Node indices are 0-based here; file formats translate from 1-based.
//! `weights[(i, j)] = a_ij` is the weight of the edge `j → i` (agent `i`
//! receives from agent `j`).

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{spectral_radius, LinalgError, Matrix};

/// Default strictness tolerance on `|λ| - 1` for open-unit-disk tests.
pub const UNIT_DISK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("adjacency matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("invalid weight {weight} on edge {from} -> {to}")]
    InvalidWeight { from: usize, to: usize, weight: f64 },
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: usize, to: usize },
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("root set must be nonempty")]
    EmptyRootSet,
    #[error("reduction needs at least two nodes")]
    TooSmallToReduce,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Directed weighted graph with nonnegative weights and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: Matrix,
}

impl WeightedDigraph {
    pub fn from_adjacency(weights: Matrix) -> Result<Self, GraphError> {
        let (r, c) = weights.shape();
        if r != c {
            return Err(GraphError::NotSquare(r, c));
        }
        if r == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..r {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop(i));
            }
            for j in 0..r {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::InvalidWeight { from: j, to: i, weight: w });
                }
            }
        }
        Ok(WeightedDigraph { weights })
    }

    /// Builds a graph from `(from, to, weight)` triples with 0-based indices.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut w = Matrix::zeros(n, n);
        for &(from, to, weight) in edges {
            for index in [from, to] {
                if index >= n {
                    return Err(GraphError::NodeOutOfRange { index, n });
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !weight.is_finite() || weight <= 0.0 {
                return Err(GraphError::InvalidWeight { from, to, weight });
            }
            if w[(to, from)] != 0.0 {
                return Err(GraphError::DuplicateEdge { from, to });
            }
            w[(to, from)] = weight;
        }
        Ok(WeightedDigraph { weights: w })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Edges as `(from, to, weight)`, ordered by `(to, from)`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    out.push((j, i, w));
                }
            }
        }
        out
    }

    pub fn in_degrees(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.weights.row_slice(i).iter().sum())
            .collect()
    }

    /// Relabels nodes: new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(perm.len(), n);
        WeightedDigraph {
            weights: Matrix::from_fn(n, n, |i, j| self.weights[(perm[i], perm[j])]),
        }
    }

    /// Nodes reachable from `sources` along directed edges (breadth-first).
    pub fn reachable_from(&self, sources: &[usize]) -> Vec<bool> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue: Vec<usize> = Vec::new();
        for &s in sources {
            if s < n && !seen[s] {
                seen[s] = true;
                queue.push(s);
            }
        }
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            for i in 0..n {
                if self.weights[(i, j)] > 0.0 && !seen[i] {
                    seen[i] = true;
                    queue.push(i);
                }
            }
        }
        seen
    }
}

/// Laplacian `L`: `ℓ_ii = Σ_k a_ik`, `ℓ_ij = -a_ij`.
pub fn laplacian(g: &WeightedDigraph) -> Matrix {
    let n = g.n();
    let a = g.weights();
    let deg = g.in_degrees();
    Matrix::from_fn(n, n, |i, j| if i == j { deg[i] } else { -a[(i, j)] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrices {
    pub laplacian: Matrix,
    pub in_degree: Matrix,
    /// Row-stochastic `D = I - (I + D_in)^{-1} L`.
    pub d: Matrix,
    /// `D̃` for `n ≥ 2`.
    pub d_tilde: Option<Matrix>,
}

pub fn row_stochastic(g: &WeightedDigraph) -> NetworkMatrices {
    let n = g.n();
    let a = g.weights();
    let deg = g.in_degrees();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        let scale = 1.0 / (1.0 + deg[i]);
        let mut off = 0.0;
        for j in 0..n {
            if j != i {
                let v = a[(i, j)] * scale;
                d[(i, j)] = v;
                off += v;
            }
        }
        d[(i, i)] = 1.0 - off;
    }
    let d_tilde = reduced_matrix(&d).ok();
    NetworkMatrices {
        laplacian: laplacian(g),
        in_degree: Matrix::diag(&deg),
        d,
        d_tilde,
    }
}

/// `d̃_ij = d_ij - d_Nj` for `i, j < N`: the disagreement matrix relative to
/// the last agent.
pub fn reduced_matrix(d: &Matrix) -> Result<Matrix, GraphError> {
    if !d.is_square() {
        return Err(GraphError::NotSquare(d.nrows(), d.ncols()));
    }
    let n = d.nrows();
    if n < 2 {
        return Err(GraphError::TooSmallToReduce);
    }
    let last = n - 1;
    Ok(Matrix::from_fn(last, last, |i, j| d[(i, j)] - d[(last, j)]))
}

/// Some node reaches every node.
pub fn has_spanning_tree(g: &WeightedDigraph) -> bool {
    (0..g.n()).any(|root| g.reachable_from(&[root]).iter().all(|&r| r))
}

/// The sorted, de-duplicated node set `𝒞` whose members measure their output
/// against the reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootSet(Vec<usize>);

impl RootSet {
    pub fn new(nodes: &[usize], n: usize) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::EmptyRootSet);
        }
        let mut set = BTreeSet::new();
        for &index in nodes {
            if index >= n {
                return Err(GraphError::NodeOutOfRange { index, n });
            }
            set.insert(index);
        }
        Ok(RootSet(set.into_iter().collect()))
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut v: Vec<usize> = (0..perm.len()).filter(|&k| self.contains(perm[k])).collect();
        v.sort_unstable();
        RootSet(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootedNetworkMatrices {
    pub rootset: RootSet,
    /// Expanded Laplacian `L̄ = L + diag(ι)`.
    pub l_bar: Matrix,
    /// `D̄ = I - (2I + D_in)^{-1} L̄`.
    pub d_bar: Matrix,
    /// Every node is reachable from some root.
    pub rooted: bool,
}

pub fn rooted_networks(g: &WeightedDigraph, rootset: &RootSet) -> Result<RootedNetworkMatrices, GraphError> {
    let n = g.n();
    if rootset.nodes().is_empty() {
        return Err(GraphError::EmptyRootSet);
    }
    if let Some(&bad) = rootset.nodes().iter().find(|&&i| i >= n) {
        return Err(GraphError::NodeOutOfRange { index: bad, n });
    }
    let a = g.weights();
    let deg = g.in_degrees();
    let mut l_bar = laplacian(g);
    for &i in rootset.nodes() {
        l_bar[(i, i)] += 1.0;
    }
    let mut d_bar = Matrix::zeros(n, n);
    for i in 0..n {
        let scale = 1.0 / (2.0 + deg[i]);
        for j in 0..n {
            if j != i {
                d_bar[(i, j)] = a[(i, j)] * scale;
            }
        }
        let iota = if rootset.contains(i) { 1.0 } else { 0.0 };
        // 1 - (d_in + ι) / (2 + d_in), written to stay nonnegative
        d_bar[(i, i)] = (2.0 - iota) * scale;
    }
    let rooted = g.reachable_from(rootset.nodes()).iter().all(|&r| r);
    Ok(RootedNetworkMatrices {
        rootset: rootset.clone(),
        l_bar,
        d_bar,
        rooted,
    })
}

/// `max |λ(M)| < 1 - tol`. Eigenvalue failures propagate as errors.
pub fn spectral_radius_in_unit_disk(m: &Matrix, tol: Option<f64>) -> Result<bool, LinalgError> {
    Ok(spectral_radius(m)? < 1.0 - tol.unwrap_or(UNIT_DISK_TOL))
}
