//! Weighted digraphs, in-degree Laplacians, and the consensus coordinate
//! transform used to split multipliers into consensus and disagreement parts.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance used when comparing in- and out-degrees.
pub const DEGREE_TOL: f64 = 1e-10;
/// Absolute tolerance for deciding that an eigenvalue is zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-8;
/// Smallest eigenvalue of `L + Lᵀ` still accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;

/// Dense weighted digraph. `weights[(i, j)] > 0` means agent `i` receives
/// information from agent `j` (edge `j → i`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: DMatrix<f64>,
}

impl WeightedDigraph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.nrows() != weights.ncols() {
            return Err(Error::InvalidDimension(format!(
                "adjacency must be square with at least one node, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..weights.nrows() {
            for j in 0..weights.ncols() {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "weight a[{i}][{j}] = {w} must be finite and nonnegative"
                    )));
                }
                if i == j && w != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "self-loop weight a[{i}][{i}] = {w} must be zero"
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from `(from, to, weight)` triples with 0-indexed nodes.
    /// Duplicate edges are rejected.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidDimension("graph needs at least one node".into()));
        }
        let mut weights = DMatrix::zeros(n_nodes, n_nodes);
        for &(from, to, w) in edges {
            if from >= n_nodes || to >= n_nodes {
                return Err(Error::InvalidDimension(format!(
                    "edge ({from}, {to}) out of range for {n_nodes} nodes"
                )));
            }
            if from == to {
                return Err(Error::InvalidParameter(format!("self-loop on node {from}")));
            }
            if weights[(to, from)] != 0.0 {
                return Err(Error::InvalidParameter(format!("duplicate edge ({from}, {to})")));
            }
            weights[(to, from)] = w;
        }
        Self::new(weights)
    }

    /// Directed cycle `0 → 1 → … → N−1 → 0` with uniform weight.
    pub fn directed_cycle(n_nodes: usize, weight: f64) -> Result<Self> {
        let edges: Vec<_> = (0..n_nodes)
            .map(|k| (k, (k + 1) % n_nodes, weight))
            .filter(|(a, b, _)| a != b)
            .collect();
        Self::from_edges(n_nodes, &edges)
    }

    /// Returns the graph with every edge mirrored, `a_ij + a_ji` on both sides.
    pub fn symmetrized(&self) -> Self {
        let w = &self.weights + self.weights.transpose();
        Self { weights: w }
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Weighted in-degrees `Σ_j a_ij`.
    pub fn in_degrees(&self) -> Vec<f64> {
        self.weights.row_iter().map(|r| r.sum()).collect()
    }

    /// Weighted out-degrees `Σ_j a_ji`.
    pub fn out_degrees(&self) -> Vec<f64> {
        self.weights.column_iter().map(|c| c.sum()).collect()
    }

    /// `(from, to, weight)` triples, 0-indexed, in row-major order of the target.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for to in 0..n {
            for from in 0..n {
                let w = self.weights[(to, from)];
                if w > 0.0 {
                    out.push((from, to, w));
                }
            }
        }
        out
    }

    pub fn laplacian(&self) -> Laplacian {
        laplacian(self)
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(self)
    }

    pub fn is_weight_balanced(&self) -> bool {
        is_weight_balanced(self)
    }

    pub fn is_undirected(&self) -> bool {
        self.weights == self.weights.transpose()
    }

    fn reaches_all(&self, start: usize, forward: bool) -> bool {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                // forward: u → v exists iff a_vu > 0
                let w = if forward { self.weights[(v, u)] } else { self.weights[(u, v)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// In-degree Laplacian `L = D_in − A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Recovers the adjacency matrix from the off-diagonal entries.
    pub fn digraph(&self) -> WeightedDigraph {
        let n = self.n_nodes();
        let weights = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -self.matrix[(i, j)] });
        WeightedDigraph { weights }
    }

    /// `(L ⊗ I_n) v`.
    pub fn apply(&self, n: usize, v: &[f64]) -> Vec<f64> {
        linalg::kron_identity_apply(&self.matrix, n, v)
    }

    pub fn apply_into(&self, n: usize, v: &[f64], out: &mut [f64]) {
        linalg::kron_identity_apply_into(&self.matrix, n, v, out)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.sum()).collect()
    }

    /// True when every column sums to zero, i.e. `1ᵀL = 0`.
    pub fn has_zero_column_sums(&self) -> bool {
        let scale = self.matrix.diagonal().iter().fold(1.0_f64, |m, d| m.max(d.abs()));
        self.column_sums().iter().all(|s| s.abs() <= DEGREE_TOL * scale)
    }

    /// Refuses graphs that violate the standing network assumption.
    pub fn require_balanced_connected(&self) -> Result<()> {
        let g = self.digraph();
        let balanced = g.is_weight_balanced();
        let connected = g.is_strongly_connected();
        if balanced && connected {
            Ok(())
        } else {
            Err(Error::GraphAssumption(format!(
                "weight_balanced={balanced}, strongly_connected={connected}"
            )))
        }
    }
}

pub fn laplacian(g: &WeightedDigraph) -> Laplacian {
    let n = g.n_nodes();
    let d_in = g.in_degrees();
    let matrix = DMatrix::from_fn(n, n, |i, j| if i == j { d_in[i] } else { -g.weights[(i, j)] });
    Laplacian { matrix }
}

/// Graph-search test: every node reaches node 0 and node 0 reaches every node.
pub fn is_strongly_connected(g: &WeightedDigraph) -> bool {
    g.reaches_all(0, true) && g.reaches_all(0, false)
}

/// Degree test: weighted in-degree equals weighted out-degree at every node.
pub fn is_weight_balanced(g: &WeightedDigraph) -> bool {
    g.in_degrees()
        .iter()
        .zip(g.out_degrees())
        .all(|(din, dout)| (din - dout).abs() <= DEGREE_TOL * din.max(dout))
}

/// Spectral characterizations of the structural predicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDiagnostics {
    /// Eigenvalues of `L` with modulus below [`ZERO_EIGEN_TOL`].
    pub zero_eigenvalue_multiplicity: usize,
    /// Smallest eigenvalue of `L + Lᵀ`.
    pub min_symmetric_eigenvalue: f64,
    pub column_sums_zero: bool,
}

impl SpectralDiagnostics {
    pub fn zero_is_simple(&self) -> bool {
        self.zero_eigenvalue_multiplicity == 1
    }

    pub fn symmetric_part_psd(&self) -> bool {
        self.min_symmetric_eigenvalue >= -PSD_TOL
    }
}

pub fn spectral_diagnostics(g: &WeightedDigraph) -> SpectralDiagnostics {
    let l = laplacian(g);
    let zero_eigenvalue_multiplicity = if l.n_nodes() == 1 {
        1
    } else {
        l.matrix
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.norm() < ZERO_EIGEN_TOL)
            .count()
    };
    let sym = &l.matrix + l.matrix.transpose();
    let min_symmetric_eigenvalue = sym
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e));
    SpectralDiagnostics {
        zero_eigenvalue_multiplicity,
        min_symmetric_eigenvalue,
        column_sums_zero: l.has_zero_column_sums(),
    }
}

/// Coordinate change `(μ, θ) = (T ⊗ I_n) λ` separating the consensus
/// component μ (the agent average) from the disagreement θ.
///
/// The first row of `T` is `(1/N)·1ᵀ`, the first column of `T⁻¹` is `1_N`,
/// and the columns of `M₂` are the Helmert orthonormal basis of `1⊥`.
/// With that choice `M₁ = M₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusTransform {
    pub t_fwd: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
}

pub fn build_consensus_transform(n_nodes: usize) -> Result<ConsensusTransform> {
    if n_nodes < 2 {
        return Err(Error::InvalidDimension(format!(
            "consensus transform needs at least 2 nodes, got {n_nodes}"
        )));
    }
    let n = n_nodes;
    let mut m2 = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let kf = k as f64;
        let scale = 1.0 / (kf * (kf + 1.0)).sqrt();
        for i in 0..k {
            m2[(i, k - 1)] = scale;
        }
        m2[(k, k - 1)] = -kf * scale;
    }
    let m1 = m2.clone();

    let mut t_fwd = DMatrix::zeros(n, n);
    let mut t_inv = DMatrix::zeros(n, n);
    for j in 0..n {
        t_fwd[(0, j)] = 1.0 / n as f64;
        t_inv[(j, 0)] = 1.0;
    }
    t_fwd.view_mut((1, 0), (n - 1, n)).copy_from(&m1.transpose());
    t_inv.view_mut((0, 1), (n, n - 1)).copy_from(&m2);
    Ok(ConsensusTransform { t_fwd, t_inv, m1, m2 })
}

impl ConsensusTransform {
    pub fn n_nodes(&self) -> usize {
        self.t_fwd.nrows()
    }

    /// `(T ⊗ I_n) v`.
    pub fn forward(&self, n: usize, v: &[f64]) -> Vec<f64> {
        linalg::kron_identity_apply(&self.t_fwd, n, v)
    }

    /// `(T⁻¹ ⊗ I_n) w`.
    pub fn inverse(&self, n: usize, w: &[f64]) -> Vec<f64> {
        linalg::kron_identity_apply(&self.t_inv, n, w)
    }
}
