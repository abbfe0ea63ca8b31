//! Voxel lattices, the graph difference operator and the stacked split
//! operator `D = [I ; rho * D_G]`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which lattice neighbours are joined by an edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Axis-aligned unit neighbours: 4 in 2-d, 6 in 3-d.
    #[default]
    Axis,
    /// No edges at all; the split operator reduces to the identity.
    None,
}

/// Active cells of a lattice and the edges between adjacent active cells.
///
/// Nodes are numbered 0.. in raster (row-major) order of the active cells and
/// every edge `(i, j)` has `i < j`. Edges are sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGraph {
    dims: Vec<usize>,
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl VoxelGraph {
    /// Lattice with every cell active and axis connectivity.
    pub fn full(dims: &[usize]) -> Result<Self> {
        build_lattice(dims, None, Connectivity::Axis)
    }

    /// Graph over `n_nodes` nodes with an explicit edge list.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::EmptyMask);
        }
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for idx in [a, b] {
                if idx >= n_nodes {
                    return Err(Error::NodeOutOfRange {
                        index: idx,
                        count: n_nodes,
                    });
                }
            }
            if a == b {
                return Err(Error::Parameter(format!("self-loop on node {a}")));
            }
            out.push((a.min(b), a.max(b)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self {
            dims: vec![n_nodes],
            nodes: (0..n_nodes).collect(),
            edges: out,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Linear (raster) cell index of each node.
    pub fn cells(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Builds the graph of active cells of a `dims`-shaped lattice.
///
/// `mask` is in raster order; `None` means every cell is active.
pub fn build_lattice(
    dims: &[usize],
    mask: Option<&[bool]>,
    connectivity: Connectivity,
) -> Result<VoxelGraph> {
    if dims.is_empty() || dims.iter().any(|&d| d == 0) {
        return Err(Error::Parameter(format!(
            "lattice dims must be nonempty and positive, got {dims:?}"
        )));
    }
    let n_cells: usize = dims.iter().product();
    let active = |c: usize| mask.map_or(true, |m| m[c]);
    if let Some(m) = mask {
        if m.len() != n_cells {
            return Err(Error::Dimension(format!(
                "mask has {} cells but dims {:?} have {}",
                m.len(),
                dims,
                n_cells
            )));
        }
    }

    let mut node_of = vec![usize::MAX; n_cells];
    let mut nodes = Vec::new();
    for c in (0..n_cells).filter(|&c| active(c)) {
        node_of[c] = nodes.len();
        nodes.push(c);
    }
    if nodes.is_empty() {
        return Err(Error::EmptyMask);
    }

    let mut edges = Vec::new();
    if connectivity == Connectivity::Axis {
        // stride of each axis in row-major order
        let mut strides = vec![1usize; dims.len()];
        for a in (0..dims.len() - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        for &c in &nodes {
            for (a, &stride) in strides.iter().enumerate() {
                let coord = (c / stride) % dims[a];
                if coord + 1 < dims[a] {
                    let nb = c + stride;
                    if active(nb) {
                        edges.push((node_of[c], node_of[nb]));
                    }
                }
            }
        }
        edges.sort_unstable();
    }

    Ok(VoxelGraph {
        dims: dims.to_vec(),
        nodes,
        edges,
    })
}

/// `D = [I ; rho * D_G]`, applied matrix-free.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOperator {
    graph: VoxelGraph,
    rho: f64,
}

impl SplitOperator {
    pub fn new(graph: VoxelGraph, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Parameter(format!(
                "rho must be finite and nonnegative, got {rho}"
            )));
        }
        Ok(Self { graph, rho })
    }

    /// The identity operator on `p` features (no graph term).
    pub fn identity(p: usize) -> Result<Self> {
        Self::new(VoxelGraph::from_edges(p, &[])?, 0.0)
    }

    pub fn graph(&self) -> &VoxelGraph {
        &self.graph
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.graph.clone(), rho)
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn n_rows(&self) -> usize {
        self.n_nodes() + self.n_edges()
    }

    /// Edges whose rows actually constrain anything. With `rho == 0` the edge
    /// rows are identically zero, so none do.
    pub fn active_edges(&self) -> &[(usize, usize)] {
        if self.rho > 0.0 {
            self.graph.edges()
        } else {
            &[]
        }
    }

    pub fn apply(&self, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
        let p = self.n_nodes();
        if beta.len() != p {
            return Err(Error::Dimension(format!(
                "D expects a vector of length {p}, got {}",
                beta.len()
            )));
        }
        let mut out = Array1::zeros(self.n_rows());
        out.slice_mut(ndarray::s![..p]).assign(&beta);
        for (k, &(i, j)) in self.graph.edges.iter().enumerate() {
            out[p + k] = self.rho * (beta[i] - beta[j]);
        }
        Ok(out)
    }

    pub fn apply_transpose(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let p = self.n_nodes();
        if u.len() != self.n_rows() {
            return Err(Error::Dimension(format!(
                "D^T expects a vector of length {}, got {}",
                self.n_rows(),
                u.len()
            )));
        }
        let mut out = u.slice(ndarray::s![..p]).to_owned();
        for (k, &(i, j)) in self.graph.edges.iter().enumerate() {
            let w = self.rho * u[p + k];
            out[i] += w;
            out[j] -= w;
        }
        Ok(out)
    }

    /// Dense `(p + m) x p` matrix. Only meant for small instances.
    pub fn to_dense(&self) -> Array2<f64> {
        let p = self.n_nodes();
        let mut d = Array2::zeros((self.n_rows(), p));
        for i in 0..p {
            d[[i, i]] = 1.0;
        }
        for (k, &(i, j)) in self.graph.edges.iter().enumerate() {
            d[[p + k, i]] = self.rho;
            d[[p + k, j]] = -self.rho;
        }
        d
    }
}

/// Connected components of an undirected graph via iterative depth-first
/// search. Components are ordered by their smallest member and each component
/// lists its nodes in ascending order.
pub fn connected_components(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<usize>>> {
    // CSR adjacency
    let mut degree = vec![0usize; n_nodes + 1];
    for &(a, b) in edges {
        for idx in [a, b] {
            if idx >= n_nodes {
                return Err(Error::NodeOutOfRange {
                    index: idx,
                    count: n_nodes,
                });
            }
        }
        degree[a + 1] += 1;
        degree[b + 1] += 1;
    }
    for i in 0..n_nodes {
        degree[i + 1] += degree[i];
    }
    let offsets = degree;
    let mut fill = offsets.clone();
    let mut adj = vec![0usize; offsets[n_nodes]];
    for &(a, b) in edges {
        adj[fill[a]] = b;
        fill[a] += 1;
        adj[fill[b]] = a;
        fill[b] += 1;
    }

    let mut seen = vec![false; n_nodes];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    for root in 0..n_nodes {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        stack.push(root);
        let mut comp = Vec::new();
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &w in &adj[offsets[u]..offsets[u + 1]] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    Ok(out)
}

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration. Stops once `|A v - lambda v| <= tol * lambda`.
pub fn power_iteration(
    dim: usize,
    apply: impl Fn(&Array1<f64>) -> Array1<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    // fixed pseudo-random start: a constant vector can be orthogonal to the
    // top eigenvector (e.g. the graph Laplacian)
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Array1<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let av = apply(&v);
        lambda = v.dot(&av);
        let av_norm = av.dot(&av).sqrt();
        if av_norm == 0.0 {
            return Ok(0.0);
        }
        let resid = &av - &(&v * lambda);
        if resid.dot(&resid).sqrt() <= tol * lambda {
            return Ok(lambda);
        }
        v = av / av_norm;
    }
    Err(Error::NoConvergence {
        iters: max_iters,
        estimate: lambda,
    })
}

/// Largest singular values `(Lambda_X, Lambda_D)` of the design and the split
/// operator.
pub fn operator_norms(op: &SplitOperator, x: &Array2<f64>) -> Result<(f64, f64)> {
    let lx = power_iteration(
        x.ncols(),
        |v| x.t().dot(&x.dot(v)),
        POWER_TOL,
        POWER_MAX_ITERS,
    )?;
    let ld = power_iteration(
        op.n_nodes(),
        |v| {
            let dv = op.apply(v.view()).expect("dimension checked");
            op.apply_transpose(dv.view()).expect("dimension checked")
        },
        POWER_TOL,
        POWER_MAX_ITERS,
    )?;
    Ok((lx.sqrt(), ld.sqrt()))
}
