//! From solver output to a weighted graph and its Laplacian.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected edges `{i, j}` stored as `(i, j)` with `i < j`, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_pairs(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::empty(p);
        for (i, j) in pairs {
            set.insert(i, j)?;
        }
        Ok(set)
    }

    /// Adds `{i, j}`; returns whether it was new.
    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j {
            return Err(Error::Input(format!("self-loop at node {i}")));
        }
        if i >= self.p || j >= self.p {
            return Err(Error::Input(format!(
                "edge ({i}, {j}) out of range for {} nodes",
                self.p
            )));
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges in ascending `(i, j)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn intersection_len(&self, other: &EdgeSet) -> usize {
        self.edges.intersection(&other.edges).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.p];
        for (i, j) in self.iter() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Number of connected components, isolated nodes included.
    pub fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.p).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut count = self.p;
        for (i, j) in self.iter() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
        count
    }
}

/// Per-outer-iteration solver record.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub outer: usize,
    /// Log-sum objective at this stage's `Ω̂`.
    pub objective: f64,
    pub inner_iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub edge_count: usize,
}

#[derive(Debug, Clone)]
pub struct GraphEstimate {
    pub omega_hat: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w_hat: DMatrix<f64>,
    pub laplacian_hat: DMatrix<f64>,
    pub edges: EdgeSet,
    pub diagnostics: Vec<OuterRecord>,
}

impl GraphEstimate {
    /// Assembles the graph quantities from a final `(Ω̂, V)` pair.
    pub fn from_solution(omega_hat: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        let edges = extract_edges(&v);
        let w_hat = build_weights(&omega_hat, &edges);
        let laplacian_hat = build_laplacian(&w_hat)?;
        Ok(Self {
            omega_hat,
            v,
            w_hat,
            laplacian_hat,
            edges,
            diagnostics: Vec::new(),
        })
    }

    /// Off-diagonal of `Ω̂` restricted to the detected edges.
    pub fn masked_off_diagonal(&self) -> DMatrix<f64> {
        let p = self.omega_hat.nrows();
        DMatrix::from_fn(p, p, |i, j| {
            if i != j && self.edges.contains(i, j) {
                self.omega_hat[(i, j)]
            } else {
                0.0
            }
        })
    }
}

/// `{i, j} ∈ Ê` iff `V_ij ≠ 0` (upper triangle).
pub fn extract_edges(v: &DMatrix<f64>) -> EdgeSet {
    let p = v.nrows();
    let mut set = EdgeSet::empty(p);
    for j in 0..p {
        for i in 0..j {
            if v[(i, j)] != 0.0 {
                set.edges.insert((i, j));
            }
        }
    }
    set
}

/// `Ŵ_ij = max(0, −Ω̂_ij)` on edges, zero elsewhere.
pub fn build_weights(omega_hat: &DMatrix<f64>, edges: &EdgeSet) -> DMatrix<f64> {
    let p = omega_hat.nrows();
    let mut w = DMatrix::zeros(p, p);
    for (i, j) in edges.iter() {
        let wij = (-0.5 * (omega_hat[(i, j)] + omega_hat[(j, i)])).max(0.0);
        w[(i, j)] = wij;
        w[(j, i)] = wij;
    }
    w
}

/// Combinatorial Laplacian `D − W`.
pub fn build_laplacian(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return Err(Error::Input("weight matrix must be square".to_string()));
    }
    let p = w.nrows();
    for j in 0..p {
        for i in 0..p {
            let x = w[(i, j)];
            if x < 0.0 || !x.is_finite() {
                return Err(Error::Input(format!("invalid weight {x} at ({i}, {j})")));
            }
        }
    }
    let mut l = -w.clone();
    for i in 0..p {
        let degree: f64 = (0..p).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        l[(i, i)] = degree;
    }
    Ok(l)
}
