//! Undirected communication graphs, Laplacians and per-channel matrices.
//!
//! Nodes are 0-based internally. A directed channel `(i, k)` is the message
//! that node `i` uses from node `k`; its matrix has `+1` at `(i, i)` and `-1`
//! at `(i, k)`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Pairs are normalized to
    /// `(min, max)` and sorted.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {{{a}, {b}}} out of range for {n} nodes"
                )));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("duplicate edge {{{a}, {b}}}")));
            }
        }
        Ok(Self {
            n,
            edges: set.into_iter().collect(),
        })
    }

    /// Cycle `0-1-..-(n-1)-0`; degenerates to a path for `n < 3`.
    pub fn ring(n: usize) -> Self {
        if n < 3 {
            return Self::path(n);
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |k| (i, k)))).unwrap()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn without_edge(&self, a: usize, b: usize) -> Self {
        let key = (a.min(b), a.max(b));
        Self {
            n: self.n,
            edges: self.edges.iter().copied().filter(|e| *e != key).collect(),
        }
    }
}

/// `L = D - A`.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(g.n, g.n);
    for &(i, k) in &g.edges {
        l[(i, i)] += 1.0;
        l[(k, k)] += 1.0;
        l[(i, k)] -= 1.0;
        l[(k, i)] -= 1.0;
    }
    l
}

/// Union-find connectivity. The empty graph and the single node are connected.
pub fn is_connected(g: &Graph) -> bool {
    if g.n <= 1 {
        return true;
    }
    let mut parent: Vec<usize> = (0..g.n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = g.n;
    for &(a, b) in &g.edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}

/// Directed information channel: node `i` uses the value sent by node `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub i: usize,
    pub k: usize,
}

/// The finite family of communication topologies with a global channel index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySet {
    n: usize,
    graphs: Vec<Graph>,
    channels: Vec<Channel>,
}

impl TopologySet {
    /// Indexes channels over the union graph: union edges `{i, k}`, `i < k`,
    /// sorted lexicographically; edge `j` yields channel `2j = (i, k)` and
    /// channel `2j + 1 = (k, i)`.
    pub fn new(graphs: Vec<Graph>) -> Result<Self> {
        let n = graphs
            .first()
            .map(Graph::n)
            .ok_or_else(|| Error::InvalidGraph("empty topology set".into()))?;
        if graphs.iter().any(|g| g.n() != n) {
            return Err(Error::InvalidGraph(
                "topologies disagree on node count".into(),
            ));
        }
        let union: BTreeSet<(usize, usize)> = graphs
            .iter()
            .flat_map(|g| g.edges().iter().copied())
            .collect();
        let channels = union
            .into_iter()
            .flat_map(|(i, k)| [Channel { i, k }, Channel { i: k, k: i }])
            .collect();
        Ok(Self {
            n,
            graphs,
            channels,
        })
    }

    /// Uses a caller-supplied channel order. Coverage is checked by
    /// [`channel_matrices`], not here.
    pub fn with_channels(graphs: Vec<Graph>, channels: Vec<Channel>) -> Result<Self> {
        let mut ts = Self::new(graphs)?;
        for c in &channels {
            if c.i == c.k || c.i >= ts.n || c.k >= ts.n {
                return Err(Error::InvalidGraph(format!(
                    "bad channel ({}, {})",
                    c.i, c.k
                )));
            }
        }
        ts.channels = channels;
        Ok(ts)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Largest edge count over the family.
    pub fn max_edges(&self) -> usize {
        self.graphs
            .iter()
            .map(|g| g.edges().len())
            .max()
            .unwrap_or(0)
    }

    /// Whether channel `m` exists in topology `ell`.
    pub fn is_present(&self, ell: usize, m: usize) -> bool {
        let c = self.channels[m];
        self.graphs[ell].has_edge(c.i, c.k)
    }

    /// Indices of the channels present in topology `ell`.
    pub fn present_channels(&self, ell: usize) -> Vec<usize> {
        (0..self.channels.len())
            .filter(|&m| self.is_present(ell, m))
            .collect()
    }
}

/// `T[ell][m]`: zero matrices for absent channels, so every topology has the
/// same number of blocks.
pub fn channel_matrices(ts: &TopologySet) -> Result<Vec<Vec<DMatrix<f64>>>> {
    for (ell, g) in ts.graphs.iter().enumerate() {
        for &(a, b) in g.edges() {
            for (i, k) in [(a, b), (b, a)] {
                if !ts.channels.contains(&Channel { i, k }) {
                    return Err(Error::UncoveredEdge(i, k, ell));
                }
            }
        }
    }
    let n = ts.n;
    Ok((0..ts.len())
        .map(|ell| {
            ts.channels
                .iter()
                .enumerate()
                .map(|(m, c)| {
                    let mut t = DMatrix::zeros(n, n);
                    if ts.is_present(ell, m) {
                        t[(c.i, c.i)] = 1.0;
                        t[(c.i, c.k)] = -1.0;
                    }
                    t
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyDiagnostics {
    pub connected: Vec<bool>,
    pub pass: bool,
}

impl TopologyDiagnostics {
    pub fn first_disconnected(&self) -> Option<usize> {
        self.connected.iter().position(|c| !c)
    }
}

pub fn validate_topology_set(ts: &TopologySet) -> TopologyDiagnostics {
    let connected: Vec<bool> = ts.graphs.iter().map(is_connected).collect();
    let pass = !connected.is_empty() && connected.iter().all(|&c| c);
    TopologyDiagnostics { connected, pass }
}
