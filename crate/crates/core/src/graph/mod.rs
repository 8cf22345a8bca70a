//! Citation-graph datasets: loading, validation, normalization and edge dropping.
//!
//! A dataset directory holds five UTF-8 files, one record per line:
//!
//! | file           | contents                                         |
//! |----------------|--------------------------------------------------|
//! | `meta`         | `n d c`                                          |
//! | `features.csv` | `n` lines of `d` comma-separated floats          |
//! | `edges.txt`    | `u v` per line, 0-indexed, undirected            |
//! | `labels.txt`   | `n` integers in `[0, c)`                         |
//! | `split.txt`    | `n` tokens from `train`, `val`, `test`, `none`   |
//!
//! Blank lines and lines starting with `#` are ignored in `edges.txt`.

mod io;
pub mod synthetic;

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::rng::rng_for;
use crate::sparse::SparseMatrix;
use crate::tensor::Tensor;

pub use io::{load_dataset, save_dataset};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing dataset file {0}")]
    MissingFile(String),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("node index {index} out of range for {n} nodes ({context})")]
    IndexOutOfRange {
        index: usize,
        n: usize,
        context: String,
    },
    #[error("node {0} appears in more than one split mask")]
    OverlappingMasks(usize),
    #[error("node {node} has label {label} outside [0, {classes})")]
    LabelOutOfRange {
        node: usize,
        label: i64,
        classes: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("rate {0} outside [0, 1)")]
    Rate(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which split a node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl Split {
    pub fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }

    pub fn parse(token: &str) -> Option<Split> {
        match token {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "none" => Some(Split::None),
            _ => None,
        }
    }
}

/// A node-classification graph. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    features: Tensor,
    labels: Vec<usize>,
    n_classes: usize,
    edges: Vec<(usize, usize)>,
    split: Vec<Split>,
}

/// Canonical undirected edge list: `u < v`, sorted, without duplicates or
/// self-loops. Returns the list and the number of self-loops removed.
pub(crate) fn canonical_edges(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Result<(Vec<(usize, usize)>, usize), GraphError> {
    let mut out = Vec::new();
    let mut self_loops = 0;
    for (u, v) in edges {
        for x in [u, v] {
            if x >= n {
                return Err(GraphError::IndexOutOfRange {
                    index: x,
                    n,
                    context: format!("edge ({u}, {v})"),
                });
            }
        }
        if u == v {
            self_loops += 1;
            continue;
        }
        out.push((u.min(v), u.max(v)));
    }
    out.sort_unstable();
    out.dedup();
    Ok((out, self_loops))
}

impl GraphDataset {
    /// Validates and canonicalizes a dataset. Self-loops are dropped (with a
    /// warning), duplicate undirected edges collapse to one.
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        n_classes: usize,
        edges: Vec<(usize, usize)>,
        split: Vec<Split>,
    ) -> Result<Self, GraphError> {
        let n = features.rows();
        if features.shape().len() != 2 {
            return Err(GraphError::Invalid(format!(
                "features must be a matrix, got shape {:?}",
                features.shape()
            )));
        }
        if labels.len() != n || split.len() != n {
            return Err(GraphError::Invalid(format!(
                "{n} feature rows but {} labels and {} split tokens",
                labels.len(),
                split.len()
            )));
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(GraphError::LabelOutOfRange {
                node,
                label: label as i64,
                classes: n_classes,
            });
        }
        if !features.is_finite() {
            return Err(GraphError::Invalid("non-finite feature value".into()));
        }
        let (edges, self_loops) = canonical_edges(n, edges)?;
        if self_loops > 0 {
            log::warn!("dropped {self_loops} self-loop(s) from the edge list");
        }
        Ok(GraphDataset {
            features,
            labels,
            n_classes,
            edges,
            split,
        })
    }

    /// Builds a dataset from three boolean masks; overlapping masks are an error.
    pub fn from_masks(
        features: Tensor,
        labels: Vec<usize>,
        n_classes: usize,
        edges: Vec<(usize, usize)>,
        train: &[bool],
        val: &[bool],
        test: &[bool],
    ) -> Result<Self, GraphError> {
        let n = features.rows();
        if train.len() != n || val.len() != n || test.len() != n {
            return Err(GraphError::Invalid("mask length differs from node count".into()));
        }
        let mut split = Vec::with_capacity(n);
        for i in 0..n {
            let s = match (train[i], val[i], test[i]) {
                (false, false, false) => Split::None,
                (true, false, false) => Split::Train,
                (false, true, false) => Split::Val,
                (false, false, true) => Split::Test,
                _ => return Err(GraphError::OverlappingMasks(i)),
            };
            split.push(s);
        }
        Self::new(features, labels, n_classes, edges, split)
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn mask(&self, which: Split) -> Vec<bool> {
        self.split.iter().map(|&s| s == which).collect()
    }

    /// Node indices of a split, ascending.
    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n()];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Copy with every feature row scaled to sum to one (all-zero rows stay zero).
    pub fn row_normalized(&self) -> GraphDataset {
        let mut features = self.features.clone();
        for r in 0..features.rows() {
            let row = features.row_mut(r);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        GraphDataset {
            features,
            ..self.clone()
        }
    }

    /// Copy with a different edge list (re-canonicalized).
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<GraphDataset, GraphError> {
        let (edges, _) = canonical_edges(self.n(), edges)?;
        Ok(GraphDataset {
            edges,
            ..self.clone()
        })
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<GraphDataset, GraphError> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(GraphError::Invalid("not a permutation".into()));
        }
        let mut inverse = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let features = self.features.select_rows(&inverse);
        let labels = inverse.iter().map(|&i| self.labels[i]).collect();
        let split = inverse.iter().map(|&i| self.split[i]).collect();
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        GraphDataset::new(features, labels, self.n_classes, edges, split)
    }
}

/// `(D + I)^(-1/2) (A + I) (D + I)^(-1/2)` for the binary adjacency `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Arc<SparseMatrix>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<SparseMatrix> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Wraps an arbitrary square operator, e.g. the identity in tests.
    pub fn from_matrix(matrix: SparseMatrix) -> Self {
        NormalizedAdjacency {
            matrix: Arc::new(matrix),
        }
    }
}

pub fn normalize_edges(n: usize, edges: &[(usize, usize)]) -> NormalizedAdjacency {
    let mut deg = vec![0usize; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let deg1: Vec<f64> = deg.iter().map(|&d| (d + 1) as f64).collect();
    let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(u, v) in edges {
        nbrs[u].push(v);
        nbrs[v].push(u);
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for (i, list) in nbrs.iter_mut().enumerate() {
        list.sort_unstable();
        for &j in list.iter() {
            col_indices.push(j);
            values.push(1.0 / (deg1[i] * deg1[j]).sqrt());
        }
        row_offsets.push(col_indices.len());
    }
    let matrix = SparseMatrix::new(n, n, row_offsets, col_indices, values)
        .expect("normalized adjacency is well formed");
    NormalizedAdjacency {
        matrix: Arc::new(matrix),
    }
}

pub fn build_normalized_adjacency(g: &GraphDataset) -> NormalizedAdjacency {
    normalize_edges(g.n(), g.edges())
}

/// Removes each undirected edge independently with probability `rate`.
pub fn drop_edges(g: &GraphDataset, rate: f64, seed: u64) -> Result<GraphDataset, GraphError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(GraphError::Rate(rate));
    }
    if rate == 0.0 {
        return Ok(g.clone());
    }
    let mut rng = rng_for(seed, &[0xd20b]);
    let kept = g
        .edges
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() >= rate)
        .collect();
    Ok(GraphDataset {
        edges: kept,
        ..g.clone()
    })
}
