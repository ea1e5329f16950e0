//! k-way spectral co-clustering of the user-item incidence matrix.
//!
//! Dhillon's construction: scale the incidence matrix by inverse square-root
//! row/column degrees, take the top `l+1` singular vector pairs with
//! `l = ceil(log2 k)`, discard the first pair, embed rows and columns in the
//! remaining coordinates, and k-means the stacked point set.

use std::fmt::Write as _;
use std::path::Path;

use crate::linalg::kmeans::kmeans;
use crate::linalg::svd::{truncated_svd, LinearOp};
use crate::sparse::SparseIncidenceMatrix;
use crate::{Error, Result, Scalar};

/// Joint assignment of every user and item to one of `k` clusters.
#[derive(Debug, Clone)]
pub struct CoClustering {
    pub k: usize,
    pub seed: u64,
    /// Per-user cluster index in [0,k).
    pub user_assignment: Vec<usize>,
    /// Per-item cluster index in [0,k).
    pub item_assignment: Vec<usize>,
    /// Per-cluster in-cluster edge lists, populated by [`build_subgraphs`].
    pub subgraphs: Option<Vec<Subgraph>>,
}

/// One cluster's node set and in-cluster edges, with local re-indexing.
#[derive(Debug, Clone)]
pub struct Subgraph {
    /// Global user indices in this cluster, sorted ascending.
    pub users: Vec<usize>,
    /// Global item indices in this cluster, sorted ascending.
    pub items: Vec<usize>,
    /// In-cluster train edges as global (user, item) pairs.
    pub edges: Vec<(usize, usize)>,
}

impl Subgraph {
    /// Local row index of a global user, if it belongs to this subgraph.
    pub fn local_user(&self, global: usize) -> Option<usize> {
        self.users.binary_search(&global).ok()
    }

    pub fn local_item(&self, global: usize) -> Option<usize> {
        self.items.binary_search(&global).ok()
    }

    /// Edges re-indexed into the subgraph's local index spaces.
    pub fn local_edges(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .map(|&(u, i)| {
                (
                    self.local_user(u).expect("edge endpoint in subgraph"),
                    self.local_item(i).expect("edge endpoint in subgraph"),
                )
            })
            .collect()
    }
}

impl CoClustering {
    pub fn num_users(&self) -> usize {
        self.user_assignment.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_assignment.len()
    }

    /// True when user `u` and item `i` are assigned to the same cluster.
    pub fn same_cluster(&self, u: usize, i: usize) -> bool {
        self.user_assignment[u] == self.item_assignment[i]
    }
}

/// Degree-normalized incidence operator A_n = D1^{-1/2} A D2^{-1/2}.
/// Isolated rows/columns get scale 0 (they are excluded from the embedding).
struct NormalizedIncidence<'a, S> {
    a: &'a SparseIncidenceMatrix,
    row_scale: Vec<S>,
    col_scale: Vec<S>,
}

impl<'a, S: Scalar> NormalizedIncidence<'a, S> {
    fn new(a: &'a SparseIncidenceMatrix) -> Self {
        let inv_sqrt = |deg: usize| {
            if deg == 0 {
                S::zero()
            } else {
                S::one() / S::from_usize(deg).sqrt()
            }
        };
        Self {
            a,
            row_scale: (0..a.num_rows()).map(|r| inv_sqrt(a.row_degree(r))).collect(),
            col_scale: (0..a.num_cols()).map(|c| inv_sqrt(a.col_degree(c))).collect(),
        }
    }
}

impl<S: Scalar> LinearOp<S> for NormalizedIncidence<'_, S> {
    fn rows(&self) -> usize {
        self.a.num_rows()
    }
    fn cols(&self) -> usize {
        self.a.num_cols()
    }
    fn apply(&self, x: &[S], y: &mut [S]) {
        for r in 0..self.a.num_rows() {
            let mut acc = S::zero();
            for &c in self.a.row(r) {
                acc += self.col_scale[c] * x[c];
            }
            y[r] = self.row_scale[r] * acc;
        }
    }
    fn apply_transpose(&self, x: &[S], y: &mut [S]) {
        y.iter_mut().for_each(|v| *v = S::zero());
        for r in 0..self.a.num_rows() {
            let xr = self.row_scale[r] * x[r];
            if xr == S::zero() {
                continue;
            }
            for &c in self.a.row(r) {
                y[c] += self.col_scale[c] * xr;
            }
        }
    }
}

const SVD_TOL: f64 = 1e-8;
const KMEANS_RESTARTS: usize = 10;

/// Co-cluster the incidence matrix into `k` joint user-item clusters.
/// Deterministic given `(a, k, seed)`.
pub fn spectral_cocluster(
    a: &SparseIncidenceMatrix,
    k: usize,
    seed: u64,
) -> Result<CoClustering> {
    spectral_cocluster_generic::<f64>(a, k, seed)
}

pub fn spectral_cocluster_generic<S: Scalar>(
    a: &SparseIncidenceMatrix,
    k: usize,
    seed: u64,
) -> Result<CoClustering> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be >= 2, got {k}")));
    }
    if k > a.num_rows().min(a.num_cols()) {
        return Err(Error::Argument(format!(
            "k={k} exceeds min(num_users={}, num_items={})",
            a.num_rows(),
            a.num_cols()
        )));
    }

    let active_rows: Vec<usize> = (0..a.num_rows()).filter(|&r| a.row_degree(r) > 0).collect();
    let active_cols: Vec<usize> = (0..a.num_cols()).filter(|&c| a.col_degree(c) > 0).collect();
    if active_rows.len() < k || active_cols.len() < k {
        return Err(Error::Argument(format!(
            "k={k} exceeds the number of non-isolated users ({}) or items ({})",
            active_rows.len(),
            active_cols.len()
        )));
    }

    // k - 1 informative coordinates (the cluster-indicator subspace minus
    // the trivial first pair). A ceil(log2 k) projection loses separation
    // when balanced partitions make the leading singular values degenerate.
    let levels = k - 1;
    let op = NormalizedIncidence::<S>::new(a);
    let r = (levels + 1).min(active_rows.len().min(active_cols.len()));
    let svd = truncated_svd(&op, r, SVD_TOL, seed)?;

    // Embed rows as D1^{-1/2} U and columns as D2^{-1/2} V, dropping the
    // first singular pair, then stack rows and columns into one point set.
    let dim = r - 1;
    let mut points: Vec<Vec<S>> = Vec::with_capacity(active_rows.len() + active_cols.len());
    for &u in &active_rows {
        points.push((1..r).map(|j| op.row_scale[u] * svd.u.get(u, j)).collect());
    }
    for &i in &active_cols {
        points.push((1..r).map(|j| op.col_scale[i] * svd.v.get(i, j)).collect());
    }
    debug_assert!(points.iter().all(|p| p.len() == dim));

    let km = kmeans(&points, k, seed, KMEANS_RESTARTS)?;

    let mut user_assignment = vec![usize::MAX; a.num_rows()];
    let mut item_assignment = vec![usize::MAX; a.num_cols()];
    for (idx, &u) in active_rows.iter().enumerate() {
        user_assignment[u] = km.assignment[idx];
    }
    for (idx, &i) in active_cols.iter().enumerate() {
        item_assignment[i] = km.assignment[active_rows.len() + idx];
    }

    // Isolated nodes carry no edges; park them in the largest cluster.
    let mut sizes = vec![0usize; k];
    for &c in km.assignment.iter() {
        sizes[c] += 1;
    }
    let largest = sizes
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    for c in user_assignment.iter_mut().chain(item_assignment.iter_mut()) {
        if *c == usize::MAX {
            *c = largest;
        }
    }

    Ok(CoClustering {
        k,
        seed,
        user_assignment,
        item_assignment,
        subgraphs: None,
    })
}

/// Populate per-cluster subgraphs: each cluster keeps exactly the train edges
/// whose endpoints are both assigned to it, plus local re-indexing maps.
pub fn build_subgraphs(a: &SparseIncidenceMatrix, mut cc: CoClustering) -> Result<CoClustering> {
    if cc.user_assignment.len() != a.num_rows() || cc.item_assignment.len() != a.num_cols() {
        return Err(Error::Argument(
            "clustering dimensions do not match the incidence matrix".into(),
        ));
    }
    let mut subgraphs: Vec<Subgraph> = (0..cc.k)
        .map(|_| Subgraph {
            users: Vec::new(),
            items: Vec::new(),
            edges: Vec::new(),
        })
        .collect();
    for (u, &c) in cc.user_assignment.iter().enumerate() {
        subgraphs[c].users.push(u);
    }
    for (i, &c) in cc.item_assignment.iter().enumerate() {
        subgraphs[c].items.push(i);
    }
    for (u, i) in a.edges() {
        if cc.same_cluster(u, i) {
            subgraphs[cc.user_assignment[u]].edges.push((u, i));
        }
    }
    cc.subgraphs = Some(subgraphs);
    Ok(cc)
}

/// Fraction of edges captured inside diagonal blocks: (sum_j |E_j|) / |E|.
pub fn block_density_stat(a: &SparseIncidenceMatrix, cc: &CoClustering) -> f64 {
    if a.nnz() == 0 {
        return 0.0;
    }
    let in_cluster = a.edges().filter(|&(u, i)| cc.same_cluster(u, i)).count();
    in_cluster as f64 / a.nnz() as f64
}

/// Text export: header with k and seed, then one `node_type index cluster`
/// line per node.
pub fn write_assignments(path: &Path, cc: &CoClustering) -> Result<()> {
    std::fs::write(path, assignments_to_string(cc))?;
    Ok(())
}

pub fn assignments_to_string(cc: &CoClustering) -> String {
    let mut out = String::new();
    writeln!(out, "# k={} seed={}", cc.k, cc.seed).unwrap();
    for (u, &c) in cc.user_assignment.iter().enumerate() {
        writeln!(out, "user {u} {c}").unwrap();
    }
    for (i, &c) in cc.item_assignment.iter().enumerate() {
        writeln!(out, "item {i} {c}").unwrap();
    }
    out
}

pub fn read_assignments(path: &Path) -> Result<CoClustering> {
    let text = std::fs::read_to_string(path)?;
    let mut k = None;
    let mut seed = None;
    let mut users: Vec<(usize, usize)> = Vec::new();
    let mut items: Vec<(usize, usize)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let parse_err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: msg.into(),
        };
        if let Some(header) = line.strip_prefix('#') {
            for token in header.split_whitespace() {
                if let Some(v) = token.strip_prefix("k=") {
                    k = Some(v.parse::<usize>().map_err(|_| parse_err("bad k"))?);
                } else if let Some(v) = token.strip_prefix("seed=") {
                    seed = Some(v.parse::<u64>().map_err(|_| parse_err("bad seed"))?);
                }
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let (Some(kind), Some(idx), Some(cluster)) = (tokens.next(), tokens.next(), tokens.next())
        else {
            continue;
        };
        let idx: usize = idx.parse().map_err(|_| parse_err("bad index"))?;
        let cluster: usize = cluster.parse().map_err(|_| parse_err("bad cluster"))?;
        match kind {
            "user" => users.push((idx, cluster)),
            "item" => items.push((idx, cluster)),
            other => return Err(parse_err(&format!("unknown node type '{other}'"))),
        }
    }
    let k = k.ok_or_else(|| Error::Validation("cluster file missing k header".into()))?;
    let seed = seed.ok_or_else(|| Error::Validation("cluster file missing seed header".into()))?;
    let to_dense = |mut pairs: Vec<(usize, usize)>, what: &str| -> Result<Vec<usize>> {
        pairs.sort_unstable();
        let mut out = Vec::with_capacity(pairs.len());
        for (expect, (idx, cluster)) in pairs.into_iter().enumerate() {
            if idx != expect {
                return Err(Error::Validation(format!(
                    "cluster file {what} indices are not contiguous at {idx}"
                )));
            }
            if cluster >= k {
                return Err(Error::Validation(format!(
                    "cluster index {cluster} out of range for k={k}"
                )));
            }
            out.push(cluster);
        }
        Ok(out)
    };
    Ok(CoClustering {
        k,
        seed,
        user_assignment: to_dense(users, "user")?,
        item_assignment: to_dense(items, "item")?,
        subgraphs: None,
    })
}
