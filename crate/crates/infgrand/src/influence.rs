//! Pairwise node influence, its normalization, the per-node Global
//! Influence Score, and the degree / PageRank baselines it is compared
//! against.
//!
//! The pipeline is: propagate features k hops, score every supported
//! (target, source) pair by the cosine of the source's raw features with
//! the target's propagated features, min-max scale globally, normalize
//! per target, then reduce to one score per source node.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{k_hop_mask, normalize_adjacency, spmm, Graph, NormalizedAdjacency, PairSet};
use crate::hashing::graph_features_hash;
use crate::matrix::{dot, FeatureMatrix};

/// Dense influence tables above this node count are refused; use k-hop
/// mode instead.
pub const DENSE_NODE_CAP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfluenceMode {
    Dense,
    KHop,
}

impl std::fmt::Display for InfluenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfluenceMode::Dense => write!(f, "dense"),
            InfluenceMode::KHop => write!(f, "khop"),
        }
    }
}

impl std::str::FromStr for InfluenceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(InfluenceMode::Dense),
            "khop" => Ok(InfluenceMode::KHop),
            other => Err(Error::input(format!("unknown influence mode '{}'", other))),
        }
    }
}

/// Pairwise scores keyed by (target, source). Dense storage is a full
/// N x N table (row = target); sparse storage lists the supported sources
/// per target in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PairwiseScores {
    Dense {
        num_nodes: usize,
        scores: Vec<f64>,
    },
    Sparse {
        num_nodes: usize,
        row_ptr: Vec<usize>,
        src_idx: Vec<usize>,
        scores: Vec<f64>,
    },
}

impl PairwiseScores {
    pub fn num_nodes(&self) -> usize {
        match self {
            PairwiseScores::Dense { num_nodes, .. } => *num_nodes,
            PairwiseScores::Sparse { num_nodes, .. } => *num_nodes,
        }
    }

    pub fn num_pairs(&self) -> usize {
        match self {
            PairwiseScores::Dense { num_nodes, .. } => num_nodes * num_nodes,
            PairwiseScores::Sparse { scores, .. } => scores.len(),
        }
    }

    /// Supported (source, score) pairs for one target, ascending by source.
    pub fn sources(&self, target: usize) -> Vec<(usize, f64)> {
        match self {
            PairwiseScores::Dense { num_nodes, scores } => {
                let row = &scores[target * num_nodes..(target + 1) * num_nodes];
                row.iter().enumerate().map(|(i, &s)| (i, s)).collect()
            }
            PairwiseScores::Sparse {
                row_ptr,
                src_idx,
                scores,
                ..
            } => {
                let r = row_ptr[target]..row_ptr[target + 1];
                src_idx[r.clone()]
                    .iter()
                    .zip(scores[r].iter())
                    .map(|(&i, &s)| (i, s))
                    .collect()
            }
        }
    }

    /// Score of (target <- source) if the pair is supported.
    pub fn get(&self, target: usize, source: usize) -> Option<f64> {
        match self {
            PairwiseScores::Dense { num_nodes, scores } => {
                Some(scores[target * num_nodes + source])
            }
            PairwiseScores::Sparse {
                row_ptr,
                src_idx,
                scores,
                ..
            } => {
                let r = row_ptr[target]..row_ptr[target + 1];
                src_idx[r.clone()]
                    .binary_search(&source)
                    .ok()
                    .map(|p| scores[r.start + p])
            }
        }
    }

    fn scores(&self) -> &[f64] {
        match self {
            PairwiseScores::Dense { scores, .. } => scores,
            PairwiseScores::Sparse { scores, .. } => scores,
        }
    }

    fn scores_mut(&mut self) -> &mut [f64] {
        match self {
            PairwiseScores::Dense { scores, .. } => scores,
            PairwiseScores::Sparse { scores, .. } => scores,
        }
    }

    fn row_range(&self, target: usize) -> std::ops::Range<usize> {
        match self {
            PairwiseScores::Dense { num_nodes, .. } => target * num_nodes..(target + 1) * num_nodes,
            PairwiseScores::Sparse { row_ptr, .. } => row_ptr[target]..row_ptr[target + 1],
        }
    }
}

/// Pairwise influence plus the per-node Global Influence Score.
///
/// `pairwise` is `None` only for tables restored from a dense-mode cache,
/// which stores the score vector but not the quadratic table.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTable {
    pub mode: InfluenceMode,
    pub k: usize,
    pub pairwise: Option<PairwiseScores>,
    pub gis: Vec<f64>,
}

/// Degree or PageRank scores, max-normalized so they can substitute for
/// the influence vector in the loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityVector {
    pub kind: CentralityKind,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentralityKind {
    Degree,
    Pagerank,
}

/// `a^k x`: k repeated sparse products. k = 0 returns a copy.
pub fn propagate_k(a: &NormalizedAdjacency, x: &FeatureMatrix, k: usize) -> Result<FeatureMatrix> {
    if a.num_nodes() != x.rows() {
        return Err(Error::shape(format!(
            "adjacency has {} nodes but features have {} rows",
            a.num_nodes(),
            x.rows()
        )));
    }
    let mut cur = x.clone();
    for _ in 0..k {
        cur = spmm(a, &cur)?;
    }
    Ok(cur)
}

fn row_norms(x: &FeatureMatrix) -> Vec<f64> {
    (0..x.rows())
        .map(|i| dot(x.row(i), x.row(i)).sqrt())
        .collect()
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Support over which pairwise scores are evaluated.
pub enum Support<'a> {
    Dense,
    KHop(&'a PairSet),
}

/// Cosine of source raw features with target propagated features for every
/// supported (target, source) pair. Zero-norm rows score 0.
pub fn raw_influence(
    x0: &FeatureMatrix,
    xk: &FeatureMatrix,
    support: Support,
) -> Result<PairwiseScores> {
    if x0.rows() != xk.rows() || x0.cols() != xk.cols() {
        return Err(Error::shape(format!(
            "raw and propagated features differ: {}x{} vs {}x{}",
            x0.rows(),
            x0.cols(),
            xk.rows(),
            xk.cols()
        )));
    }
    let n = x0.rows();
    let n0 = row_norms(x0);
    let nk = row_norms(xk);
    match support {
        Support::Dense => {
            let mut scores = vec![0.0; n * n];
            // streamed one target row at a time to bound working memory
            for j in 0..n {
                let row = &mut scores[j * n..(j + 1) * n];
                for (i, out) in row.iter_mut().enumerate() {
                    *out = cosine(x0.row(i), n0[i], xk.row(j), nk[j]);
                }
            }
            Ok(PairwiseScores::Dense {
                num_nodes: n,
                scores,
            })
        }
        Support::KHop(pairs) => {
            if pairs.num_nodes() != n {
                return Err(Error::shape("pair set and features disagree on node count"));
            }
            let mut row_ptr = Vec::with_capacity(n + 1);
            let mut src_idx = Vec::with_capacity(pairs.len());
            let mut scores = Vec::with_capacity(pairs.len());
            row_ptr.push(0);
            for (j, &norm_j) in nk.iter().enumerate() {
                for &i in pairs.row(j) {
                    src_idx.push(i);
                    scores.push(cosine(x0.row(i), n0[i], xk.row(j), norm_j));
                }
                row_ptr.push(src_idx.len());
            }
            Ok(PairwiseScores::Sparse {
                num_nodes: n,
                row_ptr,
                src_idx,
                scores,
            })
        }
    }
}

/// Affine map of all supported scores onto [0, 1] using the global min and
/// max. A degenerate range maps everything to 0.5.
pub fn scale_minmax(mut raw: PairwiseScores) -> Result<PairwiseScores> {
    if raw.num_pairs() == 0 {
        return Err(Error::input("min-max scaling over an empty support"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &s in raw.scores() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let range = hi - lo;
    if range == 0.0 {
        for s in raw.scores_mut() {
            *s = 0.5;
        }
    } else {
        for s in raw.scores_mut() {
            *s = (*s - lo) / range;
        }
    }
    Ok(raw)
}

/// Per-target normalization: each supported row is divided by its sum so
/// it sums to 1; all-zero rows stay zero.
pub fn normalize_per_target(mut scaled: PairwiseScores) -> PairwiseScores {
    let n = scaled.num_nodes();
    for j in 0..n {
        let r = scaled.row_range(j);
        let sum: f64 = scaled.scores()[r.clone()].iter().sum();
        if sum > 0.0 {
            for s in &mut scaled.scores_mut()[r] {
                *s /= sum;
            }
        }
    }
    scaled
}

/// Total outgoing influence per source, max-normalized to [0, 1]. An
/// all-zero table yields an all-zero vector.
pub fn global_influence(pairwise: &PairwiseScores) -> Vec<f64> {
    let n = pairwise.num_nodes();
    let mut out_sum = vec![0.0; n];
    match pairwise {
        PairwiseScores::Dense { scores, .. } => {
            for j in 0..n {
                let row = &scores[j * n..(j + 1) * n];
                for (i, &s) in row.iter().enumerate() {
                    out_sum[i] += s;
                }
            }
        }
        PairwiseScores::Sparse {
            row_ptr,
            src_idx,
            scores,
            ..
        } => {
            for j in 0..n {
                for p in row_ptr[j]..row_ptr[j + 1] {
                    out_sum[src_idx[p]] += scores[p];
                }
            }
        }
    }
    let max = out_sum.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for s in &mut out_sum {
            *s /= max;
        }
    }
    out_sum
}

/// Full influence pipeline with the default dense-mode node cap.
pub fn compute_influence(
    g: &Graph,
    x: &FeatureMatrix,
    k: usize,
    mode: InfluenceMode,
) -> Result<InfluenceTable> {
    compute_influence_capped(g, x, k, mode, DENSE_NODE_CAP)
}

pub fn compute_influence_capped(
    g: &Graph,
    x: &FeatureMatrix,
    k: usize,
    mode: InfluenceMode,
    dense_cap: usize,
) -> Result<InfluenceTable> {
    if k == 0 {
        return Err(Error::input("influence requires k >= 1"));
    }
    if mode == InfluenceMode::Dense && g.num_nodes() > dense_cap {
        return Err(Error::Capacity(format!(
            "dense influence on {} nodes exceeds the {}-node cap; use k-hop mode",
            g.num_nodes(),
            dense_cap
        )));
    }
    let a = normalize_adjacency(g);
    let xk = propagate_k(&a, x, k)?;
    let raw = match mode {
        InfluenceMode::Dense => raw_influence(x, &xk, Support::Dense)?,
        InfluenceMode::KHop => {
            let pairs = k_hop_mask(g, k);
            raw_influence(x, &xk, Support::KHop(&pairs))?
        }
    };
    let scaled = scale_minmax(raw)?;
    let pairwise = normalize_per_target(scaled);
    let gis = global_influence(&pairwise);
    Ok(InfluenceTable {
        mode,
        k,
        pairwise: Some(pairwise),
        gis,
    })
}

/// Node degrees divided by the maximum degree; an edgeless graph yields
/// all zeros.
pub fn degree_centrality(g: &Graph) -> CentralityVector {
    let n = g.num_nodes();
    let mut scores: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
    let max = scores.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for s in &mut scores {
            *s /= max;
        }
    }
    CentralityVector {
        kind: CentralityKind::Degree,
        scores,
    }
}

/// Power iteration for the PageRank stationary distribution. Dangling
/// (isolated) mass is redistributed uniformly. Returns the distribution,
/// which sums to 1, and whether the L1 tolerance was reached.
pub fn pagerank_distribution(
    g: &Graph,
    damping: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(Vec<f64>, bool)> {
    if !(0.0 < damping && damping < 1.0) {
        return Err(Error::input(format!(
            "damping must be in (0, 1), got {}",
            damping
        )));
    }
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::input("pagerank on an empty graph"));
    }
    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..max_iters {
        let dangling: f64 = (0..n).filter(|&i| g.degree(i) == 0).map(|i| rank[i]).sum();
        let base = (1.0 - damping) * uniform + damping * dangling * uniform;
        for (i, nx) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &j in g.neighbors(i) {
                acc += rank[j] / g.degree(j) as f64;
            }
            *nx = base + damping * acc;
        }
        let delta: f64 = rank
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok((rank, converged))
}

/// PageRank as a max-normalized centrality vector, a drop-in replacement
/// for the influence score vector.
pub fn pagerank(g: &Graph, damping: f64, max_iters: usize, tol: f64) -> Result<CentralityVector> {
    let (mut scores, converged) = pagerank_distribution(g, damping, max_iters, tol)?;
    if !converged {
        log::warn!(
            "pagerank did not reach tol {} within {} iterations; returning last iterate",
            tol,
            max_iters
        );
    }
    let max = scores.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for s in &mut scores {
            *s /= max;
        }
    }
    Ok(CentralityVector {
        kind: CentralityKind::Pagerank,
        scores,
    })
}

/// On-disk influence artifact. Dense mode stores only the global score
/// vector; k-hop mode keeps the supported pairwise entries as well.
#[derive(Debug, Serialize, Deserialize)]
pub struct InfluenceCache {
    pub mode: InfluenceMode,
    pub k: usize,
    pub content_hash: String,
    pub gis: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<PairwiseScores>,
}

pub fn save_influence_cache(path: &Path, table: &InfluenceTable, content_hash: &str) -> Result<()> {
    let pairwise = match table.mode {
        InfluenceMode::Dense => None,
        InfluenceMode::KHop => table.pairwise.clone(),
    };
    let cache = InfluenceCache {
        mode: table.mode,
        k: table.k,
        content_hash: content_hash.to_string(),
        gis: table.gis.clone(),
        pairwise,
    };
    std::fs::write(path, serde_json::to_string(&cache)?)?;
    Ok(())
}

pub fn load_influence_cache(path: &Path) -> Result<InfluenceCache> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Computes the influence table, reusing `cache_path` when it matches the
/// (graph, features, k, mode) key. Returns the table and whether the cache
/// was hit.
pub fn compute_influence_cached(
    g: &Graph,
    x: &FeatureMatrix,
    k: usize,
    mode: InfluenceMode,
    cache_path: &Path,
) -> Result<(InfluenceTable, bool)> {
    let hash = graph_features_hash(g, x);
    if cache_path.exists() {
        if let Ok(cache) = load_influence_cache(cache_path) {
            if cache.content_hash == hash && cache.k == k && cache.mode == mode {
                return Ok((
                    InfluenceTable {
                        mode: cache.mode,
                        k: cache.k,
                        pairwise: cache.pairwise,
                        gis: cache.gis,
                    },
                    true,
                ));
            }
        }
    }
    let table = compute_influence(g, x, k, mode)?;
    save_influence_cache(cache_path, &table, &hash)?;
    Ok((table, false))
}
