//! Undirected graph storage in compressed-sparse-row form, symmetric
//! normalization and the sparse-dense products the rest of the crate
//! builds on.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Immutable undirected graph, CSR layout. Each edge is stored in both
/// directions; columns within a row are strictly increasing; self-loops
/// are never stored (they are added during normalization only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored directed entries (2x the undirected edge count).
    pub fn num_directed_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Undirected edge list with i < j, ascending.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.num_undirected_edges());
        for i in 0..self.num_nodes {
            for &j in self.neighbors(i) {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        edges
    }
}

/// Symmetrically normalized adjacency with self-loops: entry (i, j) holds
/// 1/sqrt((deg_i + 1)(deg_j + 1)), including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.weights[r])
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, ws) = self.row(i);
        cols.binary_search(&j).ok().map(|p| ws[p])
    }
}

/// Build a canonical graph from an arbitrary edge list: symmetrized,
/// deduplicated, self-loops dropped, rows sorted.
pub fn build_graph(edges: &[(usize, usize)], num_nodes: usize) -> Result<Graph> {
    for &(a, b) in edges {
        if a >= num_nodes || b >= num_nodes {
            return Err(Error::input(format!(
                "edge ({}, {}) out of range for {} nodes",
                a, b, num_nodes
            )));
        }
    }
    let mut directed: Vec<(usize, usize)> = Vec::with_capacity(edges.len() * 2);
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        directed.push((a, b));
        directed.push((b, a));
    }
    directed.sort_unstable();
    directed.dedup();

    let mut row_ptr = vec![0usize; num_nodes + 1];
    for &(a, _) in &directed {
        row_ptr[a + 1] += 1;
    }
    for i in 0..num_nodes {
        row_ptr[i + 1] += row_ptr[i];
    }
    let col_idx = directed.into_iter().map(|(_, b)| b).collect();
    Ok(Graph {
        num_nodes,
        row_ptr,
        col_idx,
    })
}

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I. Every row
/// gains a diagonal entry; isolated nodes get weight 1 on the diagonal.
pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.num_nodes;
    // single rounding step per entry, and bit-symmetric by construction
    let weight = |i: usize, j: usize| 1.0 / (((g.degree(i) + 1) * (g.degree(j) + 1)) as f64).sqrt();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(g.col_idx.len() + n);
    let mut weights = Vec::with_capacity(g.col_idx.len() + n);
    row_ptr.push(0);
    for i in 0..n {
        let mut placed_diag = false;
        for &j in g.neighbors(i) {
            if !placed_diag && j > i {
                col_idx.push(i);
                weights.push(weight(i, i));
                placed_diag = true;
            }
            col_idx.push(j);
            weights.push(weight(i, j));
        }
        if !placed_diag {
            col_idx.push(i);
            weights.push(weight(i, i));
        }
        row_ptr.push(col_idx.len());
    }
    NormalizedAdjacency {
        num_nodes: n,
        row_ptr,
        col_idx,
        weights,
    }
}

/// Sparse-dense product `a * x`. Per-row accumulation is sequential in
/// column order so the result is independent of any outer parallelism.
pub fn spmm(a: &NormalizedAdjacency, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if a.num_nodes != x.rows() {
        return Err(Error::shape(format!(
            "adjacency has {} nodes but features have {} rows",
            a.num_nodes,
            x.rows()
        )));
    }
    let d = x.cols();
    let mut out = FeatureMatrix::zeros(a.num_nodes, d);
    for i in 0..a.num_nodes {
        let (cols, ws) = a.row(i);
        let o = out.row_mut(i);
        for (&j, &w) in cols.iter().zip(ws.iter()) {
            let src = x.row(j);
            for (ov, &sv) in o.iter_mut().zip(src.iter()) {
                *ov += w * sv;
            }
        }
    }
    Ok(out)
}

/// Set of (i, j) pairs with shortest-path distance <= k, including every
/// (i, i). Rows are sorted; the set is symmetric because the graph is
/// undirected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl PairSet {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn len(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col_idx.is_empty()
    }
}

/// Per-node breadth-first search truncated at depth k.
pub fn k_hop_mask(g: &Graph, k: usize) -> PairSet {
    let n = g.num_nodes;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    let mut dist = vec![usize::MAX; n];
    let mut touched = Vec::new();
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist[s] = 0;
        touched.push(s);
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            if dist[u] == k {
                continue;
            }
            for &v in g.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    touched.push(v);
                    queue.push_back(v);
                }
            }
        }
        touched.sort_unstable();
        col_idx.extend_from_slice(&touched);
        row_ptr.push(col_idx.len());
        for &t in &touched {
            dist[t] = usize::MAX;
        }
        touched.clear();
    }
    PairSet {
        num_nodes: n,
        row_ptr,
        col_idx,
    }
}

/// Bijective mapping between kept original node ids and the contiguous
/// ids of an induced subgraph.
#[derive(Debug, Clone)]
pub struct NodeRemap {
    new_to_old: Vec<usize>,
    old_to_new: Vec<Option<usize>>,
}

impl NodeRemap {
    pub fn to_old(&self, new: usize) -> usize {
        self.new_to_old[new]
    }

    pub fn to_new(&self, old: usize) -> Option<usize> {
        self.old_to_new[old]
    }

    pub fn kept(&self) -> &[usize] {
        &self.new_to_old
    }

    pub fn len(&self) -> usize {
        self.new_to_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_to_old.is_empty()
    }
}

/// Subgraph over `keep`, with node ids remapped to 0..|keep| in ascending
/// original order.
pub fn induced_subgraph(g: &Graph, keep: &[usize]) -> Result<(Graph, NodeRemap)> {
    if keep.is_empty() {
        return Err(Error::input("induced subgraph over an empty node set"));
    }
    let mut new_to_old: Vec<usize> = keep.to_vec();
    new_to_old.sort_unstable();
    new_to_old.dedup();
    if let Some(&bad) = new_to_old.iter().find(|&&v| v >= g.num_nodes) {
        return Err(Error::input(format!(
            "kept node {} out of range for {} nodes",
            bad, g.num_nodes
        )));
    }
    let mut old_to_new = vec![None; g.num_nodes];
    for (new, &old) in new_to_old.iter().enumerate() {
        old_to_new[old] = Some(new);
    }

    let mut row_ptr = Vec::with_capacity(new_to_old.len() + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for &old in &new_to_old {
        for &nb in g.neighbors(old) {
            if let Some(new_nb) = old_to_new[nb] {
                col_idx.push(new_nb);
            }
        }
        row_ptr.push(col_idx.len());
    }
    let sub = Graph {
        num_nodes: new_to_old.len(),
        row_ptr,
        col_idx,
    };
    Ok((
        sub,
        NodeRemap {
            new_to_old,
            old_to_new,
        },
    ))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path3() -> Graph {
        build_graph(&[(0, 1), (1, 2)], 3).unwrap()
    }

    proptest! {
        #[test]
        fn build_graph_is_canonical(
            edges in proptest::collection::vec((0..12usize, 0..12usize), 0..40)
        ) {
            let g = build_graph(&edges, 12).unwrap();
            for i in 0..12 {
                let nbrs = g.neighbors(i);
                // strictly increasing columns, no self-loops, in range
                prop_assert!(nbrs.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(nbrs.iter().all(|&j| j != i && j < 12));
                // symmetry
                for &j in nbrs {
                    prop_assert!(g.neighbors(j).binary_search(&i).is_ok());
                }
            }
            // every requested non-loop edge is present
            for (a, b) in edges {
                if a != b {
                    prop_assert!(g.neighbors(a).binary_search(&b).is_ok());
                }
            }
        }

        #[test]
        fn normalized_weights_are_symmetric_and_bounded(
            edges in proptest::collection::vec((0..10usize, 0..10usize), 0..30)
        ) {
            let g = build_graph(&edges, 10).unwrap();
            let a = normalize_adjacency(&g);
            for i in 0..10 {
                let (cols, ws) = a.row(i);
                prop_assert!(cols.binary_search(&i).is_ok());
                for (&j, &w) in cols.iter().zip(ws.iter()) {
                    prop_assert!(w > 0.0 && w <= 1.0);
                    prop_assert_eq!(w.to_bits(), a.weight(j, i).unwrap().to_bits());
                }
            }
        }
    }

    #[test]
    fn single_symmetric_edge() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        assert_eq!(g.row_ptr(), &[0, 1, 2]);
        assert_eq!(g.col_idx(), &[1, 0]);
    }

    #[test]
    fn canonicalizes_duplicates_and_self_loops() {
        let g = build_graph(&[(0, 1), (1, 0), (0, 0)], 2).unwrap();
        assert_eq!(g.row_ptr(), &[0, 1, 2]);
        assert_eq!(g.col_idx(), &[1, 0]);
    }

    #[test]
    fn rejects_out_of_range_endpoint() {
        let err = build_graph(&[(0, 5)], 2).unwrap_err();
        assert!(err.to_string().contains("(0, 5)"));
    }

    #[test]
    fn normalize_isolated_node() {
        let g = build_graph(&[], 1).unwrap();
        let a = normalize_adjacency(&g);
        assert_eq!(a.row(0), (&[0usize][..], &[1.0][..]));
    }

    #[test]
    fn normalize_two_connected_nodes() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let a = normalize_adjacency(&g);
        for i in 0..2 {
            let (cols, ws) = a.row(i);
            assert_eq!(cols, &[0, 1]);
            assert_eq!(ws, &[0.5, 0.5]);
        }
    }

    #[test]
    fn normalize_path_graph() {
        let a = normalize_adjacency(&path3());
        let w01 = a.weight(0, 1).unwrap();
        assert!((w01 - 1.0 / 6.0f64.sqrt()).abs() < 1e-15);
        let w11 = a.weight(1, 1).unwrap();
        assert!((w11 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_symmetric_bitwise() {
        let g = random_graph(23, 0.2, 3);
        let a = normalize_adjacency(&g);
        for i in 0..g.num_nodes() {
            let (cols, _) = a.row(i);
            for &j in cols {
                let wij = a.weight(i, j).unwrap();
                let wji = a.weight(j, i).unwrap();
                assert_eq!(wij.to_bits(), wji.to_bits());
                assert!(wij > 0.0 && wij <= 1.0);
            }
        }
    }

    #[test]
    fn spmm_identity_like() {
        let g = build_graph(&[], 1).unwrap();
        let a = normalize_adjacency(&g);
        let x = FeatureMatrix::from_rows(&[vec![3.0]]).unwrap();
        let y = spmm(&a, &x).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn spmm_two_node_hand_example() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let a = normalize_adjacency(&g);
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let y = spmm(&a, &x).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0]);
    }

    #[test]
    fn spmm_dimension_mismatch() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let a = normalize_adjacency(&g);
        let x = FeatureMatrix::zeros(3, 1);
        assert!(spmm(&a, &x).is_err());
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        use rand::Rng;
        let mut rng = crate::hashing::rng_for(seed, "graph-test");
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        build_graph(&edges, n).unwrap()
    }

    /// Dense reference for the normalized adjacency.
    fn dense_adj(a: &NormalizedAdjacency) -> Vec<Vec<f64>> {
        let n = a.num_nodes();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            let (cols, ws) = a.row(i);
            for (&j, &w) in cols.iter().zip(ws.iter()) {
                m[i][j] = w;
            }
        }
        m
    }

    #[test]
    fn spmm_squared_matches_dense_oracle() {
        let g = random_graph(10, 0.3, 11);
        let a = normalize_adjacency(&g);
        let x = {
            use rand::Rng;
            let mut rng = crate::hashing::rng_for(12, "graph-test-x");
            FeatureMatrix::from_vec(
                10,
                3,
                (0..30).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let twice = spmm(&a, &spmm(&a, &x).unwrap()).unwrap();

        let da = dense_adj(&a);
        let n = 10;
        // dense A^2 X
        let mut a2 = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    a2[i][j] += da[i][k] * da[k][j];
                }
            }
        }
        for i in 0..n {
            for c in 0..3 {
                let mut s = 0.0;
                for j in 0..n {
                    s += a2[i][j] * x.get(j, c);
                }
                assert!((s - twice.get(i, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spmm_matches_dense_oracle_at_n50() {
        let g = random_graph(50, 0.1, 31);
        let a = normalize_adjacency(&g);
        let x = {
            use rand::Rng;
            let mut rng = crate::hashing::rng_for(32, "graph-test-x50");
            FeatureMatrix::from_vec(
                50,
                4,
                (0..200).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let got = spmm(&a, &x).unwrap();
        let da = dense_adj(&a);
        for i in 0..50 {
            for c in 0..4 {
                let mut s = 0.0;
                for j in 0..50 {
                    s += da[i][j] * x.get(j, c);
                }
                assert!((got.get(i, c) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spmm_all_ones_on_regular_graphs_is_row_stochastic() {
        // ring: degree 2 everywhere; complete graph on 4 nodes: degree 3.
        let ring = build_graph(&[(0, 1), (1, 2), (2, 3), (3, 0)], 4).unwrap();
        let k4 = build_graph(&[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], 4).unwrap();
        for g in [ring, k4] {
            let a = normalize_adjacency(&g);
            let ones = FeatureMatrix::from_vec(4, 1, vec![1.0; 4]).unwrap();
            let s = spmm(&a, &ones).unwrap();
            for i in 0..4 {
                assert_eq!(s.get(i, 0), 1.0);
            }
        }
    }

    #[test]
    fn k_hop_path_examples() {
        let g = path3();
        let m1 = k_hop_mask(&g, 1);
        assert_eq!(m1.row(0), &[0, 1]);
        assert_eq!(m1.row(1), &[0, 1, 2]);
        assert_eq!(m1.row(2), &[1, 2]);
        let m2 = k_hop_mask(&g, 2);
        for i in 0..3 {
            assert_eq!(m2.row(i), &[0, 1, 2]);
        }
    }

    #[test]
    fn k_hop_matches_bfs_oracle() {
        let g = random_graph(20, 0.12, 5);
        let mask = k_hop_mask(&g, 2);
        // independent oracle: full BFS distances per node
        for s in 0..20 {
            let mut dist = [usize::MAX; 20];
            dist[s] = 0;
            let mut q = std::collections::VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in g.neighbors(u) {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            let expect: Vec<usize> = (0..20).filter(|&v| dist[v] <= 2).collect();
            assert_eq!(mask.row(s), &expect[..]);
        }
    }

    #[test]
    fn induced_subgraph_keep_all_is_identity() {
        let g = random_graph(15, 0.2, 9);
        let keep: Vec<usize> = (0..15).collect();
        let (sub, remap) = induced_subgraph(&g, &keep).unwrap();
        assert_eq!(sub, g);
        for i in 0..15 {
            assert_eq!(remap.to_new(i), Some(i));
            assert_eq!(remap.to_old(i), i);
        }
    }

    #[test]
    fn induced_subgraph_drops_bridge() {
        let (sub, remap) = induced_subgraph(&path3(), &[0, 2]).unwrap();
        assert_eq!(sub.num_nodes(), 2);
        assert_eq!(sub.num_undirected_edges(), 0);
        assert_eq!(remap.to_old(0), 0);
        assert_eq!(remap.to_old(1), 2);
    }

    #[test]
    fn induced_subgraph_edge_count_matches_filter_oracle() {
        let g = random_graph(30, 0.15, 21);
        let keep: Vec<usize> = (0..30).filter(|v| v % 3 != 0).collect();
        let (sub, _) = induced_subgraph(&g, &keep).unwrap();
        let kept: std::collections::HashSet<usize> = keep.iter().copied().collect();
        let expect = g
            .edge_list()
            .iter()
            .filter(|(a, b)| kept.contains(a) && kept.contains(b))
            .count();
        assert_eq!(sub.num_undirected_edges(), expect);
    }

    #[test]
    fn induced_subgraph_rejects_empty() {
        assert!(induced_subgraph(&path3(), &[]).is_err());
    }
}
