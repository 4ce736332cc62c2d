//! One-time pre-computation of the student's structure-enriched input:
//! multi-hop propagated feature matrices pooled elementwise, cached on
//! disk so inference never recomputes them.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, spmm, Graph, NormalizedAdjacency};
use crate::hashing::graph_features_hash;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Mean,
    Max,
    Min,
}

impl std::fmt::Display for PoolMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoolMode::Mean => write!(f, "mean"),
            PoolMode::Max => write!(f, "max"),
            PoolMode::Min => write!(f, "min"),
        }
    }
}

impl std::str::FromStr for PoolMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PoolMode::Mean),
            "max" => Ok(PoolMode::Max),
            "min" => Ok(PoolMode::Min),
            other => Err(Error::input(format!("unknown pool mode '{}'", other))),
        }
    }
}

/// Pooled multi-hop features: same shape as the raw features, tagged with
/// the hop count, pool mode and the (graph, features) content hash they
/// were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures {
    pub matrix: FeatureMatrix,
    pub hops: usize,
    pub pool: PoolMode,
    pub graph_hash: String,
}

/// The matrices `a^p x` for p = 0..=p; element 0 is a copy of `x`.
pub fn multi_hop_features(
    a: &NormalizedAdjacency,
    x: &FeatureMatrix,
    p: usize,
) -> Result<Vec<FeatureMatrix>> {
    if a.num_nodes() != x.rows() {
        return Err(Error::shape(format!(
            "adjacency has {} nodes but features have {} rows",
            a.num_nodes(),
            x.rows()
        )));
    }
    let mut out = Vec::with_capacity(p + 1);
    out.push(x.clone());
    for _ in 0..p {
        let next = spmm(a, out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

/// Elementwise mean/max/min across a stack of equal-shape matrices.
pub fn pool(mats: &[FeatureMatrix], mode: PoolMode) -> Result<FeatureMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::input("pooling over an empty matrix list"))?;
    let (rows, cols) = (first.rows(), first.cols());
    for (p, m) in mats.iter().enumerate() {
        if m.rows() != rows || m.cols() != cols {
            return Err(Error::shape(format!(
                "matrix {} in pool stack is {}x{}, expected {}x{}",
                p,
                m.rows(),
                m.cols(),
                rows,
                cols
            )));
        }
    }
    let mut out = first.clone();
    match mode {
        PoolMode::Mean => {
            for m in &mats[1..] {
                for (o, &v) in out.data_mut().iter_mut().zip(m.data().iter()) {
                    *o += v;
                }
            }
            let inv = 1.0 / mats.len() as f64;
            for o in out.data_mut() {
                *o *= inv;
            }
        }
        PoolMode::Max => {
            for m in &mats[1..] {
                for (o, &v) in out.data_mut().iter_mut().zip(m.data().iter()) {
                    *o = o.max(v);
                }
            }
        }
        PoolMode::Min => {
            for m in &mats[1..] {
                for (o, &v) in out.data_mut().iter_mut().zip(m.data().iter()) {
                    *o = o.min(v);
                }
            }
        }
    }
    Ok(out)
}

/// Normalize, propagate p hops and pool: the fixed input matrix handed to
/// the student.
pub fn student_input(
    g: &Graph,
    x: &FeatureMatrix,
    p: usize,
    mode: PoolMode,
) -> Result<PooledFeatures> {
    let a = normalize_adjacency(g);
    let mats = multi_hop_features(&a, x, p)?;
    let matrix = pool(&mats, mode)?;
    Ok(PooledFeatures {
        matrix,
        hops: p,
        pool: mode,
        graph_hash: graph_features_hash(g, x),
    })
}

const MAGIC: &[u8; 4] = b"IGPF";
const VERSION: u32 = 1;

fn pool_tag(mode: PoolMode) -> u8 {
    match mode {
        PoolMode::Mean => 0,
        PoolMode::Max => 1,
        PoolMode::Min => 2,
    }
}

fn pool_from_tag(tag: u8) -> Result<PoolMode> {
    match tag {
        0 => Ok(PoolMode::Mean),
        1 => Ok(PoolMode::Max),
        2 => Ok(PoolMode::Min),
        other => Err(Error::input(format!("unknown pool tag {}", other))),
    }
}

/// Binary cache: header (hops, mode, content hash) followed by the
/// row-major little-endian float payload.
pub fn save_pooled_features(path: &Path, pooled: &PooledFeatures) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(pooled.hops as u64).to_le_bytes())?;
    f.write_all(&[pool_tag(pooled.pool)])?;
    let hash = pooled.graph_hash.as_bytes();
    f.write_all(&(hash.len() as u32).to_le_bytes())?;
    f.write_all(hash)?;
    f.write_all(&(pooled.matrix.rows() as u64).to_le_bytes())?;
    f.write_all(&(pooled.matrix.cols() as u64).to_le_bytes())?;
    for v in pooled.matrix.data() {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_pooled_features(path: &Path) -> Result<PooledFeatures> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::input(format!(
            "{}: not a pooled-features cache",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(Error::input("unsupported pooled-features cache version"));
    }
    let mut u64buf = [0u8; 8];
    f.read_exact(&mut u64buf)?;
    let hops = u64::from_le_bytes(u64buf) as usize;
    let mut tag = [0u8; 1];
    f.read_exact(&mut tag)?;
    let pool = pool_from_tag(tag[0])?;
    f.read_exact(&mut u32buf)?;
    let hash_len = u32::from_le_bytes(u32buf) as usize;
    let mut hash = vec![0u8; hash_len];
    f.read_exact(&mut hash)?;
    let graph_hash = String::from_utf8(hash)
        .map_err(|_| Error::input("corrupt hash in pooled-features cache".to_string()))?;
    f.read_exact(&mut u64buf)?;
    let rows = u64::from_le_bytes(u64buf) as usize;
    f.read_exact(&mut u64buf)?;
    let cols = u64::from_le_bytes(u64buf) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    let mut fbuf = [0u8; 8];
    for _ in 0..rows * cols {
        f.read_exact(&mut fbuf)?;
        data.push(f64::from_le_bytes(fbuf));
    }
    Ok(PooledFeatures {
        matrix: FeatureMatrix::from_vec(rows, cols, data)?,
        hops,
        pool,
        graph_hash,
    })
}

/// Computes the pooled student input, reusing `cache_path` when it matches
/// the (graph, features, p, mode) key. Returns the result and whether the
/// cache was hit.
pub fn student_input_cached(
    g: &Graph,
    x: &FeatureMatrix,
    p: usize,
    mode: PoolMode,
    cache_path: &Path,
) -> Result<(PooledFeatures, bool)> {
    let hash = graph_features_hash(g, x);
    if cache_path.exists() {
        if let Ok(pooled) = load_pooled_features(cache_path) {
            if pooled.graph_hash == hash && pooled.hops == p && pooled.pool == mode {
                return Ok((pooled, true));
            }
        }
    }
    let pooled = student_input(g, x, p, mode)?;
    save_pooled_features(cache_path, &pooled)?;
    Ok((pooled, false))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #[test]
        fn pooled_entries_are_ordered_min_mean_max(
            stack in proptest::collection::vec(
                proptest::collection::vec(-5.0..5.0f64, 6),
                1..5,
            )
        ) {
            let mats: Vec<FeatureMatrix> = stack
                .iter()
                .map(|d| FeatureMatrix::from_vec(2, 3, d.clone()).unwrap())
                .collect();
            let mn = pool(&mats, PoolMode::Min).unwrap();
            let me = pool(&mats, PoolMode::Mean).unwrap();
            let mx = pool(&mats, PoolMode::Max).unwrap();
            for k in 0..6 {
                prop_assert!(mn.data()[k] <= me.data()[k] + 1e-12);
                prop_assert!(me.data()[k] <= mx.data()[k] + 1e-12);
            }
        }
    }

    fn two_node() -> (Graph, FeatureMatrix) {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        (g, x)
    }

    #[test]
    fn zero_hops_is_just_the_input() {
        let (g, x) = two_node();
        let a = normalize_adjacency(&g);
        let mats = multi_hop_features(&a, &x, 0).unwrap();
        assert_eq!(mats.len(), 1);
        assert_eq!(mats[0], x);
    }

    #[test]
    fn two_hops_hand_example() {
        let (g, x) = two_node();
        let a = normalize_adjacency(&g);
        let mats = multi_hop_features(&a, &x, 2).unwrap();
        assert_eq!(mats[0].data(), &[1.0, 3.0]);
        assert_eq!(mats[1].data(), &[2.0, 2.0]);
        assert_eq!(mats[2].data(), &[2.0, 2.0]);
    }

    #[test]
    fn hops_match_dense_power_oracle() {
        let mut rng = crate::hashing::rng_for(31, "prop-test");
        let mut edges = Vec::new();
        let n = 14;
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.25 {
                    edges.push((i, j));
                }
            }
        }
        let g = build_graph(&edges, n).unwrap();
        let a = normalize_adjacency(&g);
        let d = 3;
        let x = FeatureMatrix::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mats = multi_hop_features(&a, &x, 3).unwrap();

        // dense A^p oracle
        let mut da = vec![vec![0.0; n]; n];
        for i in 0..n {
            let (cols, ws) = a.row(i);
            for (&j, &w) in cols.iter().zip(ws.iter()) {
                da[i][j] = w;
            }
        }
        let mut ap = vec![vec![0.0; n]; n];
        for (i, row) in ap.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for (p, got) in mats.iter().enumerate() {
            if p > 0 {
                let mut next = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            next[i][j] += da[i][k] * ap[k][j];
                        }
                    }
                }
                ap = next;
            }
            for i in 0..n {
                for c in 0..d {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += ap[i][j] * x.get(j, c);
                    }
                    assert!((s - got.get(i, c)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_mean_of_duplicates_is_identity() {
        let (_, x) = two_node();
        let out = pool(&[x.clone(), x.clone()], PoolMode::Mean).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn pool_max_min_examples() {
        let a = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        let b = FeatureMatrix::from_rows(&[vec![2.0]]).unwrap();
        let mx = pool(&[a.clone(), b.clone()], PoolMode::Max).unwrap();
        assert_eq!(mx.data(), &[2.0]);
        let mn = pool(&[a, b], PoolMode::Min).unwrap();
        assert_eq!(mn.data(), &[0.0]);
    }

    #[test]
    fn pool_mean_matches_sum_oracle() {
        let mut rng = crate::hashing::rng_for(33, "pool-test");
        let stack: Vec<FeatureMatrix> = (0..4)
            .map(|_| {
                FeatureMatrix::from_vec(3, 2, (0..6).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .unwrap()
            })
            .collect();
        let mean = pool(&stack, PoolMode::Mean).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                let s: f64 = stack.iter().map(|m| m.get(r, c)).sum();
                assert!((mean.get(r, c) - s / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_rejects_shape_mismatch() {
        let a = FeatureMatrix::zeros(2, 2);
        let b = FeatureMatrix::zeros(2, 3);
        assert!(pool(&[a, b], PoolMode::Mean).is_err());
        assert!(pool(&[], PoolMode::Mean).is_err());
    }

    #[test]
    fn student_input_zero_hops_returns_raw() {
        let (g, x) = two_node();
        for mode in [PoolMode::Mean, PoolMode::Max, PoolMode::Min] {
            let pooled = student_input(&g, &x, 0, mode).unwrap();
            assert_eq!(pooled.matrix, x);
        }
    }

    #[test]
    fn student_input_default_hand_example() {
        let (g, x) = two_node();
        let pooled = student_input(&g, &x, 2, PoolMode::Mean).unwrap();
        assert!((pooled.matrix.get(0, 0) - 5.0 / 3.0).abs() < 1e-15);
        assert!((pooled.matrix.get(1, 0) - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pooled_shape_matches_input_shape() {
        let (g, x) = two_node();
        for p in 0..4 {
            let pooled = student_input(&g, &x, p, PoolMode::Mean).unwrap();
            assert_eq!(pooled.matrix.rows(), x.rows());
            assert_eq!(pooled.matrix.cols(), x.cols());
        }
    }

    #[test]
    fn mean_pooling_is_linear_in_features() {
        let mut rng = crate::hashing::rng_for(35, "linear-test");
        let mut edges = Vec::new();
        for i in 0..8 {
            for j in (i + 1)..8 {
                if rng.random::<f64>() < 0.3 {
                    edges.push((i, j));
                }
            }
        }
        let g = build_graph(&edges, 8).unwrap();
        let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng| {
            FeatureMatrix::from_vec(8, 2, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let x = rand_mat(&mut rng);
        let y = rand_mat(&mut rng);
        let (alpha, beta) = (1.5, -0.75);
        let mut comb = FeatureMatrix::zeros(8, 2);
        for i in 0..16 {
            comb.data_mut()[i] = alpha * x.data()[i] + beta * y.data()[i];
        }
        let px = student_input(&g, &x, 2, PoolMode::Mean).unwrap();
        let py = student_input(&g, &y, 2, PoolMode::Mean).unwrap();
        let pc = student_input(&g, &comb, 2, PoolMode::Mean).unwrap();
        for i in 0..16 {
            let expect = alpha * px.matrix.data()[i] + beta * py.matrix.data()[i];
            assert!((pc.matrix.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn min_le_mean_le_max_elementwise() {
        let mut rng = crate::hashing::rng_for(37, "order-test");
        let mut edges = Vec::new();
        for i in 0..10 {
            for j in (i + 1)..10 {
                if rng.random::<f64>() < 0.3 {
                    edges.push((i, j));
                }
            }
        }
        let g = build_graph(&edges, 10).unwrap();
        let x = FeatureMatrix::from_vec(
            10,
            3,
            (0..30).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let mn = student_input(&g, &x, 2, PoolMode::Min).unwrap();
        let me = student_input(&g, &x, 2, PoolMode::Mean).unwrap();
        let mx = student_input(&g, &x, 2, PoolMode::Max).unwrap();
        for i in 0..30 {
            assert!(mn.matrix.data()[i] <= me.matrix.data()[i] + 1e-12);
            assert!(me.matrix.data()[i] <= mx.matrix.data()[i] + 1e-12);
        }
    }

    #[test]
    fn cache_hit_is_bit_identical() {
        let (g, x) = two_node();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("xtilde.bin");
        let (p1, hit1) = student_input_cached(&g, &x, 2, PoolMode::Mean, &path).unwrap();
        assert!(!hit1);
        let (p2, hit2) = student_input_cached(&g, &x, 2, PoolMode::Mean, &path).unwrap();
        assert!(hit2);
        for (a, b) in p1.matrix.data().iter().zip(p2.matrix.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // different pool mode misses
        let (_, hit3) = student_input_cached(&g, &x, 2, PoolMode::Max, &path).unwrap();
        assert!(!hit3);
    }
}
