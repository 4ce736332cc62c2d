//! Content hashing and named deterministic RNG streams.
//!
//! All hashes are SHA-256 over a canonical little-endian byte layout, so
//! they are stable across machines and endianness.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::graph::Graph;
use crate::matrix::FeatureMatrix;

/// Deterministic RNG for a (seed, purpose) pair. Distinct purposes yield
/// independent streams, so adding a new randomized step never shifts the
/// draws of an existing one.
pub fn rng_for(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

pub(crate) struct Hasher(Sha256);

impl Hasher {
    pub fn new(tag: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(tag);
        Hasher(h)
    }

    pub fn u64(&mut self, v: u64) {
        self.0.update(v.to_le_bytes());
    }

    pub fn usize_slice(&mut self, vs: &[usize]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.u64(v as u64);
        }
    }

    pub fn f64_slice(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.0.update(v.to_bits().to_le_bytes());
        }
    }

    pub fn graph(&mut self, g: &Graph) {
        self.u64(g.num_nodes() as u64);
        self.usize_slice(g.row_ptr());
        self.usize_slice(g.col_idx());
    }

    pub fn matrix(&mut self, m: &FeatureMatrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        self.f64_slice(m.data());
    }

    pub fn finish(self) -> String {
        let digest = self.0.finalize();
        let mut s = String::with_capacity(64);
        for b in digest {
            s.push_str(&format!("{:02x}", b));
        }
        s
    }
}

/// Hash of a (graph, features) pair, used as the cache key for influence
/// tables and propagated-feature files.
pub fn graph_features_hash(g: &Graph, x: &FeatureMatrix) -> String {
    let mut h = Hasher::new(b"IGGX");
    h.graph(g);
    h.matrix(x);
    h.finish()
}
