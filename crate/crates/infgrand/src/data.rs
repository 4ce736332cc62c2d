//! Dataset loading and validation, the synthetic homophilic generator,
//! and content hashing for cache keys.
//!
//! Directory layout: `<name>/edges.txt`, `features.txt`, `labels.txt`,
//! optional `split.json`, optional `features.bin` (loaded in preference
//! to the text file when present).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::hashing::{rng_for, Hasher};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.rows() != n {
            return Err(Error::input(format!(
                "features have {} rows but the graph has {} nodes",
                self.features.rows(),
                n
            )));
        }
        if self.labels.len() != n {
            return Err(Error::input(format!(
                "{} labels for {} nodes",
                self.labels.len(),
                n
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::input(format!(
                "label {} out of range for {} classes",
                bad, self.num_classes
            )));
        }
        if !self.features.is_finite() {
            return Err(Error::input("features contain a non-finite value"));
        }
        Ok(())
    }
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// One "i j" pair per line, 0-based, whitespace-separated; lines starting
/// with '#' and blank lines are ignored.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = std::fs::File::open(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut parts = text.split_whitespace();
        let a = parts
            .next()
            .ok_or_else(|| parse_error(path, lineno + 1, "missing source endpoint"))?;
        let b = parts
            .next()
            .ok_or_else(|| parse_error(path, lineno + 1, "missing target endpoint"))?;
        if parts.next().is_some() {
            return Err(parse_error(
                path,
                lineno + 1,
                "expected exactly two endpoints",
            ));
        }
        let a: usize = a
            .parse()
            .map_err(|_| parse_error(path, lineno + 1, format!("bad node index '{}'", a)))?;
        let b: usize = b
            .parse()
            .map_err(|_| parse_error(path, lineno + 1, format!("bad node index '{}'", b)))?;
        edges.push((a, b));
    }
    Ok(edges)
}

/// N lines of d space-separated decimal floats.
pub fn read_features_text(path: &Path) -> Result<FeatureMatrix> {
    let file = std::fs::File::open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in text.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                parse_error(path, lineno + 1, format!("bad feature value '{}'", tok))
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    lineno + 1,
                    format!("non-finite feature value '{}'", tok),
                ));
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_error(
                    path,
                    lineno + 1,
                    format!("row has {} values, expected {}", row.len(), w),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    FeatureMatrix::from_rows(&rows)
}

/// One integer class per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let file = std::fs::File::open(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let y: usize = text
            .parse()
            .map_err(|_| parse_error(path, lineno + 1, format!("bad label '{}'", text)))?;
        labels.push(y);
    }
    Ok(labels)
}

const FEATURES_MAGIC: &[u8; 4] = b"IGND";
const FEATURES_VERSION: u32 = 1;

/// Binary feature sidecar: magic "IGND", version u32, N u64, d u64, then
/// little-endian f64 payload, row-major.
pub fn write_features_bin(path: &Path, x: &FeatureMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(FEATURES_MAGIC)?;
    f.write_all(&FEATURES_VERSION.to_le_bytes())?;
    f.write_all(&(x.rows() as u64).to_le_bytes())?;
    f.write_all(&(x.cols() as u64).to_le_bytes())?;
    for v in x.data() {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_features_bin(path: &Path) -> Result<FeatureMatrix> {
    let mut f = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != FEATURES_MAGIC {
        return Err(Error::input(format!(
            "{}: not a feature sidecar",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != FEATURES_VERSION {
        return Err(Error::input("unsupported feature sidecar version"));
    }
    let mut u64buf = [0u8; 8];
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
    FeatureMatrix::from_vec(rows, cols, data)
}

/// Load and eagerly validate a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let labels_path = dir.join("labels.txt");
    if !labels_path.exists() {
        return Err(Error::input(format!(
            "missing file {}",
            labels_path.display()
        )));
    }
    let labels = read_labels(&labels_path)?;
    let num_nodes = labels.len();
    let num_classes = labels.iter().max().map(|&m| m + 1).unwrap_or(0);

    let bin_path = dir.join("features.bin");
    let features = if bin_path.exists() {
        read_features_bin(&bin_path)?
    } else {
        let text_path = dir.join("features.txt");
        if !text_path.exists() {
            return Err(Error::input(format!(
                "missing file {}",
                text_path.display()
            )));
        }
        read_features_text(&text_path)?
    };

    let edges_path = dir.join("edges.txt");
    if !edges_path.exists() {
        return Err(Error::input(format!(
            "missing file {}",
            edges_path.display()
        )));
    }
    let edges = read_edge_list(&edges_path)?;
    let graph = build_graph(&edges, num_nodes)?;

    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let dataset = Dataset {
        graph,
        features,
        labels,
        num_classes,
        name,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Write a dataset back out in the plain-text layout.
pub fn save_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut edges = std::io::BufWriter::new(std::fs::File::create(dir.join("edges.txt"))?);
    for (a, b) in d.graph.edge_list() {
        writeln!(edges, "{} {}", a, b)?;
    }
    edges.flush()?;
    let mut feats = std::io::BufWriter::new(std::fs::File::create(dir.join("features.txt"))?);
    for i in 0..d.features.rows() {
        let row: Vec<String> = d.features.row(i).iter().map(|v| format!("{}", v)).collect();
        writeln!(feats, "{}", row.join(" "))?;
    }
    feats.flush()?;
    let mut labels = std::io::BufWriter::new(std::fs::File::create(dir.join("labels.txt"))?);
    for y in &d.labels {
        writeln!(labels, "{}", y)?;
    }
    labels.flush()?;
    Ok(())
}

/// Stochastic-block-model generator: classes assigned round-robin, edges
/// drawn with intra/inter class probabilities, features placed at
/// separation-scaled class centers plus Gaussian noise. Fully
/// deterministic per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_nodes: 600,
            num_classes: 3,
            feature_dim: 16,
            intra_p: 0.03,
            inter_p: 0.002,
            separation: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("intra_p", self.intra_p), ("inter_p", self.inter_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!(
                    "{} must be in [0, 1], got {}",
                    name, p
                )));
            }
        }
        if self.num_nodes == 0 || self.num_classes == 0 || self.feature_dim == 0 {
            return Err(Error::input("synthetic sizes must be positive"));
        }
        if self.noise < 0.0 || self.separation < 0.0 {
            return Err(Error::input("separation and noise must be nonnegative"));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.num_nodes;
    let c = spec.num_classes;
    let d = spec.feature_dim;
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();

    // class centers: separation-scaled random unit directions
    let mut crng = rng_for(spec.seed, "synthetic-centers");
    let mut centers = Vec::with_capacity(c);
    for _ in 0..c {
        let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut crng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut dir {
            *v = *v / norm * spec.separation;
        }
        centers.push(dir);
    }

    let mut frng = rng_for(spec.seed, "synthetic-features");
    let mut features = FeatureMatrix::zeros(n, d);
    for i in 0..n {
        let center = &centers[labels[i]];
        let row = features.row_mut(i);
        for (v, &cv) in row.iter_mut().zip(center.iter()) {
            let noise: f64 = StandardNormal.sample(&mut frng);
            *v = cv + spec.noise * noise;
        }
    }

    let mut erng = rng_for(spec.seed, "synthetic-edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                spec.intra_p
            } else {
                spec.inter_p
            };
            if erng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = build_graph(&edges, n)?;
    Ok(Dataset {
        graph,
        features,
        labels,
        num_classes: c,
        name: format!("synthetic-n{}-c{}-s{}", n, c, spec.seed),
    })
}

/// Fraction of undirected edges joining same-class endpoints.
pub fn edge_homophily(g: &Graph, labels: &[usize]) -> f64 {
    let edges = g.edge_list();
    if edges.is_empty() {
        return 0.0;
    }
    let intra = edges
        .iter()
        .filter(|(a, b)| labels[*a] == labels[*b])
        .count();
    intra as f64 / edges.len() as f64
}

/// SHA-256 over the canonical little-endian serialization of graph,
/// features, labels and class count. The dataset name is not content.
pub fn dataset_hash(d: &Dataset) -> String {
    let mut h = Hasher::new(b"IGDS");
    h.graph(&d.graph);
    h.matrix(&d.features);
    h.usize_slice(&d.labels);
    h.u64(d.num_classes as u64);
    h.finish()
}
