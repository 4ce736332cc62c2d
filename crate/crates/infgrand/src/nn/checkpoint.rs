//! Parameter checkpoints: a single-line JSON header followed by the
//! row-major little-endian float payload. Round-trips are bit-exact.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::nn::params::{GcnParams, MlpParams};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Header {
    Mlp {
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        seed: u64,
        step: u64,
    },
    Gcn {
        dims: Vec<usize>,
        seed: u64,
        step: u64,
    },
}

fn write_payload(f: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_payload(f: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        f.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn save_mlp(path: &Path, p: &MlpParams, seed: u64, step: u64) -> Result<()> {
    let header = Header::Mlp {
        input_dim: p.input_dim(),
        hidden_dim: p.hidden_dim(),
        num_classes: p.num_classes(),
        seed,
        step,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header)?;
    f.write_all(b"\n")?;
    write_payload(&mut f, &p.to_flat())?;
    f.flush()?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<(MlpParams, u64, u64)> {
    let mut f = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    f.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    match header {
        Header::Mlp {
            input_dim,
            hidden_dim,
            num_classes,
            seed,
            step,
        } => {
            let total =
                hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
            let flat = read_payload(&mut f, total)?;
            let mut p = MlpParams {
                w1: FeatureMatrix::zeros(hidden_dim, input_dim),
                b1: vec![0.0; hidden_dim],
                w2: FeatureMatrix::zeros(num_classes, hidden_dim),
                b2: vec![0.0; num_classes],
            };
            p.assign_from_flat(&flat);
            Ok((p, seed, step))
        }
        Header::Gcn { .. } => Err(Error::input(format!(
            "{}: checkpoint holds GCN parameters, expected MLP",
            path.display()
        ))),
    }
}

pub fn save_gcn(path: &Path, p: &GcnParams, seed: u64, step: u64) -> Result<()> {
    let mut dims: Vec<usize> = vec![p.layers[0].rows()];
    dims.extend(p.layers.iter().map(|w| w.cols()));
    let header = Header::Gcn { dims, seed, step };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header)?;
    f.write_all(b"\n")?;
    write_payload(&mut f, &p.to_flat())?;
    f.flush()?;
    Ok(())
}

pub fn load_gcn(path: &Path) -> Result<(GcnParams, u64, u64)> {
    let mut f = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    f.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    match header {
        Header::Gcn { dims, seed, step } => {
            let total: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
            let flat = read_payload(&mut f, total)?;
            let mut p = GcnParams {
                layers: dims
                    .windows(2)
                    .map(|w| FeatureMatrix::zeros(w[0], w[1]))
                    .collect(),
            };
            p.assign_from_flat(&flat);
            Ok((p, seed, step))
        }
        Header::Mlp { .. } => Err(Error::input(format!(
            "{}: checkpoint holds MLP parameters, expected GCN",
            path.display()
        ))),
    }
}
