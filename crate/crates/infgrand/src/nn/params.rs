//! Model parameters and gradient bundles for the two fixed architectures:
//! a two-layer MLP student (with biases) and an L-layer GCN teacher
//! (weights only).

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Student parameters: `w1` is f x d, `b1` length f, `w2` is c x f, `b2`
/// length c.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: FeatureMatrix,
    pub b1: Vec<f64>,
    pub w2: FeatureMatrix,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.b1.len() != self.hidden_dim() {
            return Err(Error::shape(format!(
                "b1 has {} entries, expected {}",
                self.b1.len(),
                self.hidden_dim()
            )));
        }
        if self.w2.cols() != self.hidden_dim() {
            return Err(Error::shape(format!(
                "w2 has {} columns, expected {}",
                self.w2.cols(),
                self.hidden_dim()
            )));
        }
        if self.b2.len() != self.num_classes() {
            return Err(Error::shape(format!(
                "b2 has {} entries, expected {}",
                self.b2.len(),
                self.num_classes()
            )));
        }
        Ok(())
    }

    pub fn num_entries(&self) -> usize {
        self.w1.data().len() + self.b1.len() + self.w2.data().len() + self.b2.len()
    }

    /// Flat view in the fixed order w1, b1, w2, b2 (each row-major).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_entries());
        v.extend_from_slice(self.w1.data());
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.data());
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_entries());
        let (n1, n2, n3) = (self.w1.data().len(), self.b1.len(), self.w2.data().len());
        self.w1.data_mut().copy_from_slice(&flat[..n1]);
        self.b1.copy_from_slice(&flat[n1..n1 + n2]);
        self.w2
            .data_mut()
            .copy_from_slice(&flat[n1 + n2..n1 + n2 + n3]);
        self.b2.copy_from_slice(&flat[n1 + n2 + n3..]);
    }

    pub fn from_flat_like(template: &MlpParams, flat: &[f64]) -> MlpParams {
        let mut p = template.clone();
        p.assign_from_flat(flat);
        p
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
    }
}

/// Teacher parameters: one in x out weight matrix per layer, no biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub layers: Vec<FeatureMatrix>,
}

impl GcnParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::shape("GCN needs at least one layer"));
        }
        for w in self.layers.windows(2) {
            if w[0].cols() != w[1].rows() {
                return Err(Error::shape(format!(
                    "layer output {} does not match next layer input {}",
                    w[0].cols(),
                    w[1].rows()
                )));
            }
        }
        Ok(())
    }

    pub fn num_entries(&self) -> usize {
        self.layers.iter().map(|w| w.data().len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_entries());
        for w in &self.layers {
            v.extend_from_slice(w.data());
        }
        v
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_entries());
        let mut off = 0;
        for w in &mut self.layers {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn from_flat_like(template: &GcnParams, flat: &[f64]) -> GcnParams {
        let mut p = template.clone();
        p.assign_from_flat(flat);
        p
    }
}

/// Gradients with the same shapes as [`MlpParams`]. The zero bundle is the
/// additive identity for accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: FeatureMatrix,
    pub b1: Vec<f64>,
    pub w2: FeatureMatrix,
    pub b2: Vec<f64>,
}

impl MlpGradients {
    pub fn zeros_like(p: &MlpParams) -> Self {
        MlpGradients {
            w1: FeatureMatrix::zeros(p.w1.rows(), p.w1.cols()),
            b1: vec![0.0; p.b1.len()],
            w2: FeatureMatrix::zeros(p.w2.rows(), p.w2.cols()),
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(self.w1.data());
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.data());
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn add_scaled(&mut self, other: &MlpGradients, scale: f64) {
        for (a, b) in self.w1.data_mut().iter_mut().zip(other.w1.data()) {
            *a += scale * b;
        }
        for (a, b) in self.b1.iter_mut().zip(other.b1.iter()) {
            *a += scale * b;
        }
        for (a, b) in self.w2.data_mut().iter_mut().zip(other.w2.data()) {
            *a += scale * b;
        }
        for (a, b) in self.b2.iter_mut().zip(other.b2.iter()) {
            *a += scale * b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Gradients with the same shapes as [`GcnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GcnGradients {
    pub layers: Vec<FeatureMatrix>,
}

impl GcnGradients {
    pub fn zeros_like(p: &GcnParams) -> Self {
        GcnGradients {
            layers: p
                .layers
                .iter()
                .map(|w| FeatureMatrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for w in &self.layers {
            v.extend_from_slice(w.data());
        }
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
