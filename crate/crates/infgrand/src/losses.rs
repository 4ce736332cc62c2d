//! Scalar losses: influence-weighted supervised cross-entropy, the
//! neighbor-matching distillation loss, and their convex combination.
//! These are kept separate from the gradient kernels so they can serve as
//! the finite-difference target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::FeatureMatrix;
use crate::nn::softmax::log_softmax_rows;

/// The six loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 0.1,
            delta1: 0.6,
            delta2: 0.2,
            gamma1: 0.8,
            gamma2: 0.4,
            tau: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::input(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::input(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        for (name, v) in [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::input(format!(
                    "{} must be nonnegative and finite, got {}",
                    name, v
                )));
            }
        }
        Ok(())
    }
}

/// KL divergence between two log-probability rows:
/// sum_k exp(p_k) (p_k - q_k).
pub fn kl_divergence(p_log: &[f64], q_log: &[f64]) -> f64 {
    debug_assert_eq!(p_log.len(), q_log.len());
    let mut s = 0.0;
    for (&p, &q) in p_log.iter().zip(q_log.iter()) {
        let pw = p.exp();
        if pw > 0.0 {
            s += pw * (p - q);
        }
    }
    s
}

/// Influence-weighted supervised loss, summed (not averaged) over the
/// labeled set: sum_i [delta1 + delta2 * gis(i)] * CE_i.
pub fn supervised_loss(
    student_logits: &FeatureMatrix,
    labels: &[usize],
    labeled: &[usize],
    gis: &[f64],
    delta1: f64,
    delta2: f64,
) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::input("supervised loss over an empty labeled set"));
    }
    let c = student_logits.cols();
    let logp = log_softmax_rows(student_logits);
    let mut loss = 0.0;
    for &i in labeled {
        let y = labels[i];
        if y >= c {
            return Err(Error::input(format!(
                "label {} out of range for {} classes at node {}",
                y, c, i
            )));
        }
        let ce = -logp.get(i, y);
        loss += (delta1 + delta2 * gis[i]) * ce;
    }
    Ok(loss)
}

/// Neighbor-matching distillation loss: for every node i and neighbor j,
/// (gamma1 + gamma2 * gis(j)) / |N(i)| * KL(softmax(h_i^s / tau) ||
/// softmax(h_j^t / tau)). Isolated nodes contribute nothing.
pub fn distill_loss(
    student_logits: &FeatureMatrix,
    teacher_logits: &FeatureMatrix,
    g: &Graph,
    gis: &[f64],
    gamma1: f64,
    gamma2: f64,
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::input(format!("tau must be positive, got {}", tau)));
    }
    if student_logits.cols() != teacher_logits.cols() {
        return Err(Error::shape(format!(
            "student has {} classes, teacher has {}",
            student_logits.cols(),
            teacher_logits.cols()
        )));
    }
    if student_logits.rows() != g.num_nodes() || teacher_logits.rows() != g.num_nodes() {
        return Err(Error::shape(
            "logit row counts do not match the graph's node count",
        ));
    }
    let logp = log_softmax_rows(&student_logits.map(|v| v / tau));
    let logq = log_softmax_rows(&teacher_logits.map(|v| v / tau));
    let mut loss = 0.0;
    for i in 0..g.num_nodes() {
        let deg = g.degree(i);
        if deg == 0 {
            continue;
        }
        let inv = 1.0 / deg as f64;
        for &j in g.neighbors(i) {
            let w = (gamma1 + gamma2 * gis[j]) * inv;
            loss += w * kl_divergence(logp.row(i), logq.row(j));
        }
    }
    Ok(loss)
}

/// lambda * ls + (1 - lambda) * ld.
pub fn total_loss(ls: f64, ld: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::input(format!(
            "lambda must be in [0, 1], got {}",
            lambda
        )));
    }
    Ok(lambda * ls + (1.0 - lambda) * ld)
}
