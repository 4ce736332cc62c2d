//! Manual backpropagation: the closed-form per-edge gradients of the
//! distillation loss at tau = 1, the general reverse-mode gradient of the
//! combined objective, the teacher's cross-entropy gradient, and the
//! central finite-difference oracle used to check all of them.

use crate::error::{Error, Result};
use crate::graph::{spmm, Graph, NormalizedAdjacency};
use crate::losses::LossWeights;
use crate::matrix::FeatureMatrix;
use crate::nn::forward::{gcn_trace, mlp_forward, mlp_forward_masked};
use crate::nn::params::{GcnGradients, GcnParams, MlpGradients, MlpParams};
use crate::nn::softmax::{jacobian_apply, log_softmax_rows, softmax_rows};

/// Central finite differences of a scalar loss, one coordinate at a time.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut loss: F, theta: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0);
    let mut point = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let orig = point[i];
        point[i] = orig + h;
        let plus = loss(&point);
        point[i] = orig - h;
        let minus = loss(&point);
        point[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// One directed edge's contribution to the closed-form distillation
/// gradient at tau = 1, scaled by `weight` = (gamma1 + gamma2 * gis_j) /
/// |N(i)|. The directional vector keeps the "+1" term; it cancels through
/// the zero-row-sum Jacobian.
#[allow(clippy::too_many_arguments)]
fn accumulate_ld_edge(
    grads: &mut MlpGradients,
    p: &MlpParams,
    x_row: &[f64],
    hidden_row: &[f64],
    prob_row: &[f64],
    logp_row: &[f64],
    logq_row: &[f64],
    weight: f64,
) {
    let c = p.num_classes();
    let f = p.hidden_dim();
    let u: Vec<f64> = logp_row
        .iter()
        .zip(logq_row.iter())
        .map(|(p, q)| p - q + 1.0)
        .collect();
    let mut v = vec![0.0; c];
    jacobian_apply(prob_row, &u, &mut v);

    // through the second layer
    for (k, &vk) in v.iter().enumerate() {
        grads.b2[k] += weight * vk;
        let w2row = grads.w2.row_mut(k);
        for (a, &h) in hidden_row.iter().enumerate() {
            w2row[a] += weight * vk * h;
        }
    }
    // through the first layer, with the exact ReLU subgradient (0 at 0)
    let mut t = vec![0.0; f];
    for (a, tv) in t.iter_mut().enumerate() {
        if hidden_row[a] > 0.0 {
            let mut s = 0.0;
            for (k, &vk) in v.iter().enumerate() {
                s += p.w2.get(k, a) * vk;
            }
            *tv = s;
        }
    }
    for (a, &tv) in t.iter().enumerate() {
        grads.b1[a] += weight * tv;
        let w1row = grads.w1.row_mut(a);
        for (b, &xv) in x_row.iter().enumerate() {
            w1row[b] += weight * tv * xv;
        }
    }
}

/// Isolated single-edge gradient, exposed for studying how the influence
/// weight scales an edge's contribution.
#[allow(clippy::too_many_arguments)]
pub fn ld_edge_gradient(
    p: &MlpParams,
    x: &FeatureMatrix,
    teacher_logits: &FeatureMatrix,
    i: usize,
    j: usize,
    deg_i: usize,
    gis_j: f64,
    gamma1: f64,
    gamma2: f64,
) -> Result<MlpGradients> {
    let (hidden, logits) = mlp_forward(p, x)?;
    let probs = softmax_rows(&logits);
    let logp = log_softmax_rows(&logits);
    let logq = log_softmax_rows(teacher_logits);
    let mut grads = MlpGradients::zeros_like(p);
    let weight = (gamma1 + gamma2 * gis_j) / deg_i as f64;
    accumulate_ld_edge(
        &mut grads,
        p,
        x.row(i),
        hidden.row(i),
        probs.row(i),
        logp.row(i),
        logq.row(j),
        weight,
    );
    Ok(grads)
}

/// Closed-form gradient of the distillation loss at tau = 1: a per-edge
/// sum of outer products, independent of the reverse-mode path so the two
/// can cross-check each other.
pub fn analytic_ld_gradients(
    p: &MlpParams,
    x: &FeatureMatrix,
    teacher_logits: &FeatureMatrix,
    g: &Graph,
    gis: &[f64],
    gamma1: f64,
    gamma2: f64,
) -> Result<MlpGradients> {
    if g.num_nodes() == 0 {
        return Err(Error::input("distillation gradient over an empty graph"));
    }
    if x.rows() != g.num_nodes()
        || teacher_logits.rows() != g.num_nodes()
        || gis.len() != g.num_nodes()
    {
        return Err(Error::shape(
            "features, teacher logits and gis must cover every graph node",
        ));
    }
    if teacher_logits.cols() != p.num_classes() {
        return Err(Error::shape(format!(
            "teacher has {} classes, student has {}",
            teacher_logits.cols(),
            p.num_classes()
        )));
    }
    let (hidden, logits) = mlp_forward(p, x)?;
    let probs = softmax_rows(&logits);
    let logp = log_softmax_rows(&logits);
    let logq = log_softmax_rows(teacher_logits);
    let mut grads = MlpGradients::zeros_like(p);
    for i in 0..g.num_nodes() {
        let deg = g.degree(i);
        if deg == 0 {
            continue;
        }
        let inv = 1.0 / deg as f64;
        for &j in g.neighbors(i) {
            accumulate_ld_edge(
                &mut grads,
                p,
                x.row(i),
                hidden.row(i),
                probs.row(i),
                logp.row(i),
                logq.row(j),
                (gamma1 + gamma2 * gis[j]) * inv,
            );
        }
    }
    Ok(grads)
}

/// Backprop through the two-layer MLP from a gradient w.r.t. the logits.
/// `hidden` is the post-ReLU (and post-dropout) activation from the same
/// forward pass; `mask` must be the mask used there, if any.
fn mlp_backprop(
    p: &MlpParams,
    x: &FeatureMatrix,
    hidden: &FeatureMatrix,
    logit_grad: &FeatureMatrix,
    mask: Option<&FeatureMatrix>,
) -> MlpGradients {
    let n = x.rows();
    let f = p.hidden_dim();
    let c = p.num_classes();

    let mut b2 = vec![0.0; c];
    for i in 0..n {
        for (k, &gv) in logit_grad.row(i).iter().enumerate() {
            b2[k] += gv;
        }
    }
    let w2 = logit_grad.mul_tn(hidden);

    // d/d hidden, then through dropout and the ReLU subgradient
    let mut dh = logit_grad.mul_nn(&p.w2);
    for i in 0..n {
        let hrow = hidden.row(i);
        let drow = dh.row_mut(i);
        for a in 0..f {
            if hrow[a] > 0.0 {
                if let Some(m) = mask {
                    drow[a] *= m.get(i, a);
                }
            } else {
                drow[a] = 0.0;
            }
        }
    }
    let mut b1 = vec![0.0; f];
    for i in 0..n {
        for (a, &gv) in dh.row(i).iter().enumerate() {
            b1[a] += gv;
        }
    }
    let w1 = dh.mul_tn(x);
    MlpGradients { w1, b1, w2, b2 }
}

/// Scalar losses and the full parameter gradient of one training step.
pub struct StudentStep {
    pub loss_total: f64,
    pub loss_sup: f64,
    pub loss_distill: f64,
    pub grads: MlpGradients,
}

/// Gradient of lambda * L_s + (1 - lambda) * L_d w.r.t. all MLP
/// parameters, for arbitrary positive tau.
#[allow(clippy::too_many_arguments)]
pub fn backward_total(
    p: &MlpParams,
    x: &FeatureMatrix,
    g: &Graph,
    labels: &[usize],
    labeled: &[usize],
    teacher_logits: &FeatureMatrix,
    gis: &[f64],
    weights: &LossWeights,
    mask: Option<&FeatureMatrix>,
) -> Result<StudentStep> {
    weights.validate()?;
    if x.rows() != g.num_nodes() || gis.len() != g.num_nodes() {
        return Err(Error::shape("features and gis must cover every graph node"));
    }
    let (hidden, logits) = mlp_forward_masked(p, x, mask)?;
    let n = x.rows();
    let c = p.num_classes();
    let lambda = weights.lambda;
    let tau = weights.tau;

    // supervised part (plain softmax, no temperature)
    let logp_plain = log_softmax_rows(&logits);
    let mut loss_sup = 0.0;
    let mut grad_logits = FeatureMatrix::zeros(n, c);
    for &i in labeled {
        let y = labels[i];
        if y >= c {
            return Err(Error::input(format!(
                "label {} out of range for {} classes at node {}",
                y, c, i
            )));
        }
        let wi = weights.delta1 + weights.delta2 * gis[i];
        loss_sup += wi * -logp_plain.get(i, y);
        let grow = grad_logits.row_mut(i);
        for (k, &lp) in logp_plain.row(i).iter().enumerate() {
            let indicator = if k == y { 1.0 } else { 0.0 };
            grow[k] += lambda * wi * (lp.exp() - indicator);
        }
    }

    // distillation part (temperature-scaled softmax on both sides)
    let logp_t = log_softmax_rows(&logits.map(|v| v / tau));
    let logq_t = log_softmax_rows(&teacher_logits.map(|v| v / tau));
    let mut loss_distill = 0.0;
    let inv_tau = 1.0 / tau;
    let mut e = vec![0.0; c];
    let mut jv = vec![0.0; c];
    for i in 0..n {
        let deg = g.degree(i);
        if deg == 0 {
            continue;
        }
        let inv_deg = 1.0 / deg as f64;
        let lp = logp_t.row(i);
        e.iter_mut().for_each(|v| *v = 0.0);
        for &j in g.neighbors(i) {
            let w = (weights.gamma1 + weights.gamma2 * gis[j]) * inv_deg;
            let lq = logq_t.row(j);
            let mut kl = 0.0;
            for k in 0..c {
                let diff = lp[k] - lq[k];
                e[k] += w * diff;
                let pk = lp[k].exp();
                if pk > 0.0 {
                    kl += pk * diff;
                }
            }
            loss_distill += w * kl;
        }
        let probs_t: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        jacobian_apply(&probs_t, &e, &mut jv);
        let scale = (1.0 - lambda) * inv_tau;
        let grow = grad_logits.row_mut(i);
        for (k, &v) in jv.iter().enumerate() {
            grow[k] += scale * v;
        }
    }

    let grads = mlp_backprop(p, x, &hidden, &grad_logits, mask);
    Ok(StudentStep {
        loss_total: lambda * loss_sup + (1.0 - lambda) * loss_distill,
        loss_sup,
        loss_distill,
        grads,
    })
}

/// Gradient of the influence-weighted supervised loss alone; the
/// standalone path a lambda = 1 run must reproduce exactly.
#[allow(clippy::too_many_arguments)]
pub fn backward_supervised(
    p: &MlpParams,
    x: &FeatureMatrix,
    labels: &[usize],
    labeled: &[usize],
    gis: &[f64],
    delta1: f64,
    delta2: f64,
    mask: Option<&FeatureMatrix>,
) -> Result<(f64, MlpGradients)> {
    if labeled.is_empty() {
        return Err(Error::input(
            "supervised gradient over an empty labeled set",
        ));
    }
    let (hidden, logits) = mlp_forward_masked(p, x, mask)?;
    let n = x.rows();
    let c = p.num_classes();
    let logp = log_softmax_rows(&logits);
    let mut loss = 0.0;
    let mut grad_logits = FeatureMatrix::zeros(n, c);
    for &i in labeled {
        let y = labels[i];
        if y >= c {
            return Err(Error::input(format!(
                "label {} out of range for {} classes at node {}",
                y, c, i
            )));
        }
        let wi = delta1 + delta2 * gis[i];
        loss += wi * -logp.get(i, y);
        let grow = grad_logits.row_mut(i);
        for (k, &lp) in logp.row(i).iter().enumerate() {
            let indicator = if k == y { 1.0 } else { 0.0 };
            grow[k] += wi * (lp.exp() - indicator);
        }
    }
    let grads = mlp_backprop(p, x, &hidden, &grad_logits, mask);
    Ok((loss, grads))
}

/// Mean cross-entropy over the labeled list and its gradient w.r.t. all
/// GCN layer weights. Duplicate entries in `labeled` are averaged over.
pub(crate) fn gcn_loss_and_grads(
    p: &GcnParams,
    a: &NormalizedAdjacency,
    x: &FeatureMatrix,
    labels: &[usize],
    labeled: &[usize],
    masks: Option<&[FeatureMatrix]>,
) -> Result<(f64, GcnGradients)> {
    if labeled.is_empty() {
        return Err(Error::input("teacher gradient over an empty labeled set"));
    }
    let trace = gcn_trace(p, a, x, masks)?;
    let n = x.rows();
    let c = p.output_dim();
    let logp = log_softmax_rows(&trace.logits);
    let count = labeled.len() as f64;
    let mut loss = 0.0;
    let mut grad_logits = FeatureMatrix::zeros(n, c);
    for &i in labeled {
        let y = labels[i];
        if y >= c {
            return Err(Error::input(format!(
                "label {} out of range for {} classes at node {}",
                y, c, i
            )));
        }
        loss += -logp.get(i, y) / count;
        let grow = grad_logits.row_mut(i);
        for (k, &lp) in logp.row(i).iter().enumerate() {
            let indicator = if k == y { 1.0 } else { 0.0 };
            grow[k] += (lp.exp() - indicator) / count;
        }
    }

    let depth = p.layers.len();
    let mut grads = GcnGradients::zeros_like(p);
    let mut dcur = grad_logits; // gradient w.r.t. the pre-activation of layer l
    for l in (0..depth).rev() {
        grads.layers[l] = trace.aggregated[l].mul_tn(&dcur);
        if l > 0 {
            let dagg = dcur.mul_nt(&p.layers[l]);
            let mut dh = spmm(a, &dagg)?;
            let pre = &trace.pre[l - 1];
            for idx in 0..dh.data().len() {
                if pre.data()[idx] > 0.0 {
                    if let Some(ms) = masks {
                        dh.data_mut()[idx] *= ms[l - 1].data()[idx];
                    }
                } else {
                    dh.data_mut()[idx] = 0.0;
                }
            }
            dcur = dh;
        }
    }
    Ok((loss, grads))
}

/// Gradient of the teacher's mean cross-entropy, dropout disabled.
pub fn gcn_backward(
    p: &GcnParams,
    a: &NormalizedAdjacency,
    x: &FeatureMatrix,
    labels: &[usize],
    labeled: &[usize],
) -> Result<GcnGradients> {
    Ok(gcn_loss_and_grads(p, a, x, labels, labeled, None)?.1)
}
