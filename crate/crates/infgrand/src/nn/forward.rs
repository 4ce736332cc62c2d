//! Forward passes for the MLP student and the GCN teacher, plus seeded
//! inverted dropout on hidden activations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{spmm, NormalizedAdjacency};
use crate::matrix::FeatureMatrix;
use crate::nn::params::{GcnParams, MlpParams};

/// Inverted dropout mask: entries are 0 or 1/(1 - rate), applied
/// elementwise to hidden activations during training only.
pub fn sample_dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> FeatureMatrix {
    debug_assert!((0.0..1.0).contains(&rate));
    let keep = 1.0 / (1.0 - rate);
    let mut m = FeatureMatrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        };
    }
    m
}

/// Student forward: hidden = relu(x w1^T + b1), logits = hidden w2^T + b2.
/// Returns both so the backward pass can reuse the activations.
pub fn mlp_forward(p: &MlpParams, x: &FeatureMatrix) -> Result<(FeatureMatrix, FeatureMatrix)> {
    mlp_forward_masked(p, x, None)
}

/// Forward with an optional precomputed dropout mask on the hidden layer.
pub fn mlp_forward_masked(
    p: &MlpParams,
    x: &FeatureMatrix,
    mask: Option<&FeatureMatrix>,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    p.validate()?;
    if x.cols() != p.input_dim() {
        return Err(Error::shape(format!(
            "input has {} columns, expected {}",
            x.cols(),
            p.input_dim()
        )));
    }
    let mut hidden = x.mul_nt(&p.w1);
    for i in 0..hidden.rows() {
        let row = hidden.row_mut(i);
        for (v, &b) in row.iter_mut().zip(p.b1.iter()) {
            *v = (*v + b).max(0.0);
        }
    }
    if let Some(m) = mask {
        if m.rows() != hidden.rows() || m.cols() != hidden.cols() {
            return Err(Error::shape("dropout mask shape mismatch"));
        }
        for (h, &s) in hidden.data_mut().iter_mut().zip(m.data().iter()) {
            *h *= s;
        }
    }
    let mut logits = hidden.mul_nt(&p.w2);
    for i in 0..logits.rows() {
        let row = logits.row_mut(i);
        for (v, &b) in row.iter_mut().zip(p.b2.iter()) {
            *v += b;
        }
    }
    Ok((hidden, logits))
}

/// Cached intermediates of a GCN forward pass, one entry per layer:
/// `aggregated[l]` = A h_{l-1}, `pre[l]` = aggregated * w_l (pre-activation).
pub(crate) struct GcnTrace {
    pub aggregated: Vec<FeatureMatrix>,
    pub pre: Vec<FeatureMatrix>,
    pub logits: FeatureMatrix,
}

pub(crate) fn gcn_trace(
    p: &GcnParams,
    a: &NormalizedAdjacency,
    x: &FeatureMatrix,
    masks: Option<&[FeatureMatrix]>,
) -> Result<GcnTrace> {
    p.validate()?;
    if x.cols() != p.input_dim() {
        return Err(Error::shape(format!(
            "input has {} columns, expected {}",
            x.cols(),
            p.input_dim()
        )));
    }
    if let Some(ms) = masks {
        if ms.len() != p.layers.len() - 1 {
            return Err(Error::shape("one dropout mask per hidden layer expected"));
        }
    }
    let depth = p.layers.len();
    let mut aggregated = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth);
    let mut h = x.clone();
    for (l, w) in p.layers.iter().enumerate() {
        let agg = spmm(a, &h)?;
        let z = agg.mul_nn(w);
        aggregated.push(agg);
        if l + 1 < depth {
            let mut act = z.map(|v| v.max(0.0));
            if let Some(ms) = masks {
                for (o, &s) in act.data_mut().iter_mut().zip(ms[l].data().iter()) {
                    *o *= s;
                }
            }
            pre.push(z);
            h = act;
        } else {
            pre.push(z.clone());
            h = z;
        }
    }
    Ok(GcnTrace {
        aggregated,
        pre,
        logits: h,
    })
}

/// Teacher forward: logits of an L-layer GCN with ReLU between layers and
/// no activation after the last.
pub fn gcn_forward(
    p: &GcnParams,
    a: &NormalizedAdjacency,
    x: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    Ok(gcn_trace(p, a, x, None)?.logits)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, normalize_adjacency};
    use rand::Rng;

    fn identity(n: usize) -> FeatureMatrix {
        let mut m = FeatureMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    #[test]
    fn mlp_zero_params_give_zero_logits() {
        let p = MlpParams {
            w1: FeatureMatrix::zeros(3, 2),
            b1: vec![0.0; 3],
            w2: FeatureMatrix::zeros(4, 3),
            b2: vec![0.0; 4],
        };
        let x = FeatureMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.5]]).unwrap();
        let (_, logits) = mlp_forward(&p, &x).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_identity_passes_nonnegative_input_through() {
        let p = MlpParams {
            w1: identity(2),
            b1: vec![0.0; 2],
            w2: identity(2),
            b2: vec![0.0; 2],
        };
        let x = FeatureMatrix::from_rows(&[vec![0.5, 2.0], vec![0.0, 1.0]]).unwrap();
        let (_, logits) = mlp_forward(&p, &x).unwrap();
        assert_eq!(logits.data(), x.data());
    }

    #[test]
    fn mlp_matches_scalar_triple_loop_oracle() {
        let mut rng = crate::hashing::rng_for(45, "mlp-forward-test");
        for _ in 0..10 {
            let (n, d, f, c) = (
                rng.random_range(1..5usize),
                rng.random_range(1..5usize),
                rng.random_range(1..5usize),
                rng.random_range(2..5usize),
            );
            let rnd = |rng: &mut rand_chacha::ChaCha8Rng, len: usize| -> Vec<f64> {
                (0..len).map(|_| rng.random_range(-1.5..1.5)).collect()
            };
            let p = MlpParams {
                w1: FeatureMatrix::from_vec(f, d, rnd(&mut rng, f * d)).unwrap(),
                b1: rnd(&mut rng, f),
                w2: FeatureMatrix::from_vec(c, f, rnd(&mut rng, c * f)).unwrap(),
                b2: rnd(&mut rng, c),
            };
            let x = FeatureMatrix::from_vec(n, d, rnd(&mut rng, n * d)).unwrap();
            let (hidden, logits) = mlp_forward(&p, &x).unwrap();
            for i in 0..n {
                let mut h = vec![0.0; f];
                for (a, hv) in h.iter_mut().enumerate() {
                    let mut s = p.b1[a];
                    for b in 0..d {
                        s += p.w1.get(a, b) * x.get(i, b);
                    }
                    *hv = s.max(0.0);
                }
                for (a, &hv) in h.iter().enumerate() {
                    assert!((hidden.get(i, a) - hv).abs() < 1e-12);
                }
                for k in 0..c {
                    let mut s = p.b2[k];
                    for (a, &hv) in h.iter().enumerate() {
                        s += p.w2.get(k, a) * hv;
                    }
                    assert!((logits.get(i, k) - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mlp_rejects_wrong_input_width() {
        let p = MlpParams {
            w1: FeatureMatrix::zeros(3, 2),
            b1: vec![0.0; 3],
            w2: FeatureMatrix::zeros(2, 3),
            b2: vec![0.0; 2],
        };
        assert!(mlp_forward(&p, &FeatureMatrix::zeros(1, 5)).is_err());
    }

    #[test]
    fn gcn_single_node_identity_weights() {
        let g = build_graph(&[], 1).unwrap();
        let a = normalize_adjacency(&g);
        let p = GcnParams {
            layers: vec![identity(3), identity(3)],
        };
        let x = FeatureMatrix::from_rows(&[vec![0.5, 1.0, 2.0]]).unwrap();
        let logits = gcn_forward(&p, &a, &x).unwrap();
        assert_eq!(logits.data(), x.data());
    }

    #[test]
    fn gcn_zero_weights_give_zero_logits() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let a = normalize_adjacency(&g);
        let p = GcnParams {
            layers: vec![FeatureMatrix::zeros(3, 4), FeatureMatrix::zeros(4, 2)],
        };
        let x = FeatureMatrix::zeros(2, 3);
        let logits = gcn_forward(&p, &a, &x).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_matches_dense_composition_oracle() {
        let mut rng = crate::hashing::rng_for(47, "gcn-forward-test");
        let n = 10;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.3 {
                    edges.push((i, j));
                }
            }
        }
        let g = build_graph(&edges, n).unwrap();
        let a = normalize_adjacency(&g);
        let (d, f, c) = (4, 3, 2);
        let rnd = |rng: &mut rand_chacha::ChaCha8Rng, len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let p = GcnParams {
            layers: vec![
                FeatureMatrix::from_vec(d, f, rnd(&mut rng, d * f)).unwrap(),
                FeatureMatrix::from_vec(f, c, rnd(&mut rng, f * c)).unwrap(),
            ],
        };
        let x = FeatureMatrix::from_vec(n, d, rnd(&mut rng, n * d)).unwrap();
        let logits = gcn_forward(&p, &a, &x).unwrap();

        // dense oracle
        let mut da = vec![vec![0.0; n]; n];
        for i in 0..n {
            let (cols, ws) = a.row(i);
            for (&j, &w) in cols.iter().zip(ws.iter()) {
                da[i][j] = w;
            }
        }
        let dense_mul = |m: &Vec<Vec<f64>>, x: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let (r, inner, cdim) = (m.len(), x.len(), x[0].len());
            let mut out = vec![vec![0.0; cdim]; r];
            for i in 0..r {
                for j in 0..cdim {
                    for k in 0..inner {
                        out[i][j] += m[i][k] * x[k][j];
                    }
                }
            }
            out
        };
        let xd: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
        let w1: Vec<Vec<f64>> = (0..d).map(|i| p.layers[0].row(i).to_vec()).collect();
        let w2: Vec<Vec<f64>> = (0..f).map(|i| p.layers[1].row(i).to_vec()).collect();
        let mut h = dense_mul(&dense_mul(&da, &xd), &w1);
        for row in &mut h {
            for v in row.iter_mut() {
                *v = v.max(0.0);
            }
        }
        let out = dense_mul(&dense_mul(&da, &h), &w2);
        for i in 0..n {
            for j in 0..c {
                assert!((logits.get(i, j) - out[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_mask_is_inverted_and_seeded() {
        let mut r1 = crate::hashing::rng_for(3, "dropout");
        let mut r2 = crate::hashing::rng_for(3, "dropout");
        let m1 = sample_dropout_mask(20, 10, 0.4, &mut r1);
        let m2 = sample_dropout_mask(20, 10, 0.4, &mut r2);
        assert_eq!(m1, m2);
        let keep = 1.0 / 0.6;
        assert!(m1
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - keep).abs() < 1e-15));
        let kept = m1.data().iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 80 && kept < 160);
    }
}
