//! Numerically stable softmax machinery shared by losses and gradients.

use crate::matrix::FeatureMatrix;

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows(logits: &FeatureMatrix) -> FeatureMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

/// Row-wise log-softmax, consistent with [`softmax_rows`] via exp.
pub fn log_softmax_rows(logits: &FeatureMatrix) -> FeatureMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        log_softmax_in_place(out.row_mut(i));
    }
    out
}

pub fn log_softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for &v in row.iter() {
        z += (v - m).exp();
    }
    let lz = z.ln();
    for v in row.iter_mut() {
        *v = *v - m - lz;
    }
}

/// Jacobian of the softmax at a probability vector: diag(p) - p p^T.
/// Symmetric; every row sums to zero.
pub fn softmax_jacobian(prob_row: &[f64]) -> FeatureMatrix {
    let c = prob_row.len();
    let mut out = FeatureMatrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let v = if i == j {
                prob_row[i] - prob_row[i] * prob_row[j]
            } else {
                -prob_row[i] * prob_row[j]
            };
            out.set(i, j, v);
        }
    }
    out
}

/// `(diag(p) - p p^T) v` without materializing the Jacobian.
pub fn jacobian_apply(p: &[f64], v: &[f64], out: &mut [f64]) {
    let pv: f64 = p.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    for ((o, &pi), &vi) in out.iter_mut().zip(p.iter()).zip(v.iter()) {
        *o = pi * vi - pi * pv;
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let x = FeatureMatrix::from_rows(&[vec![2.0; 4]]).unwrap();
        let p = softmax_rows(&x);
        for &v in p.row(0) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let x = FeatureMatrix::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let p = softmax_rows(&x);
        assert!(p.is_finite());
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(p.get(0, 1).abs() < 1e-12);
        let lp = log_softmax_rows(&x);
        assert!(lp.is_finite());
        assert_eq!(lp.get(0, 0), 0.0);
        assert_eq!(lp.get(0, 1), -1000.0);
    }

    #[test]
    fn rows_sum_to_one_and_match_direct_formula() {
        use rand::Rng;
        let mut rng = crate::hashing::rng_for(41, "softmax-test");
        for _ in 0..50 {
            let c = rng.random_range(2..6usize);
            let row: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = FeatureMatrix::from_rows(std::slice::from_ref(&row)).unwrap();
            let p = softmax_rows(&x);
            let sum: f64 = p.row(0).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            // direct formula without max-subtraction (safe for small logits)
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            for (k, &v) in p.row(0).iter().enumerate() {
                assert!((v - row[k].exp() / z).abs() < 1e-12);
            }
            let lp = log_softmax_rows(&x);
            for (k, &v) in lp.row(0).iter().enumerate() {
                assert!((v.exp() - p.get(0, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_of_one_hot_is_zero() {
        let j = softmax_jacobian(&[1.0, 0.0, 0.0]);
        assert!(j.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_uniform_two_class() {
        let j = softmax_jacobian(&[0.5, 0.5]);
        assert_eq!(j.data(), &[0.25, -0.25, -0.25, 0.25]);
    }

    #[test]
    fn jacobian_rows_sum_to_zero_and_symmetric() {
        use rand::Rng;
        let mut rng = crate::hashing::rng_for(43, "jacobian-test");
        let mut row: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = row.iter().sum();
        for v in &mut row {
            *v /= s;
        }
        let j = softmax_jacobian(&row);
        for i in 0..5 {
            let sum: f64 = (0..5).map(|k| j.get(i, k)).sum();
            assert!(sum.abs() < 1e-12);
            for k in 0..5 {
                assert!((j.get(i, k) - j.get(k, i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_of_softmax() {
        let logits = vec![0.3, -0.7, 1.2];
        let x = FeatureMatrix::from_rows(std::slice::from_ref(&logits)).unwrap();
        let p = softmax_rows(&x);
        let j = softmax_jacobian(p.row(0));
        let h = 1e-6;
        for k in 0..3 {
            let mut plus = logits.clone();
            plus[k] += h;
            let mut minus = logits.clone();
            minus[k] -= h;
            softmax_in_place(&mut plus);
            softmax_in_place(&mut minus);
            for i in 0..3 {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                assert!((j.get(i, k) - fd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn jacobian_apply_matches_materialized_jacobian() {
        let p = [0.2, 0.3, 0.5];
        let v = [1.0, -2.0, 0.5];
        let j = softmax_jacobian(&p);
        let mut out = [0.0; 3];
        jacobian_apply(&p, &v, &mut out);
        for i in 0..3 {
            let mut expect = 0.0;
            for k in 0..3 {
                expect += j.get(i, k) * v[k];
            }
            assert!((out[i] - expect).abs() < 1e-15);
        }
    }
}
