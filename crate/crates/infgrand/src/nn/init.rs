//! Glorot-uniform parameter initialization from named seeded streams.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::rng_for;
use crate::matrix::FeatureMatrix;
use crate::nn::params::{GcnParams, MlpParams};

/// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
fn glorot(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> FeatureMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut m = FeatureMatrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.random_range(-limit..limit);
    }
    m
}

/// Student parameters: Glorot weights, zero biases.
pub fn init_mlp(
    input_dim: usize,
    hidden_dim: usize,
    num_classes: usize,
    seed: u64,
) -> Result<MlpParams> {
    if input_dim == 0 || hidden_dim == 0 || num_classes == 0 {
        return Err(Error::input("all MLP dimensions must be positive"));
    }
    let mut rng = rng_for(seed, "mlp-init");
    Ok(MlpParams {
        w1: glorot(hidden_dim, input_dim, input_dim, hidden_dim, &mut rng),
        b1: vec![0.0; hidden_dim],
        w2: glorot(num_classes, hidden_dim, hidden_dim, num_classes, &mut rng),
        b2: vec![0.0; num_classes],
    })
}

/// Teacher parameters for the layer widths `dims` (input, hidden..., out).
pub fn init_gcn(dims: &[usize], seed: u64) -> Result<GcnParams> {
    if dims.len() < 2 {
        return Err(Error::input("a GCN needs at least input and output widths"));
    }
    if dims.contains(&0) {
        return Err(Error::input("all GCN dimensions must be positive"));
    }
    let mut rng = rng_for(seed, "gcn-init");
    let layers = dims
        .windows(2)
        .map(|w| glorot(w[0], w[1], w[0], w[1], &mut rng))
        .collect();
    Ok(GcnParams { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_parameters() {
        let a = init_mlp(5, 4, 3, 42).unwrap();
        let b = init_mlp(5, 4, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = init_mlp(5, 4, 3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn weights_respect_the_glorot_bound() {
        let p = init_mlp(8, 6, 4, 7).unwrap();
        let lim1 = (6.0 / (8 + 6) as f64).sqrt();
        assert!(p.w1.data().iter().all(|v| v.abs() <= lim1));
        let lim2 = (6.0 / (6 + 4) as f64).sqrt();
        assert!(p.w2.data().iter().all(|v| v.abs() <= lim2));
        assert!(p.b1.iter().all(|&v| v == 0.0));
        assert!(p.b2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empirical_mean_is_near_zero() {
        // 10^4 samples from U(-a, a): sigma_mean = a / sqrt(3 n)
        let p = init_mlp(100, 100, 2, 11).unwrap();
        let n = p.w1.data().len() as f64;
        let a = (6.0 / 200.0f64).sqrt();
        let mean: f64 = p.w1.data().iter().sum::<f64>() / n;
        let three_sigma = 3.0 * a / (3.0 * n).sqrt();
        assert!(
            mean.abs() < three_sigma,
            "mean {} vs bound {}",
            mean,
            three_sigma
        );
    }

    #[test]
    fn gcn_init_shapes() {
        let p = init_gcn(&[5, 4, 3], 1).unwrap();
        assert_eq!(p.layers.len(), 2);
        assert_eq!((p.layers[0].rows(), p.layers[0].cols()), (5, 4));
        assert_eq!((p.layers[1].rows(), p.layers[1].cols()), (4, 3));
        assert!(init_gcn(&[5], 1).is_err());
        assert!(init_gcn(&[5, 0, 3], 1).is_err());
    }
}
