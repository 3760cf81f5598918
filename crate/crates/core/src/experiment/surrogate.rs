//! Synthetic stand-in for a census-style binary-outcome table.
//!
//! Features are equicorrelated Gaussians (correlation 0.3); the output is the
//! indicator that a noisy linear score exceeds its 76th percentile, so about
//! a quarter of the labels are 1. Every column is min-max scaled to `[0, 1]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::privacy::{Dataset, FeatureBounds};
use crate::{Error, Result};

const CORRELATION: f64 = 0.3;
const POSITIVE_RATE: f64 = 0.24;

pub fn adult_like_surrogate(n: usize, p_x: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || p_x == 0 {
        return Err(Error::Config(format!("surrogate needs n ≥ 2 and p_x ≥ 1, got {n}, {p_x}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = DVector::from_fn(p_x, |_, _| rng.sample::<f64, _>(StandardNormal));
    let shared = CORRELATION.sqrt();
    let own = (1.0 - CORRELATION).sqrt();
    let mut x = DMatrix::zeros(n, p_x);
    let mut score = vec![0.0; n];
    for i in 0..n {
        let common: f64 = rng.sample(StandardNormal);
        for j in 0..p_x {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = shared * common + own * z;
        }
        let noise: f64 = rng.sample(StandardNormal);
        score[i] = x.row(i).transpose().dot(&weights) + noise * weights.norm();
    }
    let mut sorted = score.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[((1.0 - POSITIVE_RATE) * n as f64) as usize % n];
    let y = DMatrix::from_fn(n, 1, |i, _| if score[i] > cut { 1.0 } else { 0.0 });

    for j in 0..p_x {
        let (lo, hi) = (x.column(j).min(), x.column(j).max());
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - lo) / (hi - lo);
        }
    }
    Dataset::new(x, y, FeatureBounds::unit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_range_and_balance() {
        let d = adult_like_surrogate(2000, 10, 3).unwrap();
        assert_eq!((d.n(), d.p_x(), d.p_y()), (2000, 10, 1));
        assert!(d.features().iter().all(|v| (0.0..=1.0).contains(v)));
        let rate = d.outputs().mean();
        assert!((rate - POSITIVE_RATE).abs() < 0.01, "{rate}");
        let again = adult_like_surrogate(2000, 10, 3).unwrap();
        assert_eq!(d.features(), again.features());
    }
}
