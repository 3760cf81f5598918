#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dprl::gauss_dro::GaussianSummary;
use dprl::privacy::{Dataset, FeatureBounds};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random positive-definite `p × p` covariance, well away from singular.
pub fn random_covariance(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let l = normal_matrix(rng, p, p + 2);
    let mut s = &l * l.transpose() / (p + 2) as f64;
    for k in 0..p {
        s[(k, k)] += 0.1;
    }
    s
}

pub fn random_summary(rng: &mut ChaCha8Rng, p_x: usize, p_y: usize) -> GaussianSummary {
    let p = p_x + p_y;
    let mu = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    GaussianSummary::new(mu, random_covariance(rng, p), p_x, p_y).unwrap()
}

/// `n` clean records in the unit box with a noisy linear response.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p_x: usize, p_y: usize) -> Dataset {
    let x = DMatrix::from_fn(n, p_x, |_, _| rng.random_range(0.0..1.0));
    let w = normal_matrix(rng, p_x, p_y);
    let noise = normal_matrix(rng, n, p_y) * 0.3;
    let y = &x * w + noise;
    Dataset::new(x, y, FeatureBounds::unit()).unwrap()
}

/// Closed-form least squares on `[X 1]`, one column per output.
pub fn least_squares_theta(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut z = DMatrix::from_element(n, x.ncols() + 1, 1.0);
    z.view_mut((0, 0), (n, x.ncols())).copy_from(x);
    let gram = z.transpose() * &z;
    gram.cholesky().unwrap().solve(&(z.transpose() * y))
}

/// Exhaustive W1 between equal-size uniform point clouds (rows are points).
pub fn w1_by_permutations(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let m = p.nrows();
    let cost = DMatrix::from_fn(m, m, |i, j| (p.row(i) - q.row(j)).norm());
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &cost, &mut best);
    best / m as f64
}

fn permute(perm: &mut Vec<usize>, k: usize, cost: &DMatrix<f64>, best: &mut f64) {
    if k == perm.len() {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        *best = best.min(total);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, cost, best);
        perm.swap(k, i);
    }
}

/// Inner dual for scalar `x`, `y` written out with an explicit 2×2 inverse:
/// `ξ(ρ² − tr Σ) + ξ² tr((ξI − MᵀM)⁻¹ Σ)` with `M = [a, −1]`.
pub fn scalar_dual(a: f64, sigma: &DMatrix<f64>, rho: f64, xi: f64) -> f64 {
    let (k11, k12, k22) = (a * a, -a, 1.0);
    let (m11, m12, m22) = (xi - k11, -k12, xi - k22);
    let det = m11 * m22 - m12 * m12;
    let (i11, i12, i22) = (m22 / det, -m12 / det, m11 / det);
    let tr = i11 * sigma[(0, 0)] + 2.0 * i12 * sigma[(0, 1)] + i22 * sigma[(1, 1)];
    xi * (rho * rho - sigma[(0, 0)] - sigma[(1, 1)]) + xi * xi * tr
}

/// `min_ξ` of [`scalar_dual`] by a coarse log grid above the floor `1 + a²`,
/// then a fine linear grid around the coarse winner.
pub fn scalar_dual_grid(a: f64, sigma: &DMatrix<f64>, rho: f64) -> f64 {
    let floor = 1.0 + a * a;
    let coarse: Vec<f64> = (0..=600).map(|k| floor * 1e-9 * 10f64.powf(k as f64 * 15.0 / 600.0)).collect();
    let (mut best_k, mut best) = (0, f64::INFINITY);
    for (k, &t) in coarse.iter().enumerate() {
        let v = scalar_dual(a, sigma, rho, floor + t);
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let lo = coarse[best_k.saturating_sub(1)];
    let hi = coarse[(best_k + 1).min(coarse.len() - 1)];
    for k in 0..=400 {
        let t = lo + (hi - lo) * k as f64 / 400.0;
        best = best.min(scalar_dual(a, sigma, rho, floor + t));
    }
    best
}

/// Two-level grid search for `min_a min_ξ` with scalar input and output.
pub fn scalar_dro_grid(sigma: &DMatrix<f64>, rho: f64, a_lo: f64, a_hi: f64) -> (f64, f64) {
    let search = |lo: f64, hi: f64, count: usize| {
        let mut best = (f64::NAN, f64::INFINITY);
        for k in 0..=count {
            let a = lo + (hi - lo) * k as f64 / count as f64;
            let v = scalar_dual_grid(a, sigma, rho);
            if v < best.1 {
                best = (a, v);
            }
        }
        best
    };
    let step = (a_hi - a_lo) / 200.0;
    let (a0, _) = search(a_lo, a_hi, 200);
    search(a0 - step, a0 + step, 200)
}

/// Relative error `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}
