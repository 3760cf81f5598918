mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use dprl::ambiguity::{radius, w1_empirical, ConcentrationConfig};
use dprl::erm::{train_regularized, LossKind, LossSpec, Norm, SolverConfig};
use dprl::experiment::split;
use dprl::gauss_dro::{
    check_sdp_certificate, inner_dual, least_squares_a, objective, summarize_samples, tight_certificate,
    train_gauss_dro_summary, GaussianSummary, LinearModel, SdpCertificate,
};
use dprl::privacy::{calibrate, privatize, Dataset, FeatureBounds, MechanismKind, PrivacyBudget};

use common::*;

/// Regularized objective for scalar `x`, written independently of the library.
fn erm_value(kind: LossKind, x: &[f64], y: &[f64], rho: f64, c: f64, w: f64, b: f64) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let u = w * xi + b;
            match kind {
                LossKind::QuadraticLinear => 0.5 * (u - yi).powi(2),
                LossKind::AbsoluteLinear => (u - yi).abs(),
                LossKind::Logistic => (1.0 + u.exp()).ln() - yi * u,
            }
        })
        .sum();
    let norm = (w * w + b * b).sqrt();
    let reg = match kind {
        LossKind::QuadraticLinear => c * norm * norm,
        _ => c * norm,
    };
    data / n + rho * reg
}

#[test]
fn erm_matches_fine_grid() {
    let mut r = rng(31);
    let rho = 0.1;
    for (kind, c) in [(LossKind::QuadraticLinear, 3.0), (LossKind::AbsoluteLinear, 1.0), (LossKind::Logistic, 4.0)] {
        let x: Vec<f64> = (0..5).map(|_| r.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = match kind {
            LossKind::Logistic => vec![0.0, 1.0, 1.0, 0.0, 1.0],
            _ => x.iter().map(|v| 0.8 * v - 0.2 + 0.3 * r.random_range(-1.0..1.0)).collect(),
        };
        let data = Dataset::new(DMatrix::from_vec(5, 1, x.clone()), DMatrix::from_vec(5, 1, y.clone()), FeatureBounds::unit())
            .unwrap();
        let spec = LossSpec::new(kind, 1.0, 1.0, Norm::L2).unwrap();
        let fit = train_regularized(&data, &spec, rho, &SolverConfig::default()).unwrap();

        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=6000 {
            let w = -3.0 + i as f64 * 1e-3;
            for j in 0..=6000 {
                let b = -3.0 + j as f64 * 1e-3;
                let v = erm_value(kind, &x, &y, rho, c, w, b);
                if v < best.0 {
                    best = (v, w, b);
                }
            }
        }
        let theta = fit.model.column(0);
        let at_fit = erm_value(kind, &x, &y, rho, c, theta[0], theta[1]);
        assert!((at_fit - fit.objective).abs() < 1e-12, "{kind:?}: objective disagrees with oracle");
        assert!(fit.objective <= best.0 + 1e-9, "{kind:?}: solver {} worse than grid {}", fit.objective, best.0);
        // a kinked optimum is only reached to first order in the grid spacing
        let grid_gap = if kind == LossKind::AbsoluteLinear { 2e-3 } else { 1e-5 };
        assert!(best.0 - fit.objective < grid_gap, "{kind:?}: grid {} far above solver {}", best.0, fit.objective);
        assert!((theta[0] - best.1).abs() < 5e-3 && (theta[1] - best.2).abs() < 5e-3, "{kind:?}: {theta} vs grid");
    }
}

#[test]
fn gauss_dro_matches_two_level_grid() {
    let mut r = rng(32);
    for _ in 0..5 {
        let s = random_summary(&mut r, 1, 1);
        let fit = train_gauss_dro_summary(&s, 0.5, &SolverConfig::default()).unwrap();
        let reach = least_squares_a(&s)[(0, 0)].abs() + 1.0;
        let (a_grid, v_grid) = scalar_dro_grid(&s.sigma_hat, 0.5, -reach, reach);
        assert!(fit.objective <= v_grid + 1e-9);
        assert!(v_grid - fit.objective < 1e-3);
        assert!((fit.model.a[(0, 0)] - a_grid).abs() < 1e-2, "{} vs {a_grid}", fit.model.a[(0, 0)]);
    }
}

#[test]
fn inner_dual_matches_explicit_formula() {
    let mut r = rng(33);
    for _ in 0..20 {
        let s = random_summary(&mut r, 1, 1);
        let a = r.random_range(-2.0..2.0);
        let rho = r.random_range(0.05..2.0);
        let (f, point) = inner_dual(&DMatrix::from_element(1, 1, a), &s, rho).unwrap();
        assert!((f - scalar_dual(a, &s.sigma_hat, rho, point.xi)).abs() < 1e-9 * (1.0 + f));
        assert!((f - scalar_dual_grid(a, &s.sigma_hat, rho)).abs() < 1e-6 * (1.0 + f));
    }
}

/// `tr((Σ^{1/2} S Σ^{1/2})^{1/2})` for 2×2 matrices via `√(tr P + 2√det P)`.
fn sqrt_trace_2x2(sigma: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let tr = (sigma * s).trace();
    let det = (sigma.determinant() * s.determinant()).max(0.0);
    (tr + 2.0 * det.sqrt()).max(0.0).sqrt()
}

/// Worst-case `tr(K S)` over zero-mean Gaussians within `W2 ≤ ρ` of `N(0, Σ)`,
/// by a shrinking grid over Cholesky factors of `S`.
fn worst_case_by_search(k: &DMatrix<f64>, sigma: &DMatrix<f64>, rho: f64) -> f64 {
    let reach = sigma.trace().sqrt() + rho;
    let feasible = |s: &DMatrix<f64>| s.trace() + sigma.trace() - 2.0 * sqrt_trace_2x2(sigma, s) <= rho * rho;
    let mut centre = [reach / 2.0, 0.0, reach / 2.0];
    let mut half = [reach / 2.0, reach, reach / 2.0];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..12 {
        let steps = 40;
        let mut best_here = (best, centre);
        for i in 0..=steps {
            for j in 0..=steps {
                for l in 0..=steps {
                    let at = |c: usize, t: usize| centre[c] - half[c] + 2.0 * half[c] * t as f64 / steps as f64;
                    let (l11, l21, l22) = (at(0, i).max(0.0), at(1, j), at(2, l).max(0.0));
                    let lm = DMatrix::from_row_slice(2, 2, &[l11, 0.0, l21, l22]);
                    let s = &lm * lm.transpose();
                    if feasible(&s) {
                        let v = (k * &s).trace();
                        if v > best_here.0 {
                            best_here = (v, [l11, l21, l22]);
                        }
                    }
                }
            }
        }
        best = best_here.0;
        centre = best_here.1;
        for h in &mut half {
            *h *= 0.3;
        }
    }
    best
}

#[test]
fn inner_dual_equals_brute_force_worst_case() {
    let mut r = rng(34);
    for _ in 0..4 {
        let s = random_summary(&mut r, 1, 1);
        let a = r.random_range(-1.5..1.5);
        let rho = 0.5;
        let (f, _) = inner_dual(&DMatrix::from_element(1, 1, a), &s, rho).unwrap();
        let k = DMatrix::from_row_slice(2, 2, &[a * a, -a, -a, 1.0]);
        let brute = worst_case_by_search(&k, &s.sigma_hat, rho);
        assert!(brute <= f + 1e-9, "primal {brute} exceeds dual {f}");
        assert!(f - brute < 1e-2, "dual {f} vs brute force {brute}");
    }
}

#[test]
fn perturbed_certificates_never_beat_the_optimum() {
    let mut r = rng(35);
    for _ in 0..10 {
        let p_x = r.random_range(1..=3);
        let p_y = r.random_range(1..=2);
        let s = random_summary(&mut r, p_x, p_y);
        let rho = r.random_range(0.1..1.5);
        let fit = train_gauss_dro_summary(&s, rho, &SolverConfig::default()).unwrap();
        let (_, point) = inner_dual(&fit.model.a, &s, rho).unwrap();
        let optimum = fit.objective;
        let slack = 1e-9 * (1.0 + optimum.abs());

        let mut candidates: Vec<SdpCertificate> = Vec::new();
        for scale in [1.001, 1.1, 2.0, 10.0] {
            candidates.push(tight_certificate(&fit.model, &s, point.xi * scale).unwrap());
        }
        let tight = tight_certificate(&fit.model, &s, point.xi).unwrap();
        let extra = normal_matrix(&mut r, s.p(), s.p());
        candidates.push(SdpCertificate { z: &tight.z + &extra * extra.transpose() * 0.1, ..tight.clone() });
        candidates.push(SdpCertificate { b: &tight.b + DVector::from_element(p_y, 0.3), ..tight.clone() });
        let a2 = &fit.model.a + normal_matrix(&mut r, p_y, p_x) * 0.2;
        let moved = LinearModel { b: fit.model.b.clone(), a: a2.clone() };
        let (_, p2) = inner_dual(&a2, &s, rho).unwrap();
        candidates.push(tight_certificate(&moved, &s, p2.xi * 1.05).unwrap());

        for cert in candidates {
            let check = check_sdp_certificate(&cert, &s, rho).unwrap();
            assert!(check.feasible, "perturbed certificate should stay feasible: {}", check.min_eigenvalue);
            assert!(check.objective >= optimum - slack, "{} < {optimum}", check.objective);
        }
        let short = SdpCertificate { z: &tight.z * 0.5, ..tight };
        assert!(!check_sdp_certificate(&short, &s, rho).unwrap().feasible);
    }
}

#[test]
fn optimal_bias_beats_random_biases() {
    let mut r = rng(36);
    let s = random_summary(&mut r, 2, 2);
    let fit = train_gauss_dro_summary(&s, 0.4, &SolverConfig::default()).unwrap();
    for _ in 0..100 {
        let b = &fit.model.b + normal_matrix(&mut r, 2, 1).column(0) * 0.5;
        let other = LinearModel { a: fit.model.a.clone(), b };
        assert!(objective(&other, &s, 0.4).unwrap() >= fit.objective);
    }
}

#[test]
fn privatized_sample_stays_inside_radius() {
    // the clean empirical law lies within the mechanism radius of the private one
    let (n, p_x) = (30, 3);
    let budget = PrivacyBudget::new(1.0, 1e-2).unwrap();
    let beta = 0.05;
    let mut inside = 0;
    let trials = 100;
    for t in 0..trials {
        let mut r = rng(1000 + t);
        let data = random_dataset(&mut r, n, p_x, 1);
        let bounds = FeatureBounds::unit();
        let mech = calibrate(MechanismKind::Gaussian, bounds, p_x, budget).unwrap();
        let private = privatize(&data, &mech, t).unwrap();
        let joint = |d: &Dataset| {
            let mut m = DMatrix::zeros(n, p_x + 1);
            m.view_mut((0, 0), (n, p_x)).copy_from(d.features());
            m.view_mut((0, p_x), (n, 1)).copy_from(d.outputs());
            m
        };
        let (clean, noisy) = (joint(&data), joint(&private));
        let w1 = w1_empirical(&clean, &noisy).unwrap();
        let identity_cost = (0..n).map(|i| (clean.row(i) - noisy.row(i)).norm()).sum::<f64>() / n as f64;
        assert!(w1 <= identity_cost + 1e-12);
        let rho = radius(MechanismKind::Gaussian, budget, p_x + 1, mech.sensitivity, beta, n, &ConcentrationConfig::default())
            .unwrap()
            .rho;
        if w1 <= rho {
            inside += 1;
        }
    }
    assert!(inside as f64 >= (1.0 - beta) * trials as f64, "{inside} of {trials}");
}

#[test]
fn different_seeds_give_different_splits() {
    let n = 100;
    let data = Dataset::new(
        DMatrix::from_fn(n, 1, |i, _| i as f64 / n as f64),
        DMatrix::from_fn(n, 1, |i, _| i as f64),
        FeatureBounds::unit(),
    )
    .unwrap();
    let mut collisions = 0;
    for s in 0..100u64 {
        let (a, _) = split(&data, 50, s).unwrap();
        let (b, _) = split(&data, 50, s + 1000).unwrap();
        if a.outputs() == b.outputs() {
            collisions += 1;
        }
    }
    assert_eq!(collisions, 0);
}

#[test]
fn summary_converges_to_generating_law() {
    let mut r = rng(37);
    let sigma = random_covariance(&mut r, 3);
    let mu = DVector::from_vec(vec![0.5, -1.0, 2.0]);
    let chol = sigma.clone().cholesky().unwrap().l();
    let n = 200_000;
    let z = DMatrix::from_fn(n, 3, |_, _| r.sample::<f64, _>(StandardNormal));
    let samples = &z * chol.transpose() + DMatrix::from_fn(n, 3, |_, j| mu[j]);
    let s: GaussianSummary =
        summarize_samples(&samples.columns(0, 2).into_owned(), &samples.columns(2, 1).into_owned()).unwrap();
    assert!((&s.mu_hat - &mu).amax() < 0.02);
    assert!((&s.sigma_hat - &sigma).amax() < 0.03 * sigma.amax());
}
