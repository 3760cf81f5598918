//! Wasserstein ambiguity sets around the privatized empirical distribution.
//!
//! The radius has two parts: a finite-sample concentration term `ζ(β)` and a
//! mechanism term bounding the transport cost of the privacy noise,
//! `√(E‖w‖²)`. With `big_data` set the concentration term is taken as zero.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{psd_eigen, sqrtm_psd};
use crate::privacy::{gaussian_factor, MechanismKind, PrivacyBudget};
use crate::{Error, Result};

/// Constants of the light-tailed concentration bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationConfig {
    pub c1: f64,
    pub c2: f64,
    /// Light-tail exponent `a > 1`.
    pub a: f64,
    /// Treat the sample as large enough that `ζ ≈ 0`.
    pub big_data: bool,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self { c1: 1.0, c2: 1.0, a: 2.0, big_data: true }
    }
}

impl ConcentrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::Config(format!("c1, c2 must be positive, got {}, {}", self.c1, self.c2)));
        }
        if !(self.a > 1.0) {
            return Err(Error::Config(format!("light-tail exponent must exceed 1, got {}", self.a)));
        }
        Ok(())
    }
}

/// A Wasserstein radius split into its concentration and privacy parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub rho: f64,
    pub zeta_part: f64,
    pub privacy_part: f64,
}

/// Concentration radius `ζ(γ)` for `n` samples of a `p`-dimensional light-tailed law.
pub fn zeta(gamma: f64, n: usize, p: usize, config: &ConcentrationConfig) -> Result<f64> {
    config.validate()?;
    if config.big_data {
        return Ok(0.0);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {gamma}")));
    }
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if p == 2 {
        return Err(Error::UnsupportedDimension(p));
    }
    if p == 0 {
        return Err(Error::Shape("joint dimension must be positive".into()));
    }
    let log_term = (config.c1 / gamma).ln();
    if log_term <= 0.0 {
        // c1 ≤ γ: the tail bound holds trivially at any radius.
        return Ok(0.0);
    }
    let base = log_term / (config.c2 * n as f64);
    let exponent = if n as f64 >= log_term / config.c2 {
        1.0 / (p.max(2) as f64)
    } else {
        1.0 / config.a
    };
    Ok(base.powf(exponent))
}

/// Mechanism term `√(2p)·Δ/ε` (Laplace) or `√(2p ln(1.25/δ))·Δ/ε` (Gaussian).
pub fn privacy_radius(kind: MechanismKind, budget: PrivacyBudget, p: usize, sensitivity: f64) -> Result<f64> {
    if !(sensitivity > 0.0) {
        return Err(Error::Domain(format!("sensitivity must be positive, got {sensitivity}")));
    }
    let base = (2.0 * p as f64).sqrt() * sensitivity / budget.epsilon();
    match kind {
        MechanismKind::Laplace => Ok(base),
        MechanismKind::Gaussian => {
            // √(2 ln(1.25/δ))·√p = √(2p ln(1.25/δ))
            Ok(gaussian_factor(budget.delta())? * (p as f64).sqrt() * sensitivity / budget.epsilon())
        }
    }
}

/// Radius that contains the clean distribution with probability at least `1 − β`.
pub fn radius(
    kind: MechanismKind,
    budget: PrivacyBudget,
    p: usize,
    sensitivity: f64,
    beta: f64,
    n: usize,
    config: &ConcentrationConfig,
) -> Result<Radius> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    let zeta_part = zeta(beta, n, p, config)?;
    let privacy_part = privacy_radius(kind, budget, p, sensitivity)?;
    Ok(Radius { rho: zeta_part + privacy_part, zeta_part, privacy_part })
}

/// Exact order-1 Wasserstein distance between two uniform empirical measures
/// of equal size, with Euclidean ground cost.
///
/// Points are the rows of `p` and `q`.
pub fn w1_empirical(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    if p.nrows() != q.nrows() || p.ncols() != q.ncols() {
        return Err(Error::Shape(format!(
            "point sets {}x{} and {}x{}",
            p.nrows(),
            p.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let m = p.nrows();
    if m == 0 {
        return Err(Error::Shape("empty point set".into()));
    }
    let cost = DMatrix::from_fn(m, m, |i, j| (p.row(i) - q.row(j)).norm());
    let assignment = min_cost_assignment(&cost);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok(total / m as f64)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, `O(m³)`). Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let m = cost.nrows();
    assert_eq!(m, cost.ncols(), "assignment needs a square cost matrix");
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; m];
    for j in 1..=m {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

/// Order-2 Wasserstein distance between `N(mu1, sigma1)` and `N(mu2, sigma2)`:
/// `√(‖μ1−μ2‖² + tr(Σ1 + Σ2 − 2(Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2}))`.
pub fn w2_gaussian(
    mu1: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    sigma2: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || sigma1.shape() != (d, d) || sigma2.shape() != (d, d) {
        return Err(Error::Shape("mean/covariance dimensions disagree".into()));
    }
    let root1 = sqrtm_psd(sigma1)?;
    psd_eigen(sigma2)?;
    let cross = sqrtm_psd(&(&root1 * sigma2 * &root1))?;
    let bures = sigma1.trace() + sigma2.trace() - 2.0 * cross.trace();
    let sq = (mu1 - mu2).norm_squared() + bures.max(0.0);
    Ok(sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_examples() {
        let big = ConcentrationConfig::default();
        assert_eq!(zeta(0.3, 5, 2, &big).unwrap(), 0.0);
        assert_eq!(zeta(0.3, 5, 7, &big).unwrap(), 0.0);

        let gamma = 0.05;
        let cfg = ConcentrationConfig { c1: std::f64::consts::E * gamma, c2: 1.0, a: 2.0, big_data: false };
        assert!((zeta(gamma, 16, 4, &cfg).unwrap() - 0.5).abs() < 1e-12);

        let cfg = ConcentrationConfig { c1: std::f64::consts::E.powi(2) * gamma, c2: 1.0, a: 2.0, big_data: false };
        assert!((zeta(gamma, 1, 3, &cfg).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zeta_rejects_p2_and_bad_gamma() {
        let cfg = ConcentrationConfig { big_data: false, ..Default::default() };
        assert!(matches!(zeta(0.1, 10, 2, &cfg), Err(Error::UnsupportedDimension(2))));
        assert!(zeta(0.0, 10, 3, &cfg).is_err());
        assert!(zeta(1.0, 10, 3, &cfg).is_err());
    }

    #[test]
    fn zeta_monotone() {
        let cfg = ConcentrationConfig { c1: 5.0, c2: 0.5, a: 1.5, big_data: false };
        let mut prev = f64::INFINITY;
        for n in 1..200 {
            let z = zeta(0.05, n, 3, &cfg).unwrap();
            assert!(z <= prev + 1e-15);
            prev = z;
        }
        let mut prev = 0.0;
        for g in [0.5, 0.2, 0.1, 0.01, 0.001] {
            let z = zeta(g, 20, 5, &cfg).unwrap();
            assert!(z >= prev);
            prev = z;
        }
    }

    #[test]
    fn radius_examples() {
        let big = ConcentrationConfig::default();
        let g = radius(MechanismKind::Gaussian, PrivacyBudget::new(10.0, 1e-2).unwrap(), 3, 2.0, 0.05, 100, &big)
            .unwrap();
        let expected = (2.0 * 125f64.ln() * 3.0).sqrt() * 2.0 / 10.0;
        assert!((g.rho - expected).abs() < 1e-12);
        assert!((g.rho - 1.07647).abs() < 1e-4);
        assert_eq!(g.rho, g.zeta_part + g.privacy_part);

        let l = radius(MechanismKind::Laplace, PrivacyBudget::pure(2.0).unwrap(), 2, 1.0, 0.05, 100, &big).unwrap();
        assert!((l.rho - 1.0).abs() < 1e-15);

        let b = PrivacyBudget::new(3.0, 1e-2).unwrap();
        let rg = radius(MechanismKind::Gaussian, b, 4, 1.5, 0.1, 10, &big).unwrap().rho;
        let rl = radius(MechanismKind::Laplace, b, 4, 1.5, 0.1, 10, &big).unwrap().rho;
        assert!((rg / rl - 125f64.ln().sqrt()).abs() < 1e-12);
        assert!((rg / rl / 2.19751 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn radius_monotone() {
        let big = ConcentrationConfig { big_data: false, ..Default::default() };
        let r = |eps: f64, p: usize, d: f64| {
            radius(MechanismKind::Gaussian, PrivacyBudget::new(eps, 0.01).unwrap(), p, d, 0.05, 50, &big)
                .unwrap()
                .rho
        };
        assert!(r(1.0, 3, 1.0) > r(2.0, 3, 1.0));
        assert!(r(1.0, 3, 1.0) <= r(1.0, 4, 1.0));
        assert!(r(1.0, 3, 1.0) <= r(1.0, 3, 2.0));
    }

    #[test]
    fn w1_small_cases() {
        let p = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 2.0, -1.0, 0.5]);
        assert_eq!(w1_empirical(&p, &p).unwrap(), 0.0);
        let a = DMatrix::from_element(1, 1, 0.0);
        let b = DMatrix::from_element(1, 1, 3.0);
        assert_eq!(w1_empirical(&a, &b).unwrap(), 3.0);
        assert!(w1_empirical(&p, &a).is_err());
    }

    #[test]
    fn w2_closed_forms() {
        let z = DVector::zeros(3);
        let i3 = DMatrix::identity(3, 3);
        assert!(w2_gaussian(&z, &i3, &z, &i3).unwrap().abs() < 1e-12);
        let d = w2_gaussian(&z, &i3, &z, &(i3.clone() * 4.0)).unwrap();
        assert!((d - 3f64.sqrt()).abs() < 1e-12);

        let z2 = DVector::zeros(2);
        let s1 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let s2 = DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 1.0]));
        assert!((w2_gaussian(&z2, &s1, &z2, &s2).unwrap() - 5f64.sqrt()).abs() < 1e-12);

        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(w2_gaussian(&z2, &s1, &z2, &bad), Err(Error::Domain(_))));
    }
}
