//! Exact distributionally-robust linear regression for Gaussian data.
//!
//! The data are summarized by the sample mean `μ̂` and unbiased covariance `Σ̂`
//! of the stacked vectors `[x̃; ỹ]`. For the model `Ax + B` and squared loss,
//! the worst case over Gaussians with mean `μ̂` inside the W2 ball of radius
//! `ρ` around `N(μ̂, Σ̂)` is
//!
//! ```text
//! ‖Mμ̂ + B‖² + f(A),   M = [A  −I],
//! f(A) = inf_{ξ > λmax(MᵀM)}  ξ(ρ² − tr Σ̂) + ξ² tr((ξI − MᵀM)⁻¹ Σ̂).
//! ```
//!
//! The gap `λ(A) = f(A) − tr(MΣ̂Mᵀ)` is the optimal regularizer. The inner
//! problem is a convex scalar problem; in the eigenbasis `MᵀM = V diag(k) Vᵀ`
//! with `s = diag(VᵀΣ̂V)` it reads `ρ²ξ + Σ_j s_j k_j ξ / (ξ − k_j)`, which is
//! what [`inner_dual`] minimizes. The outer problem over `A` is solved by
//! preconditioned gradient descent using the envelope gradient, with `B`
//! eliminated in closed form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::erm::{Fit, SolverConfig, StepRule, ThetaModel};
use crate::linalg::{asymmetry, min_eigenvalue, psd_eigen, sqrtm_psd, symmetrize};
use crate::privacy::Dataset;
use crate::{Error, Result};

/// Sample mean and unbiased covariance of the joint `(x, y)` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mu_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub p_x: usize,
    pub p_y: usize,
}

impl GaussianSummary {
    /// Validates symmetry (to `1e-12` relative) and positive semidefiniteness,
    /// clamping round-off negative eigenvalues.
    pub fn new(mu_hat: DVector<f64>, sigma_hat: DMatrix<f64>, p_x: usize, p_y: usize) -> Result<Self> {
        let p = p_x + p_y;
        if p_x == 0 || p_y == 0 || mu_hat.len() != p || sigma_hat.shape() != (p, p) {
            return Err(Error::Shape(format!(
                "summary for p_x={p_x}, p_y={p_y} needs a {p}-vector and {p}x{p} matrix"
            )));
        }
        if mu_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite mean".into()));
        }
        if asymmetry(&sigma_hat) > 1e-12 * sigma_hat.amax().max(1.0) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let eig = psd_eigen(&sigma_hat)?;
        let sigma_hat = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
        Ok(Self { mu_hat, sigma_hat: symmetrize(&sigma_hat), p_x, p_y })
    }

    pub fn p(&self) -> usize {
        self.p_x + self.p_y
    }

    pub fn mu_x(&self) -> DVector<f64> {
        self.mu_hat.rows(0, self.p_x).into_owned()
    }

    pub fn mu_y(&self) -> DVector<f64> {
        self.mu_hat.rows(self.p_x, self.p_y).into_owned()
    }

    fn sigma_xx(&self) -> DMatrix<f64> {
        self.sigma_hat.view((0, 0), (self.p_x, self.p_x)).into_owned()
    }

    fn sigma_yx(&self) -> DMatrix<f64> {
        self.sigma_hat.view((self.p_x, 0), (self.p_y, self.p_x)).into_owned()
    }
}

/// Summarize a (typically privatized) dataset.
pub fn summarize(data: &Dataset) -> Result<GaussianSummary> {
    summarize_samples(data.features(), data.outputs())
}

/// Mean and `1/(n−1)` covariance of the rows of `[features outputs]`.
pub fn summarize_samples(features: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<GaussianSummary> {
    let n = features.nrows();
    if outputs.nrows() != n {
        return Err(Error::Shape("feature and output row counts differ".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let (p_x, p_y) = (features.ncols(), outputs.ncols());
    let mut joint = DMatrix::zeros(n, p_x + p_y);
    joint.view_mut((0, 0), (n, p_x)).copy_from(features);
    joint.view_mut((0, p_x), (n, p_y)).copy_from(outputs);
    let mu = joint.row_mean().transpose();
    let mut centered = joint;
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n - 1) as f64;
    GaussianSummary::new(mu, symmetrize(&cov), p_x, p_y)
}

/// `Ax + B` with `A: p_y × p_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearModel {
    /// The same predictor as stacked `θ = [Aᵀ; Bᵀ]`.
    pub fn to_theta(&self) -> ThetaModel {
        let (p_y, p_x) = self.a.shape();
        let mut theta = DMatrix::zeros(p_x + 1, p_y);
        theta.view_mut((0, 0), (p_x, p_y)).copy_from(&self.a.transpose());
        theta.row_mut(p_x).copy_from(&self.b.transpose());
        ThetaModel { theta }
    }
}

/// `M = [A  −I]`.
pub fn residual_map(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (p_y, p_x) = a.shape();
    let mut m = DMatrix::zeros(p_y, p_x + p_y);
    m.view_mut((0, 0), (p_y, p_x)).copy_from(a);
    for k in 0..p_y {
        m[(k, p_x + k)] = -1.0;
    }
    m
}

fn check_a(a: &DMatrix<f64>, summary: &GaussianSummary) -> Result<()> {
    if a.shape() != (summary.p_y, summary.p_x) {
        return Err(Error::Shape(format!(
            "A is {}x{}, expected {}x{}",
            a.nrows(),
            a.ncols(),
            summary.p_y,
            summary.p_x
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("A has non-finite entries".into()));
    }
    Ok(())
}

/// A dual variable together with the strict feasibility floor `λmax(MᵀM)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPoint {
    /// `+∞` when `ρ = 0` (the infimum is only approached).
    pub xi: f64,
    pub feasible_floor: f64,
}

/// The scalar dual function for fixed `A`, in the eigenbasis of `MᵀM`.
struct ScalarDual {
    rho_sq: f64,
    floor: f64,
    /// `floor − k_j ≥ 0`, kept separate to avoid cancellation near the floor.
    gaps: Vec<f64>,
    k: Vec<f64>,
    s: Vec<f64>,
}

impl ScalarDual {
    fn new(a: &DMatrix<f64>, summary: &GaussianSummary, rho: f64) -> Self {
        let m = residual_map(a);
        let eig = SymmetricEigen::new(m.tr_mul(&m));
        let rotated = eig.eigenvectors.transpose() * &summary.sigma_hat * &eig.eigenvectors;
        let k: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        // MMᵀ = AAᵀ + I, so the floor is 1 + σmax(A)² ≥ 1.
        let floor = k.iter().cloned().fold(1.0, f64::max);
        let gaps = k.iter().map(|kj| floor - kj).collect();
        let s = (0..k.len()).map(|j| rotated[(j, j)].max(0.0)).collect();
        Self { rho_sq: rho * rho, floor, gaps, k, s }
    }

    /// `g(floor + t)`.
    fn value(&self, t: f64) -> f64 {
        let xi = self.floor + t;
        let mut v = self.rho_sq * xi;
        for j in 0..self.k.len() {
            if self.s[j] > 0.0 && self.k[j] > 0.0 {
                v += self.s[j] * self.k[j] * xi / (self.gaps[j] + t);
            }
        }
        v
    }

    /// `Σ s_j k_j² / (ξ − k_j)²`; the derivative is `ρ²` minus this.
    fn pull(&self, t: f64) -> f64 {
        let mut v = 0.0;
        for j in 0..self.k.len() {
            if self.s[j] > 0.0 && self.k[j] > 0.0 {
                let d = self.gaps[j] + t;
                v += self.s[j] * self.k[j] * self.k[j] / (d * d);
            }
        }
        v
    }

    fn nominal(&self) -> f64 {
        self.k.iter().zip(&self.s).map(|(k, s)| k * s).sum()
    }

    /// Offset `t* = ξ* − floor` of the minimizer.
    fn argmin(&self) -> f64 {
        let t_lo = self.floor * 1e-8;
        if self.pull(t_lo) <= self.rho_sq {
            return t_lo;
        }
        // pull(t) ≤ Σ s_j k_j² / t², so this upper end has a positive derivative.
        let weight: f64 = (0..self.k.len()).map(|j| self.s[j] * self.k[j] * self.k[j]).sum();
        let mut hi = (weight.sqrt() / self.rho_sq.sqrt()).max(t_lo * 2.0);
        while self.pull(hi) > self.rho_sq {
            hi *= 2.0;
        }
        let mut lo = t_lo;
        // geometric bisection: t* can sit many decades from the floor
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.pull(mid) > self.rho_sq {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `f(A)` and its minimizing `ξ*`.
///
/// For `ρ = 0` the infimum is the nominal risk `tr(MΣ̂Mᵀ)`, approached as
/// `ξ → ∞`, and `xi` is returned as infinity.
pub fn inner_dual(a: &DMatrix<f64>, summary: &GaussianSummary, rho: f64) -> Result<(f64, DualPoint)> {
    check_a(a, summary)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("rho must be nonnegative, got {rho}")));
    }
    let dual = ScalarDual::new(a, summary, rho);
    if rho == 0.0 {
        return Ok((dual.nominal(), DualPoint { xi: f64::INFINITY, feasible_floor: dual.floor }));
    }
    let t = dual.argmin();
    Ok((dual.value(t), DualPoint { xi: dual.floor + t, feasible_floor: dual.floor }))
}

/// The dual objective evaluated at an arbitrary feasible `ξ`, straight from
/// its matrix form.
pub fn dual_objective_at(a: &DMatrix<f64>, summary: &GaussianSummary, rho: f64, xi: f64) -> Result<f64> {
    check_a(a, summary)?;
    let m = residual_map(a);
    let p = summary.p();
    let shifted = DMatrix::identity(p, p) * xi - m.tr_mul(&m);
    let inv = shifted
        .cholesky()
        .ok_or_else(|| Error::Domain(format!("xi = {xi} is not above the feasibility floor")))?
        .inverse();
    Ok(xi * (rho * rho - summary.sigma_hat.trace()) + xi * xi * (inv * &summary.sigma_hat).trace())
}

/// Nominal residual risk `tr(MΣ̂Mᵀ)`.
pub fn residual_trace(a: &DMatrix<f64>, summary: &GaussianSummary) -> f64 {
    let m = residual_map(a);
    (&m * &summary.sigma_hat * m.transpose()).trace()
}

/// Optimal regularizer `λ(A) = f(A) − tr(MΣ̂Mᵀ)`; exactly zero at `ρ = 0`.
pub fn lambda_reg(a: &DMatrix<f64>, summary: &GaussianSummary, rho: f64) -> Result<f64> {
    if rho == 0.0 {
        check_a(a, summary)?;
        return Ok(0.0);
    }
    let (f, _) = inner_dual(a, summary, rho)?;
    Ok(f - residual_trace(a, summary))
}

/// `B = μ̂_y − A μ̂_x`, the minimizer of `‖Mμ̂ + B‖²`.
pub fn optimal_bias(a: &DMatrix<f64>, summary: &GaussianSummary) -> DVector<f64> {
    summary.mu_y() - a * summary.mu_x()
}

/// Expected squared loss of `Ax + B` under `N(μ̂, Σ̂)`.
pub fn nominal_risk(model: &LinearModel, summary: &GaussianSummary) -> f64 {
    let m = residual_map(&model.a);
    let shift = &m * &summary.mu_hat + &model.b;
    residual_trace(&model.a, summary) + shift.norm_squared()
}

/// `E[‖Ax + B − y‖²] + λ(A)` under the Gaussian summary.
pub fn objective(model: &LinearModel, summary: &GaussianSummary, rho: f64) -> Result<f64> {
    Ok(nominal_risk(model, summary) + lambda_reg(&model.a, summary, rho)?)
}

/// Envelope gradient of `f` with respect to `A`: the partial derivative of
/// the dual integrand at the fixed minimizer `ξ*`.
pub fn f_gradient(a: &DMatrix<f64>, summary: &GaussianSummary, rho: f64) -> Result<DMatrix<f64>> {
    let (_, point) = inner_dual(a, summary, rho)?;
    let m = residual_map(a);
    let p_x = summary.p_x;
    let full = if point.xi.is_infinite() {
        &m * &summary.sigma_hat * 2.0
    } else {
        let xi = point.xi;
        let eig = SymmetricEigen::new(m.tr_mul(&m));
        let inv_diag = eig.eigenvalues.map(|k| 1.0 / (point.feasible_floor - k.max(0.0) + (xi - point.feasible_floor)));
        let r = &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
        &m * &r * &summary.sigma_hat * &r * (2.0 * xi * xi)
    };
    Ok(full.columns(0, p_x).into_owned())
}

/// Least-squares `A = Σ̂_yx Σ̂_xx⁻¹` (pseudo-inverse when singular).
pub fn least_squares_a(summary: &GaussianSummary) -> DMatrix<f64> {
    let sxx = summary.sigma_xx();
    let syx = summary.sigma_yx();
    match sxx.clone().cholesky() {
        Some(ch) => ch.solve(&syx.transpose()).transpose(),
        None => {
            let pinv = sxx.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(summary.p_x, summary.p_x));
            syx * pinv
        }
    }
}

/// Minimize `f(A)` (the objective with `B` eliminated) from the least-squares start.
pub fn train_gauss_dro_summary(summary: &GaussianSummary, rho: f64, cfg: &SolverConfig) -> Result<Fit<LinearModel>> {
    cfg.validate()?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("rho must be nonnegative, got {rho}")));
    }
    let p_x = summary.p_x;
    let mut metric = summary.sigma_xx() + DMatrix::identity(p_x, p_x) * (rho * rho);
    let ridge = 1e-10 * (metric.trace() / p_x as f64).max(1e-300);
    for k in 0..p_x {
        metric[(k, k)] += ridge;
    }
    let precond = metric.cholesky().map(|c| c.inverse()).unwrap_or_else(|| DMatrix::identity(p_x, p_x));

    let mut a = least_squares_a(summary);
    let mut f = inner_dual(&a, summary, rho)?.0;
    let mut trace = vec![f];
    let mut converged = false;
    let mut trial = match cfg.step_rule {
        StepRule::Backtracking(eta) | StepRule::Constant(eta) | StepRule::Diminishing(eta) => eta,
    };
    let mut iterations = 0;
    for _ in 1..=cfg.max_iters {
        iterations += 1;
        let g = f_gradient(&a, summary, rho)?;
        let dir = -(&g * &precond);
        let decrement = -g.dot(&dir);
        if !decrement.is_finite() {
            return Err(Error::Domain("non-finite gradient".into()));
        }
        if decrement.sqrt() < cfg.tol {
            converged = true;
            break;
        }
        let mut step = (trial * 2.0).min(1e12);
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &a + &dir * step;
            let v = inner_dual(&cand, summary, rho)?.0;
            if v <= f - 1e-4 * step * decrement {
                accepted = Some((cand, v));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v)) = accepted else {
            // no decrease representable in floating point: at the optimum
            converged = true;
            break;
        };
        trial = step;
        let change = f - v;
        a = cand;
        f = v;
        trace.push(f);
        if change <= cfg.tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Gaussian DRO: no convergence after {iterations} iterations, returning best iterate");
    }
    let b = optimal_bias(&a, summary);
    let model = LinearModel { a, b };
    let objective = objective(&model, summary, rho)?;
    Ok(Fit { model, objective, iterations, converged, trace })
}

/// Summarize `data` and train the Gaussian DRO model.
pub fn train_gauss_dro(data: &Dataset, rho: f64, cfg: &SolverConfig) -> Result<Fit<LinearModel>> {
    train_gauss_dro_summary(&summarize(data)?, rho, cfg)
}

/// Candidate solution of the lifted LMI problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpCertificate {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub xi: f64,
    pub z: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateCheck {
    pub feasible: bool,
    pub objective: f64,
    pub min_eigenvalue: f64,
}

/// Certificate feasibility threshold on the block matrix's smallest eigenvalue.
pub const CERTIFICATE_TOL: f64 = 1e-8;

/// The block matrix `[Z, ξΣ̂^{1/2}, 0; ξΣ̂^{1/2}, ξI, Mᵀ; 0, M, I]`.
pub fn certificate_block(cert: &SdpCertificate, summary: &GaussianSummary) -> Result<DMatrix<f64>> {
    let p = summary.p();
    let p_y = summary.p_y;
    check_a(&cert.a, summary)?;
    if cert.z.shape() != (p, p) || cert.b.len() != p_y {
        return Err(Error::Shape("certificate Z or B has the wrong shape".into()));
    }
    let root = sqrtm_psd(&summary.sigma_hat)? * cert.xi;
    let m = residual_map(&cert.a);
    let size = 2 * p + p_y;
    let mut block = DMatrix::zeros(size, size);
    block.view_mut((0, 0), (p, p)).copy_from(&cert.z);
    block.view_mut((0, p), (p, p)).copy_from(&root);
    block.view_mut((p, 0), (p, p)).copy_from(&root);
    block.view_mut((p, p), (p, p)).copy_from(&(DMatrix::identity(p, p) * cert.xi));
    block.view_mut((p, 2 * p), (p, p_y)).copy_from(&m.transpose());
    block.view_mut((2 * p, p), (p_y, p)).copy_from(&m);
    block.view_mut((2 * p, 2 * p), (p_y, p_y)).copy_from(&DMatrix::identity(p_y, p_y));
    Ok(block)
}

/// Check the LMI and evaluate the lifted objective
/// `ξ(ρ² − tr Σ̂) + tr Z + tr(Mμ̂μ̂ᵀMᵀ + BBᵀ + Mμ̂Bᵀ + Bμ̂ᵀMᵀ)`.
pub fn check_sdp_certificate(cert: &SdpCertificate, summary: &GaussianSummary, rho: f64) -> Result<CertificateCheck> {
    let block = certificate_block(cert, summary)?;
    let min_eigenvalue = min_eigenvalue(&block);
    let m = residual_map(&cert.a);
    let mu = &summary.mu_hat;
    let mean_part = &m * mu * mu.transpose() * m.transpose()
        + &cert.b * cert.b.transpose()
        + &m * mu * cert.b.transpose()
        + &cert.b * mu.transpose() * m.transpose();
    let objective = cert.xi * (rho * rho - summary.sigma_hat.trace()) + cert.z.trace() + mean_part.trace();
    Ok(CertificateCheck { feasible: min_eigenvalue >= -CERTIFICATE_TOL, objective, min_eigenvalue })
}

/// The tight certificate at `(A, B, ξ)`: `Z = ξ² Σ̂^{1/2} (ξI − MᵀM)⁻¹ Σ̂^{1/2}`.
pub fn tight_certificate(model: &LinearModel, summary: &GaussianSummary, xi: f64) -> Result<SdpCertificate> {
    check_a(&model.a, summary)?;
    let p = summary.p();
    let m = residual_map(&model.a);
    let inv = (DMatrix::identity(p, p) * xi - m.tr_mul(&m))
        .cholesky()
        .ok_or_else(|| Error::Domain(format!("xi = {xi} is not above the feasibility floor")))?
        .inverse();
    let root = sqrtm_psd(&summary.sigma_hat)?;
    let z = symmetrize(&(&root * inv * &root * (xi * xi)));
    Ok(SdpCertificate { a: model.a.clone(), b: model.b.clone(), xi, z })
}
