//! Lipschitz-regularized empirical risk minimization.
//!
//! The worst-case expected loss over a W1 ball of radius `ρ` around the
//! empirical distribution is bounded by `E[ℓ] + ρ·L(θ)`, where `L(θ)` is the
//! Lipschitz constant of the loss in the data. For the affine model
//! `θᵀ[x; 1]`:
//!
//! | loss                  | `L(θ)`                  |
//! |-----------------------|-------------------------|
//! | `(θᵀz − y)²/2`        | `(X + 1 + Y)·‖θ‖*²`     |
//! | `|θᵀz − y|`           | `‖θ‖*`                  |
//! | logistic cross-entropy| `(Y + X + 2)·‖θ‖*`      |
//!
//! with `X = max‖x‖`, `Y = max|y|` and `‖·‖*` the dual of the data norm.
//! Multiple outputs are trained independently, one `θ` column each.

use nalgebra::{DMatrix, DVector};

use crate::privacy::{Dataset, FeatureBounds};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    QuadraticLinear,
    AbsoluteLinear,
    Logistic,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quadratic" | "quadratic_linear" => Ok(Self::QuadraticLinear),
            "absolute" | "absolute_linear" => Ok(Self::AbsoluteLinear),
            "logistic" => Ok(Self::Logistic),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

/// Norm on the data space. The regularizer uses its dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L2,
    L1,
    Linf,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Self::L2),
            "l1" => Ok(Self::L1),
            "linf" => Ok(Self::Linf),
            other => Err(Error::Config(format!("unknown norm {other:?}"))),
        }
    }
}

impl Norm {
    pub fn dual(self) -> Norm {
        match self {
            Norm::L2 => Norm::L2,
            Norm::L1 => Norm::Linf,
            Norm::Linf => Norm::L1,
        }
    }

    pub fn eval(self, v: &DVector<f64>) -> f64 {
        match self {
            Norm::L2 => v.norm(),
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// A subgradient of the norm at `v`: zero at the origin, lowest index on `ℓ∞` ties.
    pub fn subgradient(self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Norm::L2 => {
                let n = v.norm();
                if n > 0.0 {
                    v / n
                } else {
                    DVector::zeros(v.len())
                }
            }
            Norm::L1 => v.map(|x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 }),
            Norm::Linf => {
                let mut g = DVector::zeros(v.len());
                let mut best = 0.0;
                let mut arg = None;
                for (k, x) in v.iter().enumerate() {
                    if x.abs() > best {
                        best = x.abs();
                        arg = Some(k);
                    }
                }
                if let Some(k) = arg {
                    g[k] = v[k].signum();
                }
                g
            }
        }
    }

    /// `max ‖x‖` over the box `[lower, upper]^dim`.
    pub fn box_radius(self, bounds: FeatureBounds, dim: usize) -> f64 {
        let m = bounds.max_abs();
        match self {
            Norm::L2 => m * (dim as f64).sqrt(),
            Norm::L1 => m * dim as f64,
            Norm::Linf => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// `X = max‖x‖` over the feature set.
    pub x_bound: f64,
    /// `Y = max|y|` over the output set.
    pub y_bound: f64,
    pub norm: Norm,
}

impl LossSpec {
    pub fn new(kind: LossKind, x_bound: f64, y_bound: f64, norm: Norm) -> Result<Self> {
        if !(x_bound >= 0.0 && y_bound >= 0.0) {
            return Err(Error::Domain(format!("bounds must be nonnegative, got X={x_bound}, Y={y_bound}")));
        }
        Ok(Self { kind, x_bound, y_bound, norm })
    }

    /// `X` from the clean feature box, `Y` supplied (1 for unit-scaled outputs).
    pub fn from_bounds(kind: LossKind, norm: Norm, bounds: FeatureBounds, p_x: usize, y_bound: f64) -> Result<Self> {
        Self::new(kind, norm.box_radius(bounds, p_x), y_bound, norm)
    }

    /// Per-record loss and its derivative in the linear score `u = θᵀz`.
    fn loss_and_slope(&self, u: f64, y: f64) -> (f64, f64) {
        match self.kind {
            LossKind::QuadraticLinear => {
                let r = u - y;
                (0.5 * r * r, r)
            }
            LossKind::AbsoluteLinear => {
                let r = u - y;
                let s = if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 };
                (r.abs(), s)
            }
            LossKind::Logistic => {
                // softplus(u) − y·u = −y ln σ(u) − (1−y) ln(1−σ(u))
                let softplus = if u > 0.0 { u + (-u).exp().ln_1p() } else { u.exp().ln_1p() };
                (softplus - y * u, sigmoid(u) - y)
            }
        }
    }

    fn check_labels(&self, outputs: &DMatrix<f64>) -> Result<()> {
        if self.kind == LossKind::Logistic {
            if let Some(&bad) = outputs.iter().find(|&&y| y != 0.0 && y != 1.0) {
                return Err(Error::Label(bad));
            }
        }
        Ok(())
    }

    /// Multiplier `c` with `L(θ) = c·‖θ‖*^k`.
    fn lipschitz_factor(&self) -> f64 {
        match self.kind {
            LossKind::QuadraticLinear => self.x_bound + 1.0 + self.y_bound,
            LossKind::AbsoluteLinear => 1.0,
            LossKind::Logistic => self.y_bound + self.x_bound + 2.0,
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Stacked weights and bias, one column per output: `θ_k = [w_k; b_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaModel {
    pub theta: DMatrix<f64>,
}

impl ThetaModel {
    pub fn zeros(p_x: usize, p_y: usize) -> Self {
        Self { theta: DMatrix::zeros(p_x + 1, p_y) }
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Self {
        Self { theta: DMatrix::from_columns(columns) }
    }

    pub fn p_x(&self) -> usize {
        self.theta.nrows() - 1
    }

    pub fn p_y(&self) -> usize {
        self.theta.ncols()
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.theta.column(k).into_owned()
    }
}

/// Lipschitz constant `L(θ)` of the loss for one output's parameter vector.
pub fn lipschitz_constant(spec: &LossSpec, theta: &DVector<f64>) -> f64 {
    let dual = spec.norm.dual().eval(theta);
    match spec.kind {
        LossKind::QuadraticLinear => spec.lipschitz_factor() * dual * dual,
        _ => spec.lipschitz_factor() * dual,
    }
}

/// `[X 1]`, the `n × (p_x + 1)` design matrix.
pub fn design_matrix(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = features.shape();
    let mut z = DMatrix::from_element(n, p + 1, 1.0);
    z.view_mut((0, 0), (n, p)).copy_from(features);
    z
}

fn check_shapes(data: &Dataset, model: &ThetaModel) -> Result<()> {
    if model.p_x() != data.p_x() || model.p_y() != data.p_y() {
        return Err(Error::Shape(format!(
            "model is {}→{}, data is {}→{}",
            model.p_x(),
            model.p_y(),
            data.p_x(),
            data.p_y()
        )));
    }
    Ok(())
}

/// Sample mean over records of the per-record loss (summed over outputs).
pub fn empirical_loss(data: &Dataset, spec: &LossSpec, model: &ThetaModel) -> Result<f64> {
    check_shapes(data, model)?;
    spec.check_labels(data.outputs())?;
    let scores = design_matrix(data.features()) * &model.theta;
    let mut total = 0.0;
    for i in 0..data.n() {
        for k in 0..data.p_y() {
            total += spec.loss_and_slope(scores[(i, k)], data.outputs()[(i, k)]).0;
        }
    }
    Ok(total / data.n() as f64)
}

/// Held-out loss; the same computation as [`empirical_loss`] on a clean split.
pub fn evaluate(data: &Dataset, spec: &LossSpec, model: &ThetaModel) -> Result<f64> {
    empirical_loss(data, spec, model)
}

/// `E[ℓ(θᵀz, y)] + ρ·L(θ)` for a single output column.
#[derive(Debug, Clone)]
pub struct RegularizedObjective {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    spec: LossSpec,
    rho: f64,
}

impl RegularizedObjective {
    pub fn new(data: &Dataset, spec: LossSpec, rho: f64, output: usize) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be nonnegative, got {rho}")));
        }
        if output >= data.p_y() {
            return Err(Error::Shape(format!("output {output} out of range")));
        }
        spec.check_labels(data.outputs())?;
        Ok(Self {
            design: design_matrix(data.features()),
            targets: data.outputs().column(output).into_owned(),
            spec,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let scores = &self.design * theta;
        let n = self.targets.len() as f64;
        let data: f64 =
            scores.iter().zip(self.targets.iter()).map(|(&u, &y)| self.spec.loss_and_slope(u, y).0).sum();
        data / n + self.rho * lipschitz_constant(&self.spec, theta)
    }

    /// A subgradient; the gradient wherever the objective is differentiable.
    pub fn subgradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let scores = &self.design * theta;
        let n = self.targets.len() as f64;
        let slopes = DVector::from_iterator(
            scores.len(),
            scores.iter().zip(self.targets.iter()).map(|(&u, &y)| self.spec.loss_and_slope(u, y).1),
        );
        let mut g = self.design.tr_mul(&slopes) / n;
        if self.rho > 0.0 {
            let dual = self.spec.norm.dual();
            let dg = dual.subgradient(theta);
            let c = self.spec.lipschitz_factor();
            let reg = match self.spec.kind {
                LossKind::QuadraticLinear => dg * (2.0 * c * dual.eval(theta)),
                _ => dg * c,
            };
            g += reg * self.rho;
        }
        g
    }

    /// Inverse of the regularized second-moment matrix `ZᵀZ/n`, used as a fixed metric.
    fn metric(&self) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.targets.len() as f64;
        let mut gram = self.design.tr_mul(&self.design) / n;
        let ridge = 1e-10 * (gram.trace() / d as f64).max(1e-300);
        for k in 0..d {
            gram[(k, k)] += ridge;
        }
        match gram.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => DMatrix::from_diagonal(&gram.diagonal().map(|v| 1.0 / v.max(1e-300))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `θ ← θ − η·P·g` every iteration.
    Constant(f64),
    /// `θ ← θ − (η₀/√t)·P·g`.
    Diminishing(f64),
    /// Armijo backtracking from an adaptive trial step; when no decrease is
    /// found along the subgradient (a kink), falls back to `η₀/√t`.
    Backtracking(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Stop when the metric-weighted subgradient norm or the relative
    /// objective change drops below this.
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iters: 20_000, step_rule: StepRule::Backtracking(1.0), tol: 1e-12 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        let eta = match self.step_rule {
            StepRule::Constant(e) | StepRule::Diminishing(e) | StepRule::Backtracking(e) => e,
        };
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {eta}")));
        }
        Ok(())
    }
}

/// Result of an iterative fit. `model` is the best iterate seen.
#[derive(Debug, Clone)]
pub struct Fit<M> {
    pub model: M,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at every iterate, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Minimize one output's regularized objective from `θ = 0`.
pub fn minimize_objective(obj: &RegularizedObjective, cfg: &SolverConfig) -> Result<Fit<DVector<f64>>> {
    cfg.validate()?;
    let metric = obj.metric();
    let mut theta = DVector::zeros(obj.dim());
    let mut f = obj.value(&theta);
    let mut best = (theta.clone(), f);
    let mut trace = vec![f];
    let mut converged = false;
    let mut trial = match cfg.step_rule {
        StepRule::Backtracking(eta) => eta,
        _ => 0.0,
    };
    let mut iterations = 0;

    for t in 1..=cfg.max_iters {
        iterations = t;
        let g = obj.subgradient(&theta);
        let dir = -(&metric * &g);
        let decrement = -g.dot(&dir);
        if !decrement.is_finite() {
            return Err(Error::Domain("non-finite subgradient".into()));
        }
        if decrement.sqrt() < cfg.tol {
            converged = true;
            break;
        }
        let (next, f_next, accepted) = match cfg.step_rule {
            StepRule::Constant(eta) => {
                let th = &theta + &dir * eta;
                let v = obj.value(&th);
                (th, v, false)
            }
            StepRule::Diminishing(eta0) => {
                let th = &theta + &dir * (eta0 / (t as f64).sqrt());
                let v = obj.value(&th);
                (th, v, false)
            }
            StepRule::Backtracking(eta0) => {
                let mut step = (trial * 2.0).min(1e12);
                let mut found = None;
                for _ in 0..60 {
                    let th = &theta + &dir * step;
                    let v = obj.value(&th);
                    if v <= f - 1e-4 * step * decrement {
                        found = Some((th, v));
                        break;
                    }
                    step *= 0.5;
                }
                match found {
                    Some((th, v)) => {
                        trial = step;
                        (th, v, true)
                    }
                    None => {
                        let th = &theta + &dir * (eta0 / (t as f64).sqrt());
                        let v = obj.value(&th);
                        (th, v, false)
                    }
                }
            }
        };
        let change = (f - f_next).abs();
        theta = next;
        f = f_next;
        trace.push(f);
        if f < best.1 {
            best = (theta.clone(), f);
        }
        let stalled = change <= cfg.tol * f.abs().max(1.0);
        if stalled && (accepted || !matches!(cfg.step_rule, StepRule::Backtracking(_))) {
            converged = true;
            break;
        }
    }
    Ok(Fit { model: best.0, objective: best.1, iterations, converged, trace })
}

/// Train `min_θ E[ℓ] + ρ·L(θ)` independently for every output column.
pub fn train_regularized(data: &Dataset, spec: &LossSpec, rho: f64, cfg: &SolverConfig) -> Result<Fit<ThetaModel>> {
    let mut columns = Vec::with_capacity(data.p_y());
    let mut objective = 0.0;
    let mut iterations = 0;
    let mut converged = true;
    let mut trace: Vec<f64> = Vec::new();
    for k in 0..data.p_y() {
        let obj = RegularizedObjective::new(data, *spec, rho, k)?;
        let fit = minimize_objective(&obj, cfg)?;
        if !fit.converged {
            log::warn!("output {k}: no convergence after {} iterations, returning best iterate", fit.iterations);
        }
        objective += fit.objective;
        iterations = iterations.max(fit.iterations);
        converged &= fit.converged;
        if trace.is_empty() {
            trace = fit.trace;
        }
        columns.push(fit.model);
    }
    Ok(Fit { model: ThetaModel::from_columns(&columns), objective, iterations, converged, trace })
}
