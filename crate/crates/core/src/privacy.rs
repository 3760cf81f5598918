//! Local differential privacy by additive noise.
//!
//! Every record's features are released as `x̃ = x + w` where `w` has i.i.d.
//! Laplace or Gaussian coordinates calibrated to the identity-query
//! sensitivity `Δ = (upper − lower)·p_x`. Outputs are released unchanged.
//! Privatized values are never clamped back into the feature box.

use nalgebra::DMatrix;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// `(ε, δ)` budget. `δ = 0` means pure ε-DP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Budget(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Budget(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Per-coordinate box `[lower, upper]` containing every clean feature value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureBounds {
    lower: f64,
    upper: f64,
}

impl FeatureBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Bounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn unit() -> Self {
        Self { lower: 0.0, upper: 1.0 }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Largest absolute coordinate value inside the box.
    pub fn max_abs(&self) -> f64 {
        self.lower.abs().max(self.upper.abs())
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MechanismKind {
    Laplace,
    Gaussian,
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" => Ok(Self::Laplace),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Config(format!("unknown mechanism {other:?}"))),
        }
    }
}

/// A calibrated additive-noise mechanism.
///
/// `scale` is the Laplace scale `b` or the Gaussian standard deviation `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismParams {
    pub kind: MechanismKind,
    pub sensitivity: f64,
    pub scale: f64,
    pub budget: PrivacyBudget,
}

impl MechanismParams {
    /// Variance of a single noise coordinate.
    pub fn noise_variance(&self) -> f64 {
        match self.kind {
            MechanismKind::Laplace => 2.0 * self.scale * self.scale,
            MechanismKind::Gaussian => self.scale * self.scale,
        }
    }

    /// Draw one noise coordinate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            MechanismKind::Laplace => {
                // inverse CDF on u ∈ (-1/2, 1/2)
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            MechanismKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.scale * z
            }
        }
    }
}

/// `Δ = (upper − lower)·p_x`.
pub fn sensitivity(bounds: FeatureBounds, p_x: usize) -> Result<f64> {
    if p_x == 0 {
        return Err(Error::Shape("p_x must be at least 1".into()));
    }
    FeatureBounds::new(bounds.lower, bounds.upper)?;
    Ok(bounds.width() * p_x as f64)
}

/// Calibrate the noise scale: `Δ/ε` for Laplace, `√(2 ln(1.25/δ))·Δ/ε` for Gaussian.
pub fn calibrate(
    kind: MechanismKind,
    bounds: FeatureBounds,
    p_x: usize,
    budget: PrivacyBudget,
) -> Result<MechanismParams> {
    let delta_sens = sensitivity(bounds, p_x)?;
    let scale = match kind {
        MechanismKind::Laplace => delta_sens / budget.epsilon,
        MechanismKind::Gaussian => {
            if budget.delta <= 0.0 {
                return Err(Error::Calibration("the Gaussian mechanism needs delta > 0".into()));
            }
            gaussian_factor(budget.delta)? * delta_sens / budget.epsilon
        }
    };
    Ok(MechanismParams { kind, sensitivity: delta_sens, scale, budget })
}

/// `√(2 ln(1.25/δ))`, rejecting `δ` for which the logarithm is not positive.
pub fn gaussian_factor(delta: f64) -> Result<f64> {
    let log_term = (1.25 / delta).ln();
    if !(delta > 0.0 && log_term > 0.0 && log_term.is_finite()) {
        return Err(Error::Calibration(format!("degenerate delta {delta}")));
    }
    Ok((2.0 * log_term).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Clean,
    Privatized(MechanismParams),
}

/// Feature matrix (`n × p_x`) and output matrix (`n × p_y`) with bound metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    outputs: DMatrix<f64>,
    bounds: FeatureBounds,
    provenance: Provenance,
}

impl Dataset {
    /// Build a clean dataset; every feature must lie inside `bounds`.
    pub fn new(features: DMatrix<f64>, outputs: DMatrix<f64>, bounds: FeatureBounds) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyData);
        }
        if features.nrows() != outputs.nrows() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} output rows",
                features.nrows(),
                outputs.nrows()
            )));
        }
        if features.ncols() == 0 || outputs.ncols() == 0 {
            return Err(Error::Shape("need at least one feature and one output column".into()));
        }
        if let Some(v) = features.iter().find(|v| !bounds.contains(**v)) {
            return Err(Error::Domain(format!(
                "feature value {v} outside [{}, {}]",
                bounds.lower, bounds.upper
            )));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite output".into()));
        }
        Ok(Self { features, outputs, bounds, provenance: Provenance::Clean })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn bounds(&self) -> FeatureBounds {
        self.bounds
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_clean(&self) -> bool {
        matches!(self.provenance, Provenance::Clean)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p_x(&self) -> usize {
        self.features.ncols()
    }

    pub fn p_y(&self) -> usize {
        self.outputs.ncols()
    }

    /// Subset of rows, keeping bounds and provenance.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            outputs: self.outputs.select_rows(rows),
            bounds: self.bounds,
            provenance: self.provenance,
        }
    }
}

/// Add calibrated noise to every feature entry; outputs are copied unchanged.
///
/// Noise is drawn row by row from a ChaCha stream seeded with `seed`, so the
/// same seed with a different scale of the same kind yields proportional noise.
pub fn privatize(data: &Dataset, params: &MechanismParams, seed: u64) -> Result<Dataset> {
    if !data.is_clean() {
        return Err(Error::Provenance);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = data.features.clone();
    for i in 0..features.nrows() {
        for j in 0..features.ncols() {
            features[(i, j)] += params.sample(&mut rng);
        }
    }
    Ok(Dataset {
        features,
        outputs: data.outputs.clone(),
        bounds: data.bounds,
        provenance: Provenance::Privatized(*params),
    })
}
