//! Privacy-budget sweeps over the three training methods.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::KeyValues;
use crate::ambiguity::{radius, ConcentrationConfig};
use crate::erm::{evaluate, train_regularized, LossKind, LossSpec, Norm, SolverConfig};
use crate::gauss_dro::train_gauss_dro;
use crate::privacy::{calibrate, privatize, Dataset, MechanismKind, PrivacyBudget};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Exact Gaussian-data DRO with the optimal regularizer.
    GaussDro,
    /// Empirical loss plus `ρ·L(θ)`.
    LipschitzReg,
    /// Unregularized empirical risk minimization.
    PlainErm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GaussDro, Method::LipschitzReg, Method::PlainErm];

    pub fn name(self) -> &'static str {
        match self {
            Method::GaussDro => "GaussDRO",
            Method::LipschitzReg => "LipschitzReg",
            Method::PlainErm => "PlainERM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub n_train: usize,
    pub seeds: Vec<u64>,
    /// Fixed `ρ` for the Lipschitz-regularized method; `None` uses the
    /// certified Gaussian-mechanism radius.
    pub rho_generic: Option<f64>,
    pub methods: Vec<Method>,
    pub loss: LossKind,
    pub norm: Norm,
    /// `Y = max|y|`; 1 for unit-scaled outputs.
    pub y_bound: f64,
    pub beta: f64,
    pub concentration: ConcentrationConfig,
    pub solver: SolverConfig,
}

/// Eight log-spaced budgets covering `[1, 100]/p_x`.
pub fn default_epsilons(p_x: usize) -> Vec<f64> {
    log_grid(1.0 / p_x as f64, 100.0 / p_x as f64, 8)
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count).map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)).collect()
}

impl SweepConfig {
    pub fn new(epsilons: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            epsilons,
            delta: 1e-2,
            n_train: 50,
            seeds,
            rho_generic: Some(1e-2),
            methods: Method::ALL.to_vec(),
            loss: LossKind::QuadraticLinear,
            norm: Norm::L2,
            y_bound: 1.0,
            beta: 0.05,
            concentration: ConcentrationConfig::default(),
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("epsilons, seeds and methods must be nonempty".into()));
        }
        for &e in &self.epsilons {
            PrivacyBudget::new(e, self.delta)?;
        }
        if let Some(rho) = self.rho_generic {
            if !(rho >= 0.0) {
                return Err(Error::Config(format!("rho_generic must be nonnegative, got {rho}")));
            }
        }
        self.concentration.validate()?;
        self.solver.validate()
    }

    /// Read sweep keys out of `kv`. `p_x` sets the default budget grid.
    pub fn from_key_values(kv: &mut KeyValues, p_x: usize) -> Result<Self> {
        let epsilons = match kv.take_parsed_list::<f64>("epsilons")? {
            Some(list) => list,
            None => match (kv.take::<f64>("eps_min")?, kv.take::<f64>("eps_max")?) {
                (Some(lo), Some(hi)) => log_grid(lo, hi, kv.take_or("eps_count", 8usize)?),
                (None, None) => default_epsilons(p_x),
                _ => return Err(Error::Config("eps_min and eps_max go together".into())),
            },
        };
        let seeds = match kv.take_str("seeds") {
            None => (0..20).collect(),
            Some(v) => parse_seeds(&v)?,
        };
        let mut cfg = Self::new(epsilons, seeds);
        cfg.delta = kv.take_or("delta", cfg.delta)?;
        cfg.n_train = kv.take_or("n_train", cfg.n_train)?;
        cfg.rho_generic = match kv.take_str("rho_generic").as_deref() {
            None => cfg.rho_generic,
            Some("radius") | Some("auto") => None,
            Some(v) => Some(v.parse().map_err(|_| Error::Config(format!("cannot parse rho_generic = {v:?}")))?),
        };
        if let Some(methods) = kv.take_parsed_list("methods")? {
            cfg.methods = methods;
        }
        cfg.loss = kv.take_or("loss", cfg.loss)?;
        cfg.norm = kv.take_or("norm", cfg.norm)?;
        cfg.y_bound = kv.take_or("y_bound", cfg.y_bound)?;
        cfg.beta = kv.take_or("beta", cfg.beta)?;
        let c = &mut cfg.concentration;
        c.c1 = kv.take_or("c1", c.c1)?;
        c.c2 = kv.take_or("c2", c.c2)?;
        c.a = kv.take_or("a", c.a)?;
        c.big_data = kv.take_bool("big_data")?.unwrap_or(c.big_data);
        cfg.solver.max_iters = kv.take_or("max_iters", cfg.solver.max_iters)?;
        cfg.solver.tol = kv.take_or("tol", cfg.solver.tol)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `"0..20"` (half-open) or `"1, 5, 9"`.
fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds = {v:?}"));
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    v.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub epsilon: f64,
    pub method: Method,
    pub seed: u64,
    pub test_loss: f64,
    pub train_objective: f64,
    pub rho_used: f64,
    /// Set when this cell failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.epsilon
                .total_cmp(&b.epsilon)
                .then(a.method.cmp(&b.method))
                .then(a.seed.cmp(&b.seed))
        });
    }

    /// Mean test loss per epsilon for one method, skipping failed cells.
    pub fn mean_test_loss(&self, method: Method) -> Vec<(f64, f64)> {
        let mut eps: Vec<f64> = self.rows.iter().filter(|r| r.method == method).map(|r| r.epsilon).collect();
        eps.sort_by(f64::total_cmp);
        eps.dedup();
        eps.into_iter()
            .filter_map(|e| {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.epsilon == e && r.error.is_none())
                    .map(|r| r.test_loss)
                    .collect();
                (!vals.is_empty()).then(|| (e, vals.iter().sum::<f64>() / vals.len() as f64))
            })
            .collect()
    }
}

/// Seeded uniform shuffle, then the first `n_train` rows train and the rest test.
pub fn split(data: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n_train == 0 || n_train >= n {
        return Err(Error::Split { n, n_train });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.select_rows(&order[..n_train]), data.select_rows(&order[n_train..])))
}

/// Noise stream for a replication, independent of the split stream and of epsilon.
fn noise_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

struct Cell<'a> {
    data: &'a Dataset,
    cfg: &'a SweepConfig,
    epsilon: f64,
    seed: u64,
}

impl Cell<'_> {
    fn run(&self) -> Vec<ResultRow> {
        match self.prepare() {
            Ok((train, test, spec)) => self
                .cfg
                .methods
                .iter()
                .map(|&m| match self.train_one(m, &train, &test, &spec) {
                    Ok((test_loss, train_objective, rho_used)) => ResultRow {
                        epsilon: self.epsilon,
                        method: m,
                        seed: self.seed,
                        test_loss,
                        train_objective,
                        rho_used,
                        error: None,
                    },
                    Err(e) => self.failed(m, e),
                })
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                self.cfg.methods.iter().map(|&m| self.failed(m, Error::Config(msg.clone()))).collect()
            }
        }
    }

    fn failed(&self, method: Method, err: Error) -> ResultRow {
        log::warn!("eps={} method={method} seed={}: {err}", self.epsilon, self.seed);
        ResultRow {
            epsilon: self.epsilon,
            method,
            seed: self.seed,
            test_loss: f64::NAN,
            train_objective: f64::NAN,
            rho_used: f64::NAN,
            error: Some(err.to_string()),
        }
    }

    fn prepare(&self) -> Result<(Dataset, Dataset, LossSpec)> {
        let (train, test) = split(self.data, self.cfg.n_train, self.seed)?;
        let budget = PrivacyBudget::new(self.epsilon, self.cfg.delta)?;
        let mech = calibrate(MechanismKind::Gaussian, train.bounds(), train.p_x(), budget)?;
        let private = privatize(&train, &mech, noise_seed(self.seed))?;
        if !test.is_clean() || private.is_clean() {
            return Err(Error::Provenance);
        }
        let spec = LossSpec::from_bounds(self.cfg.loss, self.cfg.norm, train.bounds(), train.p_x(), self.cfg.y_bound)?;
        Ok((private, test, spec))
    }

    fn certified_radius(&self, train: &Dataset) -> Result<f64> {
        let budget = PrivacyBudget::new(self.epsilon, self.cfg.delta)?;
        let mech = calibrate(MechanismKind::Gaussian, train.bounds(), train.p_x(), budget)?;
        let r = radius(
            MechanismKind::Gaussian,
            budget,
            train.p_x() + train.p_y(),
            mech.sensitivity,
            self.cfg.beta,
            train.n(),
            &self.cfg.concentration,
        )?;
        Ok(r.rho)
    }

    fn train_one(&self, method: Method, train: &Dataset, test: &Dataset, spec: &LossSpec) -> Result<(f64, f64, f64)> {
        match method {
            Method::PlainErm => {
                let fit = train_regularized(train, spec, 0.0, &self.cfg.solver)?;
                Ok((evaluate(test, spec, &fit.model)?, fit.objective, 0.0))
            }
            Method::LipschitzReg => {
                let rho = match self.cfg.rho_generic {
                    Some(r) => r,
                    None => self.certified_radius(train)?,
                };
                let fit = train_regularized(train, spec, rho, &self.cfg.solver)?;
                Ok((evaluate(test, spec, &fit.model)?, fit.objective, rho))
            }
            Method::GaussDro => {
                if spec.kind == LossKind::Logistic {
                    return Err(Error::Config("GaussDRO fits a linear predictor; logistic loss is not supported".into()));
                }
                let rho = self.certified_radius(train)?;
                let fit = train_gauss_dro(train, rho, &self.cfg.solver)?;
                Ok((evaluate(test, spec, &fit.model.to_theta())?, fit.objective, rho))
            }
        }
    }
}

/// Run every `(epsilon, seed)` cell and every enabled method; failures become
/// error rows. Rows come back sorted by `(epsilon, method, seed)`.
pub fn run_sweep(data: &Dataset, sweep: &SweepConfig) -> Result<ResultsTable> {
    sweep.validate()?;
    if !data.is_clean() {
        return Err(Error::Provenance);
    }
    let cells: Vec<(f64, u64)> =
        sweep.epsilons.iter().flat_map(|&e| sweep.seeds.iter().map(move |&s| (e, s))).collect();
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .flat_map_iter(|&(epsilon, seed)| Cell { data, cfg: sweep, epsilon, seed }.run())
        .collect();
    let mut table = ResultsTable { rows };
    table.sort();
    Ok(table)
}
