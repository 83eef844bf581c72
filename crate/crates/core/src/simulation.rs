//! Monte Carlo estimation of estimator MSE against the unbiased bound.
//!
//! Every trial draws its own dictionary (or reuses a fixed one), an
//! `s`-sparse parameter, and a noise vector, each from a seed derived from
//! `(base_seed, trial)`. Trials run in parallel and are reduced in trial order,
//! so a report depends only on the plan.
//!
//! The parameter stream ignores `s` and the noise stream ignores `sigma`
//! beyond scaling, so sweeps over either reuse the same random draws at every
//! grid point.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{binomial, run_estimator, EstimatorKind, EstimatorParams, SolverConfig, DEFAULT_ML_CAP};
use crate::matkernel::{select_columns, spd_inverse, RealMatrix};
use crate::model::{generate_dictionary, generate_sparse_param, simulate_measurements, support_of};
use crate::seed::mix_seed;

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_SPARSITY_SIGMA: f64 = 0.01;

const FIXED_DICTIONARY_STREAM: u64 = u64::MAX;
const DICTIONARY_STREAM: u64 = 0;
const PARAMETER_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DictionaryMode {
    #[default]
    FreshPerTrial,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

impl LogBase {
    fn log(&self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Regularization {
    #[default]
    PaperRule,
    Explicit { tau: f64, gamma: f64 },
}

/// `tau = 2 sigma sqrt(ln p)`, `gamma = 4 sigma sqrt(ln(p - s))`.
pub fn default_regularization(sigma: f64, p: usize, s: usize) -> Result<(f64, f64)> {
    default_regularization_in(sigma, p, s, LogBase::Natural)
}

pub fn default_regularization_in(sigma: f64, p: usize, s: usize, base: LogBase) -> Result<(f64, f64)> {
    if p <= s {
        return Err(Error::InvalidParameter(format!("regularization rule needs p > s, got p = {p}, s = {s}")));
    }
    let tau = 2.0 * sigma * base.log(p as f64).sqrt();
    let gamma = 4.0 * sigma * base.log((p - s) as f64).sqrt();
    Ok((tau, gamma))
}

/// Fifteen values from 1 down to 1e-3, evenly spaced in log scale.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..15).map(|k| 10f64.powf(-3.0 * k as f64 / 14.0)).collect()
}

/// Fifteen support sizes spread evenly over 1..=30.
pub fn default_sparsity_grid() -> Vec<usize> {
    (0..15).map(|k| (1.0 + 29.0 * k as f64 / 14.0).round() as usize).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub m: usize,
    pub p: usize,
    pub s: usize,
    /// Noise standard deviation; zero gives noiseless trials.
    pub sigma: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub dictionary_mode: DictionaryMode,
    pub regularization: Regularization,
    pub log_base: LogBase,
    pub solver: SolverConfig,
    pub ml_cap: u128,
}

impl TrialPlan {
    pub fn new(m: usize, p: usize, s: usize, sigma: f64, estimators: Vec<EstimatorKind>) -> Self {
        Self {
            m,
            p,
            s,
            sigma,
            trials: DEFAULT_TRIALS,
            base_seed: 0,
            estimators,
            dictionary_mode: DictionaryMode::default(),
            regularization: Regularization::default(),
            log_base: LogBase::default(),
            solver: SolverConfig::default(),
            ml_cap: DEFAULT_ML_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be positive".into()));
        }
        if self.s == 0 || self.s >= self.p {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= s < p, got s = {}, p = {}",
                self.s, self.p
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators selected".into()));
        }
        if let Regularization::Explicit { tau, gamma } = self.regularization {
            if !(tau > 0.0 && gamma > 0.0 && tau.is_finite() && gamma.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "explicit regularization needs positive tau and gamma, got {tau}, {gamma}"
                )));
            }
        }
        if self.estimators.contains(&EstimatorKind::Ml) {
            let count = binomial(self.p, self.s);
            if count > self.ml_cap {
                return Err(Error::EnumerationCap { count, cap: self.ml_cap });
            }
        }
        Ok(())
    }

    pub fn regularization_values(&self) -> Result<(f64, f64)> {
        match self.regularization {
            Regularization::PaperRule => default_regularization_in(self.sigma, self.p, self.s, self.log_base),
            Regularization::Explicit { tau, gamma } => Ok((tau, gamma)),
        }
    }

    /// The dictionary used by every trial in fixed mode.
    pub fn fixed_dictionary(&self) -> RealMatrix {
        generate_dictionary(self.m, self.p, mix_seed(self.base_seed, FIXED_DICTIONARY_STREAM))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    /// Mean squared error over successful trials (NaN when none succeeded).
    pub mse: f64,
    pub std_error: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    /// Mean over trials of `sigma^2 Tr((H_S^T H_S)^{-1})`.
    pub crb_trace: f64,
    pub estimators: Vec<EstimatorSummary>,
}

impl MseReport {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == kind)
    }
}

struct TrialOutcome {
    crb_trace: f64,
    errors: Vec<Option<f64>>,
}

pub fn estimate_mse(plan: &TrialPlan) -> Result<MseReport> {
    plan.validate()?;
    let (tau, gamma) = plan.regularization_values()?;
    let fixed = match plan.dictionary_mode {
        DictionaryMode::Fixed => Some(plan.fixed_dictionary()),
        DictionaryMode::FreshPerTrial => None,
    };

    let outcomes: Vec<Result<TrialOutcome>> = (0..plan.trials)
        .into_par_iter()
        .map(|t| run_trial(plan, t as u64, fixed.as_ref(), tau, gamma))
        .collect();

    let mut crb_sum = 0.0;
    let mut per_estimator: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.trials); plan.estimators.len()];
    for outcome in outcomes {
        let outcome = outcome?;
        crb_sum += outcome.crb_trace;
        for (slot, err) in per_estimator.iter_mut().zip(outcome.errors) {
            if let Some(e) = err {
                slot.push(e);
            }
        }
    }

    let estimators = plan
        .estimators
        .iter()
        .zip(per_estimator)
        .map(|(&kind, errs)| {
            let failures = plan.trials - errs.len();
            if failures > 0 {
                warn!("{kind}: {failures} of {} trials failed and were excluded", plan.trials);
            }
            let (mse, std_error) = mean_and_std_error(&errs);
            EstimatorSummary {
                estimator: kind,
                mse,
                std_error,
                trials: errs.len(),
                failures,
            }
        })
        .collect();
    Ok(MseReport {
        crb_trace: crb_sum / plan.trials as f64,
        estimators,
    })
}

fn run_trial(plan: &TrialPlan, t: u64, fixed: Option<&RealMatrix>, tau: f64, gamma: f64) -> Result<TrialOutcome> {
    let seed = mix_seed(plan.base_seed, t);
    let fresh;
    let h = match fixed {
        Some(h) => h,
        None => {
            fresh = generate_dictionary(plan.m, plan.p, mix_seed(seed, DICTIONARY_STREAM));
            &fresh
        }
    };
    let alpha = generate_sparse_param(plan.p, plan.s, mix_seed(seed, PARAMETER_STREAM));
    let y = simulate_measurements(h, &alpha, plan.sigma, mix_seed(seed, NOISE_STREAM));
    let support = support_of(&alpha);

    let hs = select_columns(h, &support);
    let inv = spd_inverse(&(hs.transpose() * &hs)).ok_or_else(|| {
        Error::RankDeficient(format!("trial {t}: support columns {support:?} are linearly dependent"))
    })?;
    let crb_trace = plan.sigma * plan.sigma * inv.trace();

    let params = EstimatorParams {
        s: plan.s,
        tau,
        gamma,
        solver: plan.solver,
        ml_cap: plan.ml_cap,
        oracle_support: support,
    };
    let errors = plan
        .estimators
        .iter()
        .map(|&kind| match run_estimator(kind, h, &y, &params) {
            Ok(rec) => Some((rec.estimate - &alpha).norm_squared()),
            Err(e) => {
                warn!("trial {t}: {kind} failed: {e}");
                None
            }
        })
        .collect();
    Ok(TrialOutcome { crb_trace, errors })
}

fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub estimator: EstimatorKind,
    pub mse: f64,
    pub std_error: f64,
    pub crb_trace: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    sweep_value: f64,
    estimator: String,
    mse: f64,
    std_error: f64,
    crb_trace: f64,
    trials: usize,
    failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    fn push_report(&mut self, sweep_value: f64, report: &MseReport) {
        for e in &report.estimators {
            self.rows.push(SweepRow {
                sweep_value,
                estimator: e.estimator,
                mse: e.mse,
                std_error: e.std_error,
                crb_trace: report.crb_trace,
                trials: e.trials,
                failures: e.failures,
            });
        }
    }

    fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| a.sweep_value.total_cmp(&b.sweep_value).then(a.estimator.cmp(&b.estimator)));
    }

    pub fn rows_for(&self, kind: EstimatorKind) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.estimator == kind)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                sweep_value: r.sweep_value,
                estimator: r.estimator.name().to_string(),
                mse: r.mse,
                std_error: r.std_error,
                crb_trace: r.crb_trace,
                trials: r.trials,
                failures: r.failures,
            })?;
        }
        if self.rows.is_empty() {
            w.write_record(["sweep_value", "estimator", "mse", "std_error", "crb_trace", "trials", "failures"])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let r: CsvRow = rec?;
            rows.push(SweepRow {
                sweep_value: r.sweep_value,
                estimator: r.estimator.parse()?,
                mse: r.mse,
                std_error: r.std_error,
                crb_trace: r.crb_trace,
                trials: r.trials,
                failures: r.failures,
            });
        }
        Ok(Self { rows })
    }
}

/// One `estimate_mse` run per noise level; under `Regularization::PaperRule` the
/// regularization is re-derived for each level.
pub fn sweep_snr(plan: &TrialPlan, sigmas: &[f64]) -> Result<SweepReport> {
    if sigmas.is_empty() {
        return Err(Error::InvalidParameter("sigma grid is empty".into()));
    }
    let mut report = SweepReport::default();
    for &sigma in sigmas {
        let point = TrialPlan { sigma, ..plan.clone() };
        report.push_report(sigma, &estimate_mse(&point)?);
    }
    report.sort();
    Ok(report)
}

/// One `estimate_mse` run per support size. ML is dropped, with a warning, at
/// sizes whose support count exceeds the plan's enumeration cap.
pub fn sweep_sparsity(plan: &TrialPlan, support_sizes: &[usize]) -> Result<SweepReport> {
    if support_sizes.is_empty() {
        return Err(Error::InvalidParameter("support size grid is empty".into()));
    }
    if let Some(&bad) = support_sizes.iter().find(|&&s| s == 0 || s >= plan.p) {
        return Err(Error::InvalidParameter(format!("support size {bad} not in 1..{}", plan.p)));
    }
    let mut report = SweepReport::default();
    for &s in support_sizes {
        let mut point = TrialPlan { s, ..plan.clone() };
        if point.estimators.contains(&EstimatorKind::Ml) && binomial(point.p, s) > point.ml_cap {
            warn!("s = {s}: skipping ml, {} supports exceed the cap {}", binomial(point.p, s), point.ml_cap);
            point.estimators.retain(|&k| k != EstimatorKind::Ml);
            if point.estimators.is_empty() {
                continue;
            }
        }
        report.push_report(s as f64, &estimate_mse(&point)?);
    }
    report.sort();
    Ok(report)
}
