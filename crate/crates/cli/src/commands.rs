use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use sparsecrb::bounds::{crb_signal, crb_sparse_vector, feasible_basis, BiasSpec, BoundResult};
use sparsecrb::estimators::{binomial, run_estimator, EstimatorKind, EstimatorParams, SolverConfig, DEFAULT_ML_CAP};
use sparsecrb::io::{format_matrix, read_matrix, read_vector, write_matrix, write_vector};
use sparsecrb::model::{
    coherence_with_pair, generate_dictionary, generate_sparse_param, spark_search, ProblemInstance, SignalModel,
    SparkValue,
};
use sparsecrb::seed::mix_seed;
use sparsecrb::simulation::{
    default_regularization, default_sigma_grid, default_sparsity_grid, sweep_snr, sweep_sparsity, DictionaryMode,
    Regularization, SweepReport, TrialPlan, DEFAULT_SPARSITY_SIGMA, DEFAULT_TRIALS,
};
use sparsecrb::{Error, RealMatrix};

use crate::config::FileConfig;
use crate::{CrbArgs, DiagnoseArgs, DictArgs, EstimateArgs, SweepArgs};

pub enum Outcome {
    Success,
    /// The unbiased bound is infinite: no finite-variance estimator exists.
    Infeasible,
}

/// A missing or inconsistent argument for the named subcommand.
#[derive(Debug)]
pub struct Usage(pub &'static str, pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(sub: &'static str, msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(sub, msg.into()).into())
}

const DEFAULT_GEN: (usize, usize) = (100, 200);
const DEFAULT_SWEEP_S: usize = 3;
const DEFAULT_SWEEP_ESTIMATORS: &str = "oracle,bpdn,ds,gds,gauss-bpdn";
const PARAMETER_STREAM: u64 = 1;

fn parse_pair(text: &str) -> anyhow::Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("expected M,P but got '{text}'");
    }
    let m = parts[0].parse().with_context(|| format!("bad row count in '{text}'"))?;
    let p = parts[1].parse().with_context(|| format!("bad column count in '{text}'"))?;
    if m == 0 || p == 0 {
        bail!("dictionary dimensions must be positive, got '{text}'");
    }
    Ok((m, p))
}

/// `"1,3"` to zero-based `[0, 2]`.
fn parse_indices(text: &str, p: usize) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let i: usize = part.parse().with_context(|| format!("bad index '{part}'"))?;
        if i == 0 || i > p {
            bail!("index {i} outside 1..={p}");
        }
        out.push(i - 1);
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(text: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().with_context(|| format!("bad grid value '{s}'")))
        .collect()
}

fn one_based(idx: &[usize]) -> String {
    idx.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

fn load_dictionary(sub: &'static str, args: &DictArgs, file: &FileConfig) -> anyhow::Result<(RealMatrix, u64)> {
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let dict = args.dict.clone().or(if args.gen.is_none() { file.dict.clone() } else { None });
    if let Some(path) = dict {
        return Ok((read_matrix(&path)?, seed));
    }
    match args.gen.as_deref().or(file.gen.as_deref()) {
        Some(g) => {
            let (m, p) = parse_pair(g)?;
            Ok((generate_dictionary(m, p, seed), seed))
        }
        None => usage(sub, "a dictionary is required: pass --dict FILE or --gen M,P"),
    }
}

pub fn crb(args: CrbArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let Some(sigma) = args.sigma.or(file.sigma) else {
        return usage("crb", "missing --sigma");
    };
    let Some(s) = args.s.or(file.s) else {
        return usage("crb", "missing --s");
    };
    let (h, seed) = load_dictionary("crb", &args.dict, file)?;
    let p = h.ncols();
    let alpha = match args.alpha.or(file.alpha.clone()) {
        Some(path) => read_vector(&path)?,
        None => {
            let k = args.nnz.or(file.nnz).unwrap_or(s);
            if k > p {
                bail!("--nnz {k} exceeds the {p} dictionary columns");
            }
            generate_sparse_param(p, k, mix_seed(seed, PARAMETER_STREAM))
        }
    };

    let result = match args.signal_a.or(file.signal_a.clone()) {
        Some(a_path) => {
            let a = read_matrix(&a_path)?;
            let model = SignalModel::new(a, h, s, Some(alpha))?;
            crb_signal(&model, sigma)?
        }
        None => {
            let instance = ProblemInstance::new(h, sigma, s, Some(alpha.clone()))?;
            let bias = match args.bias.or(file.bias.clone()) {
                Some(path) => BiasSpec::new(read_matrix(&path)?, format!("from {}", path.display())),
                None => BiasSpec::unbiased(&feasible_basis(&alpha, s)?),
            };
            crb_sparse_vector(&instance, &bias)?
        }
    };
    report_bound(&result, args.out.or(file.out.clone()))
}

fn report_bound(result: &BoundResult, out: Option<PathBuf>) -> anyhow::Result<Outcome> {
    println!("regime: {}", result.regime.as_str());
    println!("feasible: {}", result.feasible);
    if !result.feasible {
        println!("no finite-variance unbiased estimator");
        return Ok(Outcome::Infeasible);
    }
    if let Some(trace) = result.trace {
        println!("trace: {trace}");
    }
    if let (Some(path), Some(m)) = (out, result.bound_matrix.as_ref()) {
        write_matrix(&path, m)?;
    }
    Ok(Outcome::Success)
}

pub fn estimate(args: EstimateArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let Some(name) = args.estimator.or(file.estimator.clone()).or(file.estimators.clone()) else {
        return usage("estimate", "missing --estimator");
    };
    let kind: EstimatorKind = name.trim().parse()?;
    let Some(y_path) = args.y.or(file.y.clone()) else {
        return usage("estimate", "missing --y");
    };
    let (h, _) = load_dictionary("estimate", &args.dict, file)?;
    let y = read_vector(&y_path)?;
    let p = h.ncols();
    let s = args.s.or(file.s);
    let sigma = args.sigma.or(file.sigma);

    let (mut tau, mut gamma) = (args.tau.or(file.tau), args.gamma.or(file.gamma));
    if args.paper_rule || file.paper_rule.unwrap_or(false) {
        let (Some(sigma), Some(s)) = (sigma, s) else {
            return usage("estimate", "--paper-rule needs --sigma and --s");
        };
        let (t, g) = default_regularization(sigma, p, s)?;
        tau = tau.or(Some(t));
        gamma = gamma.or(Some(g));
    }
    let oracle_support = match args.support.or(file.support.clone()) {
        Some(text) => parse_indices(&text, p)?,
        None if kind == EstimatorKind::Oracle => return usage("estimate", "oracle needs --support"),
        None => Vec::new(),
    };
    let needs = |v: Option<f64>, flag: &str| -> anyhow::Result<f64> {
        match v {
            Some(x) => Ok(x),
            None => usage("estimate", format!("{kind} needs {flag} or --paper-rule")),
        }
    };
    let (tau, gamma) = match kind {
        EstimatorKind::Ds | EstimatorKind::Gds => (needs(tau, "--tau")?, 0.0),
        EstimatorKind::Bpdn | EstimatorKind::GaussBpdn => (0.0, needs(gamma, "--gamma")?),
        _ => (0.0, 0.0),
    };
    if kind == EstimatorKind::Ml && s.is_none() {
        return usage("estimate", "ml needs --s");
    }
    let defaults = SolverConfig::default();
    let params = EstimatorParams {
        s: s.unwrap_or(0),
        tau,
        gamma,
        solver: SolverConfig {
            tol: args.tol.or(file.tol).unwrap_or(defaults.tol),
            max_iterations: args.max_iterations.or(file.max_iterations).unwrap_or(defaults.max_iterations),
        },
        ml_cap: DEFAULT_ML_CAP,
        oracle_support,
    };
    let rec = run_estimator(kind, &h, &y, &params)?;

    let summary = format!(
        "estimator: {kind}\nsupport: {}\niterations: {}\ncertificate: {:e}\n",
        one_based(&rec.support),
        rec.solver_iterations,
        rec.objective_residual
    );
    match args.out.or(file.out.clone()) {
        Some(path) => {
            write_vector(&path, &rec.estimate)?;
            print!("{summary}");
        }
        None => {
            print!("{}", format_matrix(&RealMatrix::from_column_slice(p, 1, rec.estimate.as_slice())));
            eprint!("{summary}");
        }
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Snr,
    Sparsity,
}

pub fn sweep(args: SweepArgs, file: &FileConfig, kind: SweepKind) -> anyhow::Result<Outcome> {
    let sub = match kind {
        SweepKind::Snr => "sweep-snr",
        SweepKind::Sparsity => "sweep-sparsity",
    };
    let (m, p) = match args.gen.as_deref().or(file.gen.as_deref()) {
        Some(g) => parse_pair(g)?,
        None => DEFAULT_GEN,
    };
    let names = args
        .estimators
        .or(file.estimators.clone())
        .unwrap_or_else(|| DEFAULT_SWEEP_ESTIMATORS.to_string());
    let estimators = EstimatorKind::parse_list(&names)?;
    let regularization = match (args.tau.or(file.tau), args.gamma.or(file.gamma)) {
        (None, None) => Regularization::PaperRule,
        (Some(tau), Some(gamma)) if !args.paper_rule => Regularization::Explicit { tau, gamma },
        (Some(_), Some(_)) => return usage(sub, "--paper-rule conflicts with --tau/--gamma"),
        _ => return usage(sub, "explicit regularization needs both --tau and --gamma"),
    };
    let sigma = args.sigma.or(file.sigma);
    let s = args.s.or(file.s).unwrap_or(DEFAULT_SWEEP_S);
    let mut plan = TrialPlan {
        trials: args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        base_seed: args.seed.or(file.seed).unwrap_or(0),
        dictionary_mode: if args.fixed_dict || file.fixed_dict.unwrap_or(false) {
            DictionaryMode::Fixed
        } else {
            DictionaryMode::FreshPerTrial
        },
        regularization,
        ..TrialPlan::new(m, p, s, sigma.unwrap_or(DEFAULT_SPARSITY_SIGMA), estimators)
    };
    let grid = args.grid.or(file.grid.clone());

    let report = match kind {
        SweepKind::Snr => {
            let sigmas = match grid {
                Some(g) => parse_list::<f64>(&g)?,
                None => default_sigma_grid(),
            };
            check_ml_cap(&plan, &[s])?;
            sweep_snr(&plan, &sigmas)?
        }
        SweepKind::Sparsity => {
            let sizes = match grid {
                Some(g) => parse_list::<usize>(&g)?,
                None => default_sparsity_grid(),
            };
            if let Some(&first) = sizes.first() {
                plan.s = first;
            }
            check_ml_cap(&plan, &sizes)?;
            sweep_sparsity(&plan, &sizes)?
        }
    };
    emit_report(&report, args.out.or(file.out.clone()))?;
    Ok(Outcome::Success)
}

fn check_ml_cap(plan: &TrialPlan, sizes: &[usize]) -> anyhow::Result<()> {
    if !plan.estimators.contains(&EstimatorKind::Ml) {
        return Ok(());
    }
    for &s in sizes {
        let count = binomial(plan.p, s);
        if count > plan.ml_cap {
            return Err(Error::EnumerationCap { count, cap: plan.ml_cap }.into());
        }
    }
    Ok(())
}

fn emit_report(report: &SweepReport, out: Option<PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            report.write_csv_file(&path)?;
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            writeln!(w, "{:>12} {:>11} {:>12} {:>12} {:>12} {:>7} {:>8}", "value", "estimator", "mse", "std_error", "crb_trace", "trials", "failures")?;
            for r in &report.rows {
                writeln!(
                    w,
                    "{:>12.5e} {:>11} {:>12.5e} {:>12.5e} {:>12.5e} {:>7} {:>8}",
                    r.sweep_value, r.estimator, r.mse, r.std_error, r.crb_trace, r.trials, r.failures
                )?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            report.write_csv(stdout.lock())?;
        }
    }
    Ok(())
}

pub fn diagnose(args: DiagnoseArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let Some(s) = args.s.or(file.s) else {
        return usage("diagnose", "missing --s");
    };
    if s == 0 {
        bail!("--s must be positive");
    }
    let (h, _) = load_dictionary("diagnose", &args.dict, file)?;
    let norms: Vec<f64> = h.column_iter().map(|c| c.norm()).collect();
    let (lo, hi) = norms.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &n| (lo.min(n), hi.max(n)));
    let mean = norms.iter().sum::<f64>() / norms.len().max(1) as f64;
    println!("size: {} x {}", h.nrows(), h.ncols());
    println!("column norms: min {lo}, max {hi}, mean {mean}");
    match coherence_with_pair(&h) {
        Ok((mu, pair)) => {
            println!("coherence: {mu}");
            if let Some((i, j)) = pair {
                println!("most coherent pair: {},{}", i + 1, j + 1);
            }
        }
        Err(Error::NotNormalized { column, norm }) => {
            println!("coherence: undefined (column {} has norm {norm})", column + 1);
        }
        Err(e) => return Err(e.into()),
    }
    let limit = 2 * s;
    let rep = spark_search(&h, limit);
    match rep.value {
        SparkValue::Infinite => println!("spark: > {}", limit.min(h.ncols())),
        SparkValue::Finite(k) => println!("spark: {k}"),
    }
    if let Some(w) = &rep.witness {
        println!("dependent columns: {}", one_based(w));
    }
    let ok = rep.value.exceeds(limit);
    println!("identifiable (s = {s}): {}", if ok { "yes" } else { "no" });
    Ok(Outcome::Success)
}
