//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any failed.

use std::process::ExitCode;
use std::time::Instant;

use sparsecrb::bounds::{
    coherence_sandwich, crb_general, crb_signal, crb_sparse_vector, efficient_estimate, feasible_basis,
    fisher_information, unbiased_estimator_exists, BiasSpec,
};
use sparsecrb::estimators::{bpdn, dantzig, oracle, soft_threshold, subgradient_violation, EstimatorKind, SolverConfig};
use sparsecrb::matkernel::{select_columns, RealMatrix, RealVector};
use sparsecrb::model::{
    coherence, generate_dictionary, generate_sparse_param, simulate_measurements, support_of, ProblemInstance,
    SignalModel,
};
use sparsecrb::seed::{mix_seed, rng_from_seed};
use sparsecrb::simulation::{estimate_mse, sweep_snr, sweep_sparsity, DictionaryMode, TrialPlan};

use rand::seq::SliceRandom;
use rand::Rng;

const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// `Tr((H_S^T H_S)^{-1})` as the sum of inverse squared singular values of `H_S`.
fn trace_inverse_gram_svd(h_s: &RealMatrix) -> f64 {
    h_s.clone().svd(false, false).singular_values.iter().map(|s| 1.0 / (s * s)).sum()
}

fn random_subset(p: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut rng);
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

fn oracle_bound_identity() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let s = 1 + (i % 5) as usize;
        let sigma = 0.05 + 0.1 * i as f64;
        let h = generate_dictionary(40, 80, mix_seed(SEED, 100 + i));
        let alpha = generate_sparse_param(80, s, mix_seed(SEED, 200 + i));
        let inst = ProblemInstance::new(h.clone(), sigma, s, Some(alpha.clone())).map_err(err)?;
        let basis = feasible_basis(&alpha, s).map_err(err)?;
        let bound = crb_sparse_vector(&inst, &BiasSpec::unbiased(&basis)).map_err(err)?;
        let trace = bound.trace.ok_or("bound reported infeasible")?;
        let reference = sigma * sigma * trace_inverse_gram_svd(&select_columns(&h, &support_of(&alpha)));
        worst = worst.max((trace - reference).abs() / reference);
    }
    check(worst < 1e-10, format!("max relative error {worst:.2e} (limit 1e-10)"))
}

fn oracle_monte_carlo() -> Outcome {
    let plan = TrialPlan {
        trials: 20_000,
        base_seed: SEED,
        dictionary_mode: DictionaryMode::Fixed,
        ..TrialPlan::new(100, 200, 3, 0.1, vec![EstimatorKind::Oracle])
    };
    let r = estimate_mse(&plan).map_err(err)?;
    let o = r.get(EstimatorKind::Oracle).ok_or("no oracle row")?;
    let z = (o.mse - r.crb_trace) / o.std_error;
    check(
        z.abs() <= 3.0 && o.failures == 0,
        format!("mse {:.6e}, analytic {:.6e}, {z:+.2} standard errors", o.mse, r.crb_trace),
    )
}

fn ml_reaches_bound() -> Outcome {
    let plan = TrialPlan {
        trials: 500,
        base_seed: SEED,
        ..TrialPlan::new(30, 60, 3, 1e-3, vec![EstimatorKind::Ml])
    };
    let r = estimate_mse(&plan).map_err(err)?;
    let ml = r.get(EstimatorKind::Ml).ok_or("no ml row")?;
    let ratio = ml.mse / r.crb_trace;
    let se = ml.std_error / r.crb_trace;
    check(
        (1.0..=1.2).contains(&ratio) && ml.failures == 0,
        format!("mse/crb = {ratio:.4} (band [1.0, 1.2], one standard error {se:.4})"),
    )
}

fn low_snr_crossover() -> Outcome {
    let plan = TrialPlan {
        trials: 2000,
        base_seed: SEED,
        ..TrialPlan::new(30, 60, 3, 1.0, vec![EstimatorKind::Ds])
    };
    let r = estimate_mse(&plan).map_err(err)?;
    let ds = r.get(EstimatorKind::Ds).ok_or("no ds row")?;
    let margin = (r.crb_trace - ds.mse) / ds.std_error;
    check(
        margin >= 3.0 && ds.failures == 0,
        format!("ds mse {:.4}, crb {:.4}, gap {margin:.2} standard errors (need 3)", ds.mse, r.crb_trace),
    )
}

fn dichotomy_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for i in 0..200u64 {
        let n = 3 + (i % 8) as usize;
        let s = 2 + (i % 3) as usize;
        let s = s.min(n - 1);
        let k = (i % s as u64) as usize;
        let sigma = 0.3 + 0.01 * i as f64;

        // square, invertible
        let h = generate_dictionary(n, n, mix_seed(SEED, 300 + i));
        let alpha = generate_sparse_param(n, k, mix_seed(SEED, 400 + i));
        let inst = ProblemInstance::new(h.clone(), sigma, s, Some(alpha.clone())).map_err(err)?;
        let basis = feasible_basis(&alpha, s).map_err(err)?;
        let bound = crb_sparse_vector(&inst, &BiasSpec::unbiased(&basis)).map_err(err)?;
        let trace = bound.trace.ok_or("square case reported infeasible")?;
        let inv = h.clone().try_inverse().ok_or("random square matrix not invertible")?;
        let reference = sigma * sigma * inv.norm_squared();
        worst = worst.max((trace - reference).abs() / reference);

        // underdetermined
        let p = n + 1 + (i % 4) as usize;
        let wide = generate_dictionary(n, p, mix_seed(SEED, 500 + i));
        let alpha = generate_sparse_param(p, k, mix_seed(SEED, 600 + i));
        if unbiased_estimator_exists(&wide, &alpha, s).map_err(err)? {
            return Err(format!("case {i}: existence reported for a {n}x{p} design"));
        }
        let basis = feasible_basis(&alpha, s).map_err(err)?;
        let fim = fisher_information(&wide, sigma).map_err(err)?;
        if crb_general(&basis, &BiasSpec::unbiased(&basis), &fim).map_err(err)?.feasible {
            return Err(format!("case {i}: crb_general feasible for a {n}x{p} design"));
        }
        cases += 1;
    }
    check(
        worst < 1e-12,
        format!("{cases} square and {cases} wide cases, max relative error {worst:.2e} (limit 1e-12)"),
    )
}

fn coherence_sandwich_holds() -> Outcome {
    let sigma = 0.7;
    let mut checked = 0;
    let mut sizes = [0usize; 8];
    for i in 0..100u64 {
        let h = generate_dictionary(50, 100, mix_seed(SEED, 700 + i));
        let mu = coherence(&h).map_err(err)?;
        let s_max = (1.0 / mu).ceil() as usize - 1;
        let s_max = if (s_max as f64) * mu < 1.0 { s_max } else { s_max - 1 };
        if s_max == 0 {
            continue;
        }
        let mut rng = rng_from_seed(mix_seed(SEED, 800 + i));
        let s = rng.random_range(1..=s_max);
        let support = random_subset(100, s, mix_seed(SEED, 900 + i));
        let hs = select_columns(&h, &support);
        let mut alpha = RealVector::zeros(100);
        for &j in &support {
            alpha[j] = 1.0;
        }
        let inst = ProblemInstance::new(h.clone(), sigma, s.max(1), Some(alpha.clone())).map_err(err)?;
        let basis = feasible_basis(&alpha, s).map_err(err)?;
        let trace = crb_sparse_vector(&inst, &BiasSpec::unbiased(&basis))
            .map_err(err)?
            .trace
            .ok_or("infeasible")?;
        let (lo, hi) = coherence_sandwich(mu, s, sigma);
        let hi = hi.ok_or("upper bound missing with s mu < 1")?;
        if !(lo <= trace && trace <= hi) {
            return Err(format!("dictionary {i}: {lo} <= {trace} <= {hi} fails (s = {s}, mu = {mu})"));
        }
        let eig = (hs.transpose() * &hs).symmetric_eigenvalues();
        let (emin, emax) = (eig.min(), eig.max());
        let band = s as f64 * mu;
        if emin < 1.0 - band || emax > 1.0 + band {
            return Err(format!("dictionary {i}: eigenvalues [{emin}, {emax}] outside 1 -/+ {band}"));
        }
        sizes[s.min(7)] += 1;
        checked += 1;
    }
    check(checked > 0, format!("{checked} dictionaries checked, support sizes used {:?}", &sizes[1..]))
}

fn efficient_estimator_identity() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let s = 1 + (i % 4) as usize;
        let sigma = 0.2;
        let h = generate_dictionary(20, 40, mix_seed(SEED, 1000 + i));
        let alpha = generate_sparse_param(40, s, mix_seed(SEED, 1100 + i));
        let inst = ProblemInstance::new(h.clone(), sigma, s, Some(alpha.clone())).map_err(err)?;
        let basis = feasible_basis(&alpha, s).map_err(err)?;
        let bias = BiasSpec::unbiased(&basis);
        for d in 0..10u64 {
            let y = simulate_measurements(&h, &alpha, sigma, mix_seed(SEED, 10_000 * (i + 1) + d));
            let eff = efficient_estimate(&inst, &basis, &bias, &y).map_err(err)?;
            let orc = oracle(&h, &y, &support_of(&alpha)).map_err(err)?;
            worst = worst.max((eff - orc.estimate).amax());
        }
    }
    check(worst < 1e-10, format!("1000 comparisons, max abs deviation {worst:.2e} (limit 1e-10)"))
}

fn signal_space_special_case() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let n = 4 + (i % 5) as usize;
        let p = 2 * n;
        let s = 1 + (i % 3) as usize;
        let sigma = 0.5 + 0.1 * i as f64;
        let a = RealMatrix::identity(n, n);
        let d = generate_dictionary(n, p, mix_seed(SEED, 1200 + i));
        let maximal = generate_sparse_param(p, s, mix_seed(SEED, 1300 + i));
        let model = SignalModel::new(a.clone(), d.clone(), s, Some(maximal)).map_err(err)?;
        let t = crb_signal(&model, sigma).map_err(err)?.trace.ok_or("infeasible")?;
        worst = worst.max((t - s as f64 * sigma * sigma).abs());

        let partial = generate_sparse_param(p, s - 1, mix_seed(SEED, 1400 + i));
        let model = SignalModel::new(a, d, s, Some(partial)).map_err(err)?;
        let t = crb_signal(&model, sigma).map_err(err)?.trace.ok_or("infeasible")?;
        worst = worst.max((t - n as f64 * sigma * sigma).abs());
    }
    check(worst < 1e-10, format!("40 bounds, max abs deviation {worst:.2e} (limit 1e-10)"))
}

/// Minimum of `|x|_1` over `{x : |b - G x|_inf <= tau}` by enumerating the
/// vertices of the polytope in each sign orthant.
fn lp_vertex_oracle(gram: &RealMatrix, b: &RealVector, tau: f64) -> (f64, RealVector) {
    let p = b.len();
    let mut best = (f64::INFINITY, RealVector::zeros(p));
    for signs in 0..(1usize << p) {
        let mut rows: Vec<(RealVector, f64)> = Vec::new();
        for i in 0..p {
            let g = gram.row(i).transpose();
            rows.push((g.clone(), b[i] + tau));
            rows.push((-g, tau - b[i]));
        }
        for j in 0..p {
            let mut e = RealVector::zeros(p);
            e[j] = if signs >> j & 1 == 1 { 1.0 } else { -1.0 };
            rows.push((e, 0.0));
        }
        let n = rows.len();
        let mut pick: Vec<usize> = (0..p).collect();
        loop {
            let a = RealMatrix::from_fn(p, p, |r, c| rows[pick[r]].0[c]);
            let rhs = RealVector::from_fn(p, |r, _| rows[pick[r]].1);
            if let Some(x) = a.lu().solve(&rhs) {
                if rows.iter().all(|(nrm, c)| nrm.dot(&x) <= c + 1e-9) && x.lp_norm(1) < best.0 {
                    best = (x.lp_norm(1), x);
                }
            }
            let Some(i) = (0..p).rev().find(|&i| pick[i] < n - p + i) else {
                break;
            };
            pick[i] += 1;
            for t in i + 1..p {
                pick[t] = pick[t - 1] + 1;
            }
        }
    }
    best
}

fn solver_oracles() -> Outcome {
    let cfg = SolverConfig::default();
    let mut ortho_dev = 0.0f64;
    for i in 0..20u64 {
        let m = 12 + (i % 5) as usize;
        let p = 4 + (i % 6) as usize;
        let g = generate_dictionary(m, p, mix_seed(SEED, 1500 + i));
        let q = g.qr().q().columns(0, p).into_owned();
        let y = generate_dictionary(m, 1, mix_seed(SEED, 1600 + i)).column(0) * 3.0;
        let t = 0.1 + 0.05 * (i % 7) as f64;
        let st = soft_threshold(&(q.transpose() * &y), t);
        let bp = bpdn(&q, &y, t, &cfg).map_err(err)?;
        let ds = dantzig(&q, &y, t, &cfg).map_err(err)?;
        ortho_dev = ortho_dev.max((&bp.estimate - &st).amax()).max((&ds.estimate - &st).amax());
    }

    let mut lp_dev = 0.0f64;
    for i in 0..60u64 {
        let p = 2 + (i % 2) as usize;
        let h = generate_dictionary(5, p, mix_seed(SEED, 1700 + i));
        let y = generate_dictionary(5, 1, mix_seed(SEED, 1800 + i)).column(0) * 2.0;
        let gram = h.transpose() * &h;
        let b = h.transpose() * &y;
        let tau = (0.05 + 0.6 * ((i * 37 % 60) as f64 / 60.0)) * b.amax();
        let (value, point) = lp_vertex_oracle(&gram, &b, tau);
        let ds = dantzig(&h, &y, tau, &cfg).map_err(err)?;
        lp_dev = lp_dev
            .max((ds.estimate.lp_norm(1) - value).abs())
            .max((&ds.estimate - point).amax());
    }

    let mut worst_cert = 0.0f64;
    for i in 0..1000u64 {
        let mut rng = rng_from_seed(mix_seed(SEED, 2000 + i));
        let m = rng.random_range(5..=30);
        let p = rng.random_range(5..=60);
        let k = rng.random_range(1..=m.min(p).min(6));
        let h = generate_dictionary(m, p, mix_seed(SEED, 3000 + i));
        let alpha = generate_sparse_param(p, k, mix_seed(SEED, 4000 + i));
        let y = simulate_measurements(&h, &alpha, 0.1, mix_seed(SEED, 5000 + i));
        let gamma = rng.random_range(0.01..0.9) * (h.transpose() * &y).amax();
        let r = bpdn(&h, &y, gamma, &cfg).map_err(err)?;
        worst_cert = worst_cert.max(subgradient_violation(&h, &y, &r.estimate, gamma));
    }

    check(
        ortho_dev < 1e-6 && lp_dev < 1e-6 && worst_cert <= cfg.tol,
        format!(
            "orthonormal deviation {ortho_dev:.1e}, LP vertex deviation {lp_dev:.1e}, worst bpdn certificate {worst_cert:.1e} over 1000 instances"
        ),
    )
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn sparsity_sweep_shape() -> Outcome {
    let plan = TrialPlan {
        trials: 200,
        base_seed: SEED,
        dictionary_mode: DictionaryMode::Fixed,
        ..TrialPlan::new(50, 100, 1, 0.01, vec![EstimatorKind::Gds])
    };
    let sizes: Vec<usize> = (1..=15).collect();
    let rep = sweep_sparsity(&plan, &sizes).map_err(err)?;
    let rows: Vec<_> = rep.rows_for(EstimatorKind::Gds).collect();
    if rows.len() != sizes.len() {
        return Err(format!("expected {} rows, got {}", sizes.len(), rows.len()));
    }
    let crb: Vec<f64> = rows.iter().map(|r| r.crb_trace).collect();
    let monotone = crb.windows(2).all(|w| w[1] >= w[0]);
    let s: Vec<f64> = rows.iter().map(|r| r.sweep_value).collect();
    let gap: Vec<f64> = rows.iter().map(|r| r.mse - r.crb_trace).collect();
    let rho = spearman(&s, &gap);
    let failures: usize = rows.iter().map(|r| r.failures).sum();
    check(
        monotone && rho > 0.0 && failures == 0,
        format!("crb nondecreasing: {monotone}, spearman(s, mse_gds - crb) = {rho:.3}, failures {failures}"),
    )
}

fn determinism() -> Outcome {
    let plan = TrialPlan {
        trials: 30,
        base_seed: SEED,
        ..TrialPlan::new(20, 40, 2, 0.1, vec![EstimatorKind::Oracle, EstimatorKind::Ds, EstimatorKind::GaussBpdn])
    };
    let run = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(err)?;
        pool.install(|| {
            let a = sweep_snr(&plan, &[1.0, 0.1, 0.01]).map_err(err)?.to_csv_string().map_err(err)?;
            let b = sweep_sparsity(&plan, &[1, 3]).map_err(err)?.to_csv_string().map_err(err)?;
            Ok(a + &b)
        })
    };
    let first = run(1)?;
    let second = run(1)?;
    let third = run(3)?;
    check(
        first == second && first == third,
        format!("{} bytes of CSV, identical across reruns and thread counts", first.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("oracle bound equals independent trace", oracle_bound_identity),
        ("oracle Monte Carlo MSE matches analytic trace", oracle_monte_carlo),
        ("ML approaches the bound at high SNR", ml_reaches_bound),
        ("Dantzig selector beats the bound at low SNR", low_snr_crossover),
        ("support-size dichotomy is exact", dichotomy_exactness),
        ("coherence sandwich brackets the bound", coherence_sandwich_holds),
        ("efficient estimator equals the oracle", efficient_estimator_identity),
        ("signal-space bound special cases", signal_space_special_case),
        ("solver correctness oracles", solver_oracles),
        ("sparsity sweep shape", sparsity_sweep_shape),
        ("sweeps are byte-for-byte deterministic", determinism),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
