use super::{check_dims, EstimateRecord, SolverConfig};
use crate::error::{Error, Result};
use crate::matkernel::{RealMatrix, RealVector};

/// Largest violation of the l1 subgradient conditions for
/// `0.5 |y - H x|^2 + gamma |x|_1` at `x`.
pub fn subgradient_violation(h: &RealMatrix, y: &RealVector, x: &RealVector, gamma: f64) -> f64 {
    let corr = h.transpose() * (y - h * x);
    violation(&corr, x, gamma)
}

fn violation(corr: &RealVector, x: &RealVector, gamma: f64) -> f64 {
    corr.iter()
        .zip(x.iter())
        .map(|(&c, &v)| {
            if v != 0.0 {
                (c - gamma * v.signum()).abs()
            } else {
                (c.abs() - gamma).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent on the Gram matrix, alternating full sweeps with
/// sweeps over the current nonzeros until the subgradient certificate holds.
pub fn bpdn(h: &RealMatrix, y: &RealVector, gamma: f64, cfg: &SolverConfig) -> Result<EstimateRecord> {
    check_dims(h, y)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let p = h.ncols();
    let gram = h.transpose() * h;
    let b = h.transpose() * y;
    let mut x = RealVector::zeros(p);
    let mut corr = b.clone();
    let step_tol = 1e-2 * cfg.tol;

    let mut sweeps = 0usize;
    let mut best = x.clone();
    let mut best_cert = f64::INFINITY;
    loop {
        let all: Vec<usize> = (0..p).collect();
        sweep(&gram, &mut x, &mut corr, gamma, &all);
        sweeps += 1;

        loop {
            let active: Vec<usize> = (0..p).filter(|&j| x[j] != 0.0).collect();
            if active.is_empty() || sweeps >= cfg.max_iterations {
                break;
            }
            let moved = sweep(&gram, &mut x, &mut corr, gamma, &active);
            sweeps += 1;
            if moved <= step_tol {
                break;
            }
        }

        corr = &b - &gram * &x;
        let cert = violation(&corr, &x, gamma);
        if cert < best_cert {
            best_cert = cert;
            best.copy_from(&x);
        }
        if cert <= cfg.tol {
            return Ok(EstimateRecord::new(x, sweeps, cert));
        }
        if sweeps >= cfg.max_iterations {
            return Err(Error::NotConverged {
                iterations: sweeps,
                residual: best_cert,
                best,
            });
        }
    }
}

/// One pass of exact coordinate minimization over `coords`; returns the
/// largest step measured in the metric of the Gram diagonal.
fn sweep(gram: &RealMatrix, x: &mut RealVector, corr: &mut RealVector, gamma: f64, coords: &[usize]) -> f64 {
    let mut moved: f64 = 0.0;
    for &j in coords {
        let gjj = gram[(j, j)];
        if gjj <= 0.0 {
            continue;
        }
        let old = x[j];
        let z = corr[j] + gjj * old;
        let mag = z.abs() - gamma;
        let new = if mag > 0.0 { mag.copysign(z) / gjj } else { 0.0 };
        if new != old {
            let delta = new - old;
            corr.axpy(-delta, &gram.column(j), 1.0);
            x[j] = new;
            moved = moved.max(delta.abs() * gjj.sqrt());
        }
    }
    moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{ls, soft_threshold, tests::orthonormal};
    use crate::model::{generate_dictionary, generate_sparse_param, simulate_measurements};

    #[test]
    fn scalar_soft_threshold() {
        let h = RealMatrix::from_element(1, 1, 1.0);
        let y = RealVector::from_element(1, 1.0);
        let r = bpdn(&h, &y, 0.3, &SolverConfig::default()).unwrap();
        assert!((r.estimate[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn large_gamma_gives_zero() {
        let h = generate_dictionary(10, 20, 4);
        let y = simulate_measurements(&h, &generate_sparse_param(20, 3, 4), 0.1, 4);
        let gamma = (h.transpose() * &y).amax();
        let r = bpdn(&h, &y, gamma, &SolverConfig::default()).unwrap();
        assert_eq!(r.estimate, RealVector::zeros(20));
        assert!(r.support.is_empty());
    }

    #[test]
    fn vanishing_gamma_reaches_least_squares() {
        let h = generate_dictionary(6, 3, 21);
        let y = RealVector::from_vec(vec![0.4, -1.2, 0.3, 2.0, -0.7, 0.1]);
        let r = bpdn(&h, &y, 1e-10, &SolverConfig::default()).unwrap();
        let l = ls(&h, &y).unwrap();
        assert!((r.estimate - l.estimate).amax() < 1e-6);
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        let q = orthonormal(12, 6, 5);
        let y = generate_dictionary(12, 1, 6).column(0) * 3.0;
        let gamma = 0.4;
        let r = bpdn(&q, &y, gamma, &SolverConfig::default()).unwrap();
        let expect = soft_threshold(&(q.transpose() * &y), gamma);
        assert!((r.estimate - expect).amax() < 1e-6);
    }

    #[test]
    fn certificate_on_random_instances() {
        let cfg = SolverConfig::default();
        for seed in 0..50 {
            let h = generate_dictionary(15, 30, seed);
            let y = simulate_measurements(&h, &generate_sparse_param(30, 4, seed), 0.2, seed);
            let r = bpdn(&h, &y, 0.3, &cfg).unwrap();
            assert!(r.objective_residual <= cfg.tol);
            assert!(subgradient_violation(&h, &y, &r.estimate, 0.3) <= 10.0 * cfg.tol);
        }
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let h = generate_dictionary(15, 30, 3);
        let y = simulate_measurements(&h, &generate_sparse_param(30, 4, 3), 0.2, 3);
        let cfg = SolverConfig {
            tol: 1e-14,
            max_iterations: 2,
        };
        match bpdn(&h, &y, 0.05, &cfg) {
            Err(Error::NotConverged { best, iterations, .. }) => {
                assert_eq!(best.len(), 30);
                assert!(iterations >= 2);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_gamma() {
        let h = RealMatrix::identity(2, 2);
        let y = RealVector::zeros(2);
        assert!(bpdn(&h, &y, 0.0, &SolverConfig::default()).is_err());
        assert!(bpdn(&h, &y, f64::NAN, &SolverConfig::default()).is_err());
    }
}
