//! Empirical-likelihood dual solver and the Wilks test built on it.
//!
//! The multiplier maximizes the concave dual `sum log*(1 + lambda^T psi_i)`,
//! where `log*` is `ln` above `1/n` and its second-order Taylor expansion
//! below, so the objective is finite everywhere. When zero lies outside the
//! convex hull of the rows the dual is unbounded and the Newton iterates run
//! off; that is reported as [`ElStatus::HullViolation`].

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chi2::chi2_sf;
use crate::error::{Error, Result};
use crate::kernel::{estimate_eta, oracle_eta, KernelConfig};
use crate::moments::{psi, MomentMatrix};
use crate::types::{ModelSpec, Series, Theta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ElStatus {
    Converged,
    HullViolation,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElResult {
    pub lambda: Vec<f64>,
    /// `sum ln(1 + lambda^T psi_i)`
    pub ell_n: f64,
    /// `2 * ell_n`
    pub wilks: f64,
    pub df: usize,
    pub p_value: f64,
    /// `pi_i = 1 / (n (1 + lambda^T psi_i))`
    pub weights: Vec<f64>,
    pub status: ElStatus,
    pub iterations: usize,
    /// Max-norm of `sum psi_i / (1 + lambda^T psi_i)` with columns scaled to unit RMS.
    pub gradient_norm: f64,
}

impl ElResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Value, first and second derivative of the extended logarithm.
#[inline]
fn log_star(z: f64, eps: f64) -> (f64, f64, f64) {
    if z >= eps {
        (z.ln(), 1.0 / z, -1.0 / (z * z))
    } else {
        let dz = z - eps;
        let e2 = eps * eps;
        (
            eps.ln() + dz / eps - dz * dz / (2.0 * e2),
            1.0 / eps - dz / e2,
            -1.0 / e2,
        )
    }
}

struct Scaled {
    rows: Vec<DVector<f64>>,
    scale: Vec<f64>,
}

fn scale_columns(m: &MomentMatrix) -> Result<Scaled> {
    let n = m.n_eff() as f64;
    let scale: Vec<f64> = m
        .psi
        .column_iter()
        .map(|c| (c.norm_squared() / n).sqrt())
        .collect();
    if let Some(k) = scale.iter().position(|s| *s == 0.0 || !s.is_finite()) {
        return Err(Error::DegenerateVariance(format!("moment column {k} is identically zero")));
    }
    let rows = m
        .psi
        .row_iter()
        .map(|r| DVector::from_iterator(r.len(), r.iter().zip(&scale).map(|(v, s)| v / s)))
        .collect();
    Ok(Scaled { rows, scale })
}

fn objective(rows: &[DVector<f64>], lambda: &DVector<f64>, eps: f64) -> f64 {
    rows.iter().map(|r| log_star(1.0 + lambda.dot(r), eps).0).sum()
}

/// `n^-1 sum psi_i psi_i^T`.
pub fn moment_covariance(m: &MomentMatrix) -> DMatrix<f64> {
    m.psi.transpose() * &m.psi / m.n_eff() as f64
}

/// Solves for the Lagrange multiplier and assembles the test statistic.
pub fn solve_lambda(m: &MomentMatrix, opts: SolverOptions) -> Result<ElResult> {
    let n = m.n_eff();
    let d = m.dim();
    if n <= d {
        return Err(Error::UnderDetermined { n_eff: n, dim: d });
    }
    if let Some(pos) = m.psi.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteRow(m.row_index.get(pos % n).copied().unwrap_or(pos % n)));
    }
    let sc = scale_columns(m)?;
    let rows = &sc.rows;

    let gram = rows.iter().fold(DMatrix::zeros(d, d), |acc, r| acc + r * r.transpose())
        / n as f64;
    let min_eig = gram.clone().symmetric_eigen().eigenvalues.min();
    if !(min_eig > 1e-12) {
        return Err(Error::DegenerateVariance(format!(
            "smallest eigenvalue of the scaled moment covariance is {min_eig:e}"
        )));
    }

    let eps = 1.0 / n as f64;
    let max_row = rows.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let diverged = |l: &DVector<f64>| l.norm() * max_row > 1e8;

    let mut lambda = DVector::zeros(d);
    let mut value = objective(rows, &lambda, eps);
    let mut status = ElStatus::MaxIter;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        iterations = iter;
        let mut grad = DVector::zeros(d);
        let mut neg_hess = DMatrix::zeros(d, d);
        for r in rows {
            let (_, d1, d2) = log_star(1.0 + lambda.dot(r), eps);
            grad.axpy(d1, r, 1.0);
            neg_hess.syger(-d2, r, r, 1.0);
        }
        grad_norm = grad.amax();
        if grad_norm <= opts.tol * n as f64 {
            status = ElStatus::Converged;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        let chol = neg_hess.cholesky().ok_or_else(|| {
            Error::DegenerateVariance("dual Hessian lost positive definiteness".into())
        })?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand = &lambda + &step * t;
            let v = objective(rows, &cand, eps);
            if v > value {
                lambda = cand;
                value = v;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if diverged(&lambda) {
            status = ElStatus::HullViolation;
            break;
        }
        if !improved {
            // no ascent possible at machine precision
            status = if grad_norm <= 1e3 * opts.tol * n as f64 {
                ElStatus::Converged
            } else {
                ElStatus::MaxIter
            };
            break;
        }
    }

    let lambda_orig: Vec<f64> = lambda.iter().zip(&sc.scale).map(|(l, s)| l / s).collect();
    if status == ElStatus::HullViolation {
        return Ok(ElResult {
            lambda: lambda_orig,
            ell_n: f64::INFINITY,
            wilks: f64::INFINITY,
            df: d,
            p_value: 0.0,
            weights: vec![0.0; n],
            status,
            iterations,
            gradient_norm: grad_norm,
        });
    }
    let z: Vec<f64> = rows.iter().map(|r| 1.0 + lambda.dot(r)).collect();
    if z.iter().any(|zi| *zi <= 0.0) {
        return Ok(ElResult {
            lambda: lambda_orig,
            ell_n: f64::INFINITY,
            wilks: f64::INFINITY,
            df: d,
            p_value: 0.0,
            weights: vec![0.0; n],
            status: ElStatus::HullViolation,
            iterations,
            gradient_norm: grad_norm,
        });
    }
    let ell_n: f64 = z.iter().map(|zi| zi.ln()).sum();
    let wilks = 2.0 * ell_n;
    let weights = z.iter().map(|zi| 1.0 / (n as f64 * zi)).collect();
    Ok(ElResult {
        lambda: lambda_orig,
        ell_n,
        wilks,
        df: d,
        p_value: chi2_sf(wilks.max(0.0), d)?,
        weights,
        status,
        iterations,
        gradient_norm: grad_norm,
    })
}

/// How the nuisance profile is obtained for a test.
pub enum EtaInput<'a> {
    /// Full-sample kernel estimates on the tested data.
    Estimated,
    /// Analytic index density plus functions learned on an independent sample.
    Oracle {
        train: &'a Series,
        density: &'a dyn Fn(f64) -> f64,
    },
}

/// EL test of the simple hypothesis `theta = theta0`.
pub fn wilks_test(
    series: &Series,
    theta0: &Theta,
    spec: &ModelSpec,
    cfg: &KernelConfig,
    eta: EtaInput<'_>,
) -> Result<ElResult> {
    spec.validate()?;
    let profile = match eta {
        EtaInput::Estimated => estimate_eta(series, theta0, spec, cfg, false)?,
        EtaInput::Oracle { train, density } => {
            oracle_eta(series, theta0, spec, train, cfg, density)?
        }
    };
    let moments = psi(series, theta0, &profile, spec)?;
    solve_lambda(&moments, SolverOptions::default())
}
