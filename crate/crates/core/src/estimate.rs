//! Profile least-squares estimation of the mean parameters and OLS for the
//! variance parameters.
//!
//! The link is profiled out with a leave-one-out Nadaraya–Watson fit, so the
//! objective over `(gamma1, free gamma2)` is
//! `S = sum_i (Y_i - l(X_i) - m_hat^(-i)(W_i^T gamma2))^2`, minimized by
//! Nelder–Mead.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{leave_one_out_link, KernelConfig};
use crate::nelder_mead::{minimize, NelderMeadOptions};
use crate::types::{materialize_gamma2, Family, Identification, ModelSpec, Series, Theta, VarianceForm};

const MIN_DENSITY: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub sse: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
}

/// Profiled residual sum of squares and residuals at `theta`.
pub fn profile_objective(
    series: &Series,
    spec: &ModelSpec,
    cfg: &KernelConfig,
    theta: &Theta,
) -> Result<(f64, Vec<f64>)> {
    let gamma2 = materialize_gamma2(theta, spec)?;
    let index = series.index(&gamma2);
    let resid = series.partial_residuals(&theta.gamma1);
    let h = cfg.bandwidth(&index)?;
    let (link, dens) = leave_one_out_link(&index, &resid, h)?;
    if dens.iter().all(|f| !(*f >= MIN_DENSITY)) {
        return Err(Error::DegenerateFit(
            "leave-one-out index density vanishes at every observation".into(),
        ));
    }
    let residuals: Vec<f64> = resid.iter().zip(&link).map(|(r, m)| r - m).collect();
    let sse = residuals.iter().map(|e| e * e).sum();
    Ok((sse, residuals))
}

/// Ordinary least squares `y ~ design`, returning coefficients and classical
/// standard errors.
fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, p) = design.shape();
    if n <= p {
        return Err(Error::Collinear(format!("{n} rows for {p} regressors")));
    }
    let xtx = design.transpose() * design;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Collinear("normal equations are singular".into()))?;
    let coef = chol.solve(&(design.transpose() * y));
    let resid = y - design * &coef;
    let s2 = resid.norm_squared() / (n - p) as f64;
    let inv = chol.inverse();
    let se = DVector::from_fn(p, |k, _| (s2 * inv[(k, k)]).sqrt());
    // guard against numerically rank-deficient designs that still factor
    let diag_max = xtx.diagonal().amax();
    let diag_min = chol.l().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    if diag_min <= diag_max * 1e-14 {
        return Err(Error::Collinear("normal equations are numerically singular".into()));
    }
    Ok((coef, se))
}

/// Regression of squared residuals on the variance regressors built from
/// `y_{i-1}`; rows start at `i = 1`.
pub fn variance_ls_fit(residuals: &[f64], y: &[f64], form: VarianceForm) -> Result<VarianceFit> {
    if residuals.len() != y.len() {
        return Err(Error::Domain("residuals and response lengths differ".into()));
    }
    let lag = form.lag_depth();
    let n = y.len().saturating_sub(lag);
    if n <= VarianceForm::DIM {
        return Err(Error::Collinear(format!("{n} usable rows for {} parameters", VarianceForm::DIM)));
    }
    let mut design = DMatrix::zeros(n, VarianceForm::DIM);
    let mut target = DVector::zeros(n);
    for (row, i) in (lag..y.len()).enumerate() {
        let reg = form.regressors(y[i - 1]);
        design[(row, 0)] = reg[0];
        design[(row, 1)] = reg[1];
        target[row] = residuals[i] * residuals[i];
    }
    let (coef, se) = ols(&design, &target)?;
    Ok(VarianceFit {
        beta: coef.iter().copied().collect(),
        se: se.iter().copied().collect(),
    })
}

/// Deterministic starting point: `gamma1` from OLS of `Y` on `(1, X)`, the
/// index direction from the leading principal component of `W`.
pub fn default_init(series: &Series, spec: &ModelSpec) -> Result<Theta> {
    let n = series.len();
    let d_x = series.d_x();
    let mut design = DMatrix::from_element(n, d_x + 1, 1.0);
    design.view_mut((0, 1), (n, d_x)).copy_from(&series.x);
    let y = DVector::from_column_slice(&series.y);
    let (coef, _) = ols(&design, &y)?;
    let gamma1: Vec<f64> = coef.iter().skip(1).copied().collect();

    let means = series.w.row_mean();
    let mut centred = series.w.clone();
    for mut row in centred.row_iter_mut() {
        row -= &means;
    }
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let lead = eig.eigenvalues.imax();
    let mut dir: Vec<f64> = eig.eigenvectors.column(lead).iter().copied().collect();
    if spec.identification == Identification::FixFirst && dir[0].abs() < 1e-8 {
        dir[0] = 1.0;
    }
    let beta = vec![0.0; spec.d_beta];
    let mut theta = Theta::from_direction(gamma1, &dir, beta, spec.identification)?;
    if spec.identification == Identification::UnitNorm {
        // keep strictly inside the unit ball so the Jacobian exists
        let ns: f64 = theta.gamma2_free.iter().map(|v| v * v).sum();
        if ns >= 1.0 - 1e-9 {
            for v in theta.gamma2_free.iter_mut() {
                *v *= 0.99 / ns.sqrt();
            }
        }
    }
    Ok(theta)
}

/// Profile least-squares fit of the mean parameters from `init`. For the
/// CHPLSIM the variance parameters are then fitted by [`variance_ls_fit`] on
/// the profiled residuals.
pub fn profile_ls_fit(
    series: &Series,
    spec: &ModelSpec,
    cfg: &KernelConfig,
    init: &Theta,
) -> Result<FitResult> {
    profile_ls_fit_with(series, spec, cfg, init, NelderMeadOptions::default())
}

pub fn profile_ls_fit_with(
    series: &Series,
    spec: &ModelSpec,
    cfg: &KernelConfig,
    init: &Theta,
    opts: NelderMeadOptions,
) -> Result<FitResult> {
    spec.validate()?;
    series.check(spec)?;
    init.check(spec)?;
    let d1 = spec.d1();
    let n = series.len();
    if n < 10 * (d1 + spec.d_w) {
        return Err(Error::Domain(format!(
            "profile fit needs n >= {}, got {n}",
            10 * (d1 + spec.d_w)
        )));
    }
    let unpack = |p: &[f64]| Theta::new(p[..d1].to_vec(), p[d1..].to_vec(), init.beta.clone());
    let mut start = init.gamma1.clone();
    start.extend_from_slice(&init.gamma2_free);

    let (init_sse, _) = profile_objective(series, spec, cfg, init)?;
    if !init_sse.is_finite() {
        return Err(Error::DegenerateFit("objective is not finite at the initial point".into()));
    }
    let result = minimize(
        |p| match profile_objective(series, spec, cfg, &unpack(p)) {
            Ok((sse, _)) => sse,
            Err(_) => f64::INFINITY,
        },
        &start,
        opts,
    );
    let mut theta_hat = unpack(&result.x);
    let (sse, residuals) = profile_objective(series, spec, cfg, &theta_hat)?;
    if spec.family == Family::Chplsim {
        if let Some(form) = spec.variance_form {
            theta_hat.beta = variance_ls_fit(&residuals, &series.y, form)?.beta;
        }
    }
    Ok(FitResult {
        theta_hat,
        sse,
        residuals,
        iterations: result.evals,
        converged: result.converged,
    })
}
