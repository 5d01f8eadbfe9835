//! Unconditional estimating functions for the PLSIM and CHPLSIM.
//!
//! The mean block is the profiled score weighted by `eta_f^4`, which clears
//! every density denominator:
//!
//! ```text
//! psi_mu = (r_i eta_f - eta_m) * J^T [ eta_f^2 (X_i eta_f - eta_X) ; eta_m' (W_i eta_f - eta_W) ]
//! ```
//!
//! The CHPLSIM appends the variance block weighted by `eta_f^2`:
//! `((r_i eta_f - eta_m)^2 - sigma2_i eta_f^2) * grad_beta sigma2_i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::EtaProfile;
use crate::types::{full_jacobian, Family, ModelSpec, Series, Theta, VarianceForm};

/// Rows of the estimating function, one per usable observation.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    /// `n_eff x d`
    pub psi: DMatrix<f64>,
    /// Original observation index of each row.
    pub row_index: Vec<usize>,
}

impl MomentMatrix {
    pub fn new(psi: DMatrix<f64>) -> Self {
        let row_index = (0..psi.nrows()).collect();
        MomentMatrix { psi, row_index }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let psi = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        MomentMatrix::new(psi)
    }

    pub fn n_eff(&self) -> usize {
        self.psi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.psi.ncols()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n_eff() as f64;
        self.psi.column_iter().map(|c| c.sum() / n).collect()
    }

    pub fn column_sds(&self) -> Vec<f64> {
        let n = self.n_eff() as f64;
        self.psi
            .column_iter()
            .map(|c| {
                let mean = c.sum() / n;
                (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

fn check_aligned(series: &Series, eta: &EtaProfile) -> Result<()> {
    if eta.len() != series.len() {
        return Err(Error::Domain(format!(
            "nuisance profile has {} points for {} observations",
            eta.len(),
            series.len()
        )));
    }
    Ok(())
}

/// Mean residual `Y_i - l(X_i) - eta_m / eta_f` at observation `i`.
pub fn g_mu(series: &Series, theta: &Theta, eta: &EtaProfile, i: usize) -> Result<f64> {
    let f = eta.eta_f[i];
    if f == 0.0 {
        return Err(Error::DegeneratePoint(i));
    }
    let lin: f64 = series
        .x
        .row(i)
        .iter()
        .zip(&theta.gamma1)
        .map(|(x, g)| x * g)
        .sum();
    Ok(series.y[i] - lin - eta.eta_m[i] / f)
}

/// Variance residual `g_mu^2 - sigma2(beta)` at observation `i >= r`.
pub fn g_sigma(
    series: &Series,
    theta: &Theta,
    eta: &EtaProfile,
    spec: &ModelSpec,
    i: usize,
) -> Result<f64> {
    let form = spec
        .variance_form
        .ok_or_else(|| Error::Config("model has no variance form".into()))?;
    if i < spec.r.max(form.lag_depth()) {
        return Err(Error::Domain(format!("observation {i} lacks {} lags", spec.r)));
    }
    let g = g_mu(series, theta, eta, i)?;
    Ok(g * g - form.value(&theta.beta, series.y[i - 1]))
}

struct RowContext<'a> {
    series: &'a Series,
    eta: &'a EtaProfile,
    jac_t: DMatrix<f64>,
    resid: Vec<f64>,
    d1: usize,
    d_w: usize,
}

impl RowContext<'_> {
    /// Returns `(r_i eta_f - eta_m, J^T grad_i)`.
    fn mean_parts(&self, i: usize) -> (f64, DVector<f64>) {
        let eta = self.eta;
        let f = eta.eta_f[i];
        let centred = self.resid[i] * f - eta.eta_m[i];
        let f2 = f * f;
        let mut grad = DVector::zeros(self.d1 + self.d_w);
        for k in 0..self.d1 {
            grad[k] = f2 * (self.series.x[(i, k)] * f - eta.eta_x[(i, k)]);
        }
        let mp = eta.eta_m_prime[i];
        for k in 0..self.d_w {
            grad[self.d1 + k] = mp * (self.series.w[(i, k)] * f - eta.eta_w[(i, k)]);
        }
        (centred, &self.jac_t * grad)
    }
}

fn build(series: &Series, theta: &Theta, eta: &EtaProfile, spec: &ModelSpec) -> Result<MomentMatrix> {
    spec.validate()?;
    series.check(spec)?;
    theta.check(spec)?;
    check_aligned(series, eta)?;
    let n = series.len();
    let r = spec.r;
    if n <= r {
        return Err(Error::Domain(format!("{n} observations cannot supply {r} lags")));
    }
    let ctx = RowContext {
        series,
        eta,
        jac_t: full_jacobian(theta, spec)?.transpose(),
        resid: series.partial_residuals(&theta.gamma1),
        d1: spec.d1(),
        d_w: spec.d_w,
    };
    let variance: Option<VarianceForm> = match spec.family {
        Family::Plsim => None,
        Family::Chplsim => spec.variance_form,
    };
    let d_mean = spec.d1() + spec.d_w - 1;
    let d = spec.moment_dim();
    let n_eff = n - r;
    let mut psi = DMatrix::zeros(n_eff, d);
    let mut row_index = Vec::with_capacity(n_eff);
    for (row, i) in (r..n).enumerate() {
        let (centred, tgrad) = ctx.mean_parts(i);
        for k in 0..d_mean {
            psi[(row, k)] = centred * tgrad[k];
        }
        if let Some(form) = variance {
            let f = eta.eta_f[i];
            let y_prev = series.y[i - 1];
            let sigma2 = form.value(&theta.beta, y_prev);
            let g = centred * centred - sigma2 * f * f;
            for (k, reg) in form.regressors(y_prev).iter().enumerate() {
                psi[(row, d_mean + k)] = g * reg;
            }
        }
        if psi.row(row).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRow(i));
        }
        row_index.push(i);
    }
    Ok(MomentMatrix { psi, row_index })
}

/// PLSIM estimating-function rows. The first `spec.r` observations are dropped.
pub fn psi_plsim(
    series: &Series,
    theta: &Theta,
    eta: &EtaProfile,
    spec: &ModelSpec,
) -> Result<MomentMatrix> {
    if spec.family != Family::Plsim {
        return Err(Error::Config("psi_plsim called with a CHPLSIM model".into()));
    }
    build(series, theta, eta, spec)
}

/// CHPLSIM estimating-function rows: mean block stacked over the variance block.
pub fn psi_chplsim(
    series: &Series,
    theta: &Theta,
    eta: &EtaProfile,
    spec: &ModelSpec,
) -> Result<MomentMatrix> {
    if spec.family != Family::Chplsim {
        return Err(Error::Config("psi_chplsim called with a PLSIM model".into()));
    }
    build(series, theta, eta, spec)
}

/// Dispatches on the model family.
pub fn psi(series: &Series, theta: &Theta, eta: &EtaProfile, spec: &ModelSpec) -> Result<MomentMatrix> {
    build(series, theta, eta, spec)
}

/// Lag-`k` cross-autocovariance of the rows after standardizing each column
/// to zero mean and unit variance. Entry `(a, b)` is the average of
/// `z_{i,a} z_{i+k,b}` over `i`.
pub fn standardized_autocovariance(psi: &MomentMatrix, lag: usize) -> DMatrix<f64> {
    let n = psi.n_eff();
    let d = psi.dim();
    let means = psi.column_means();
    let sds = psi.column_sds();
    let z = DMatrix::from_fn(n, d, |i, j| (psi.psi[(i, j)] - means[j]) / sds[j]);
    let mut out = DMatrix::zeros(d, d);
    if lag >= n {
        return out;
    }
    for i in 0..n - lag {
        for a in 0..d {
            for b in 0..d {
                out[(a, b)] += z[(i, a)] * z[(i + lag, b)];
            }
        }
    }
    out / n as f64
}
