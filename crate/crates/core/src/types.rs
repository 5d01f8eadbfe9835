//! Model descriptions, parameter bundles and the identification
//! reparametrizations of the index direction.
//!
//! Jacobians are stored as `d x (d - 1)` matrices (derivative of the full
//! parameter with respect to the free one). Gradients with respect to the full
//! parameter are mapped to the free parametrization as `J^T * grad`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(alias = "PLSIM", alias = "plsim")]
    Plsim,
    #[serde(alias = "CHPLSIM", alias = "chplsim")]
    Chplsim,
}

/// How the index direction is made identifiable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Identification {
    /// First component of the direction fixed to 1.
    #[default]
    FixFirst,
    /// Direction on the unit sphere with a nonnegative first component.
    UnitNorm,
}

/// Parametric part of the conditional mean. Only `l(X; g1) = X^T g1` is built in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearForm {
    #[default]
    Linear,
}

/// Parametric conditional variance of the error, linear in `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceForm {
    /// `beta1 + beta2 * y_{i-1}^2`
    ArchLag1,
    /// `beta1 + beta2 * ln(max(y_{i-1}^2, 1))`
    LogSquare,
}

impl VarianceForm {
    pub const DIM: usize = 2;

    /// Gradient of the variance with respect to `beta`, which is also the
    /// regressor vector since the variance is linear in `beta`.
    pub fn regressors(self, y_prev: f64) -> [f64; 2] {
        let sq = y_prev * y_prev;
        match self {
            VarianceForm::ArchLag1 => [1.0, sq],
            VarianceForm::LogSquare => [1.0, sq.max(1.0).ln()],
        }
    }

    pub fn value(self, beta: &[f64], y_prev: f64) -> f64 {
        let reg = self.regressors(y_prev);
        beta[0] * reg[0] + beta[1] * reg[1]
    }

    /// Lag depth the form needs.
    pub fn lag_depth(self) -> usize {
        1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub d_x: usize,
    pub d_w: usize,
    #[serde(default)]
    pub d_beta: usize,
    #[serde(default)]
    pub r: usize,
    #[serde(default)]
    pub identification: Identification,
    #[serde(default)]
    pub linear_form: LinearForm,
    #[serde(default)]
    pub variance_form: Option<VarianceForm>,
}

impl ModelSpec {
    pub fn plsim(d_x: usize, d_w: usize, identification: Identification) -> Self {
        ModelSpec {
            family: Family::Plsim,
            d_x,
            d_w,
            d_beta: 0,
            r: 0,
            identification,
            linear_form: LinearForm::Linear,
            variance_form: None,
        }
    }

    pub fn chplsim(
        d_x: usize,
        d_w: usize,
        identification: Identification,
        variance_form: VarianceForm,
    ) -> Self {
        ModelSpec {
            family: Family::Chplsim,
            d_x,
            d_w,
            d_beta: VarianceForm::DIM,
            r: variance_form.lag_depth(),
            identification,
            linear_form: LinearForm::Linear,
            variance_form: Some(variance_form),
        }
    }

    /// Fills `d_beta` and `r` from the variance form when they were left at 0,
    /// as happens for config files that omit them.
    pub fn fill_variance_defaults(&mut self) {
        if let Some(form) = self.variance_form {
            if self.d_beta == 0 {
                self.d_beta = VarianceForm::DIM;
            }
            if self.r == 0 {
                self.r = form.lag_depth();
            }
        }
    }

    /// Length of `gamma1`. Equal to `d_x` for the built-in linear form.
    pub fn d1(&self) -> usize {
        match self.linear_form {
            LinearForm::Linear => self.d_x,
        }
    }

    /// Number of unconditional moment conditions, `d1 + d_w - 1 + d_beta`.
    pub fn moment_dim(&self) -> usize {
        self.d1() + self.d_w - 1 + self.d_beta
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_w < 2 {
            return Err(Error::Config(format!(
                "index needs at least 2 covariates, got d_w = {}",
                self.d_w
            )));
        }
        match self.family {
            Family::Plsim => {
                if self.d_beta != 0 || self.variance_form.is_some() {
                    return Err(Error::Config(
                        "PLSIM takes no variance parameters".to_string(),
                    ));
                }
            }
            Family::Chplsim => {
                let form = self.variance_form.ok_or_else(|| {
                    Error::Config("CHPLSIM requires a variance_form".to_string())
                })?;
                if self.d_beta != VarianceForm::DIM {
                    return Err(Error::Config(format!(
                        "variance form {:?} has {} parameters, d_beta = {}",
                        form,
                        VarianceForm::DIM,
                        self.d_beta
                    )));
                }
                if self.r < form.lag_depth() {
                    return Err(Error::Config(format!(
                        "variance form {:?} needs r >= {}, got {}",
                        form,
                        form.lag_depth(),
                        self.r
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Finite-dimensional parameter in its free (identified) parametrization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub gamma1: Vec<f64>,
    pub gamma2_free: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl Theta {
    pub fn new(gamma1: Vec<f64>, gamma2_free: Vec<f64>, beta: Vec<f64>) -> Self {
        Theta {
            gamma1,
            gamma2_free,
            beta,
        }
    }

    /// Builds a parameter from a full index direction, mapping it onto the
    /// free coordinates of `identification` (rescaling or normalizing as needed).
    pub fn from_direction(
        gamma1: Vec<f64>,
        gamma2: &[f64],
        beta: Vec<f64>,
        identification: Identification,
    ) -> Result<Self> {
        if gamma2.len() < 2 {
            return Err(Error::Config("index direction needs 2+ components".into()));
        }
        let free = match identification {
            Identification::FixFirst => {
                if gamma2[0] == 0.0 {
                    return Err(Error::Domain(
                        "first index component is zero; cannot fix it to 1".into(),
                    ));
                }
                gamma2[1..].iter().map(|g| g / gamma2[0]).collect()
            }
            Identification::UnitNorm => {
                let norm = gamma2.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::Domain("zero index direction".into()));
                }
                let sign = if gamma2[0] < 0.0 { -1.0 } else { 1.0 };
                gamma2[1..].iter().map(|g| sign * g / norm).collect()
            }
        };
        Ok(Theta::new(gamma1, free, beta))
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.gamma1.len() != spec.d1() {
            return Err(Error::Config(format!(
                "gamma1 has length {}, model expects {}",
                self.gamma1.len(),
                spec.d1()
            )));
        }
        if self.gamma2_free.len() + 1 != spec.d_w {
            return Err(Error::Config(format!(
                "gamma2_free has length {}, model expects {}",
                self.gamma2_free.len(),
                spec.d_w - 1
            )));
        }
        if self.beta.len() != spec.d_beta {
            return Err(Error::Config(format!(
                "beta has length {}, model expects {}",
                self.beta.len(),
                spec.d_beta
            )));
        }
        Ok(())
    }

    fn free_norm_sq(&self) -> f64 {
        self.gamma2_free.iter().map(|g| g * g).sum()
    }
}

/// Full index direction of length `d_w` from its free coordinates.
pub fn materialize_gamma2(theta: &Theta, spec: &ModelSpec) -> Result<Vec<f64>> {
    let lead = match spec.identification {
        Identification::FixFirst => 1.0,
        Identification::UnitNorm => {
            let ns = theta.free_norm_sq();
            if ns > 1.0 {
                return Err(Error::Domain(format!(
                    "free index coordinates have norm {} > 1",
                    ns.sqrt()
                )));
            }
            (1.0 - ns).sqrt()
        }
    };
    let mut out = Vec::with_capacity(theta.gamma2_free.len() + 1);
    out.push(lead);
    out.extend_from_slice(&theta.gamma2_free);
    Ok(out)
}

/// `d_w x (d_w - 1)` derivative of the full direction with respect to the free one.
pub fn jacobian_gamma2(theta: &Theta, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let k = theta.gamma2_free.len();
    let mut jac = DMatrix::zeros(k + 1, k);
    for j in 0..k {
        jac[(j + 1, j)] = 1.0;
    }
    if spec.identification == Identification::UnitNorm {
        let ns = theta.free_norm_sq();
        if ns >= 1.0 {
            return Err(Error::Singular(format!(
                "UnitNorm Jacobian undefined at |free| = {}",
                ns.sqrt()
            )));
        }
        let lead = (1.0 - ns).sqrt();
        for j in 0..k {
            jac[(0, j)] = -theta.gamma2_free[j] / lead;
        }
    }
    Ok(jac)
}

/// Block-diagonal `(d1 + d_w) x (d1 + d_w - 1)` Jacobian of the whole mean parameter.
pub fn full_jacobian(theta: &Theta, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let d1 = spec.d1();
    let j2 = jacobian_gamma2(theta, spec)?;
    let (rows, cols) = j2.shape();
    let mut jac = DMatrix::zeros(d1 + rows, d1 + cols);
    for i in 0..d1 {
        jac[(i, i)] = 1.0;
    }
    jac.view_mut((d1, d1), (rows, cols)).copy_from(&j2);
    Ok(jac)
}

/// Observed sample: response, linear-part covariates and index covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub timestamps: Option<Vec<String>>,
}

impl Series {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || w.nrows() != n {
            return Err(Error::Data(format!(
                "row counts disagree: y {}, x {}, w {}",
                n,
                x.nrows(),
                w.nrows()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response at row {i}")));
        }
        for (name, m) in [("x", &x), ("w", &w)] {
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite {name} entry at row {}",
                    pos % n.max(1)
                )));
            }
        }
        Ok(Series {
            y,
            x,
            w,
            timestamps: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_w(&self) -> usize {
        self.w.ncols()
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.d_x() != spec.d_x || self.d_w() != spec.d_w {
            return Err(Error::Config(format!(
                "series has d_x = {}, d_w = {}; model expects {}, {}",
                self.d_x(),
                self.d_w(),
                spec.d_x,
                spec.d_w
            )));
        }
        Ok(())
    }

    /// Index values `W_i^T gamma2`.
    pub fn index(&self, gamma2: &[f64]) -> Vec<f64> {
        let g = DVector::from_column_slice(gamma2);
        (&self.w * g).iter().copied().collect()
    }

    /// Partial residuals `Y_i - l(X_i; gamma1)`.
    pub fn partial_residuals(&self, gamma1: &[f64]) -> Vec<f64> {
        let g = DVector::from_column_slice(gamma1);
        let fitted = &self.x * g;
        self.y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect()
    }

    /// Rows `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Series {
        let len = end - start;
        Series {
            y: self.y[start..end].to_vec(),
            x: self.x.rows(start, len).into_owned(),
            w: self.w.rows(start, len).into_owned(),
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
        }
    }

    pub fn x_row(&self, i: usize) -> RowDVector<f64> {
        self.x.row(i).into_owned()
    }
}
