//! Response construction for an AR(1) path observed with a conditionally
//! heteroscedastic error: `R_i = rho R_{i-1} + u_i` with `u_i^2` following a
//! PLSIM. The squared innovations are replaced by
//! `Y~_i = (R_i - rho~ R_{i-1})^2`, `rho~` the least-squares estimate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::Series;

/// Prepared PLSIM response. Row `k` corresponds to observation
/// `k + offset` of the input path.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedAr {
    pub rho_tilde: f64,
    /// `Y~_i` for `i >= offset`.
    pub y: Vec<f64>,
    /// `(Y~_{i-1}, Y~_{i-2})` for `i >= offset`.
    pub x: DMatrix<f64>,
    pub offset: usize,
}

impl PreparedAr {
    /// Attaches index covariates given for every observation of the input path.
    pub fn into_series(self, w_full: &DMatrix<f64>) -> Result<Series> {
        let n = self.y.len();
        if w_full.nrows() != n + self.offset {
            return Err(Error::Data(format!(
                "index covariates have {} rows, path has {}",
                w_full.nrows(),
                n + self.offset
            )));
        }
        let w = w_full.rows(self.offset, n).into_owned();
        Series::new(self.y, self.x, w)
    }
}

pub fn prep_observed_ar(r: &[f64]) -> Result<PreparedAr> {
    let n = r.len();
    if n < 3 {
        return Err(Error::Domain(format!("AR preprocessing needs >= 3 observations, got {n}")));
    }
    let mean = r.iter().sum::<f64>() / n as f64;
    let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    if var == 0.0 {
        return Err(Error::Data("observed path has zero variance".into()));
    }
    let (num, den) = r.windows(2).fold((0.0, 0.0), |(num, den), p| {
        (num + p[1] * p[0], den + p[0] * p[0])
    });
    if den == 0.0 {
        return Err(Error::Data("lagged path is identically zero".into()));
    }
    let rho = num / den;
    let sq: Vec<f64> = r
        .windows(2)
        .map(|p| {
            let u = p[1] - rho * p[0];
            u * u
        })
        .collect();
    // sq[k] belongs to observation k + 1
    let offset = 3;
    let m = n - offset;
    let mut x = DMatrix::zeros(m, 2);
    let mut y = Vec::with_capacity(m);
    for (row, i) in (offset..n).enumerate() {
        y.push(sq[i - 1]);
        x[(row, 0)] = sq[i - 2];
        x[(row, 1)] = sq[i - 3];
    }
    Ok(PreparedAr {
        rho_tilde: rho,
        y,
        x,
        offset,
    })
}
