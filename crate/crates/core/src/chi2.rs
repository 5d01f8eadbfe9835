//! Chi-squared survival function via the regularized upper incomplete gamma function.

use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// `P(X > x)` for `X ~ chi^2_df`.
pub fn chi2_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("chi-squared needs df >= 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("chi-squared statistic must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}
