//! Gaussian-kernel Nadaraya–Watson sums for the nuisance functions of the
//! profiled single-index model.
//!
//! For an evaluation point `t` and index values `t_j = W_j^T gamma2`, with
//! `u_j = (t_j - t) / h` and partial residuals `r_j = Y_j - l(X_j; gamma1)`:
//!
//! ```text
//! eta_f(t)  = (N h)^-1   sum K(u_j)
//! eta_m(t)  = (N h)^-1   sum r_j K(u_j)
//! eta_X(t)  = (N h)^-1   sum X_j K(u_j)
//! eta_W(t)  = (N h)^-1   sum W_j K(u_j)
//! eta_m'(t) = -(N h^2)^-1 [eta_f(t) sum r_j K'(u_j) - eta_m(t) sum K'(u_j)]
//! ```
//!
//! `eta_m'` is `eta_f * d/dt eta_m - eta_m * d/dt eta_f`, an estimate of
//! `eta_f^2 * m'`. Summation is direct, O(N) per evaluation point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::types::{materialize_gamma2, ModelSpec, Series, Theta};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard Gaussian kernel.
#[inline]
pub fn kernel_eval(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

#[inline]
pub fn kernel_deriv(u: f64) -> f64 {
    -u * kernel_eval(u)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    #[default]
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    /// Fixed bandwidth.
    Manual(f64),
    /// `h = n^(-1/5) / C`, `C` the sample standard deviation of the index.
    ScaledRate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub kernel: Kernel,
    pub bandwidth_rule: BandwidthRule,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kernel: Kernel::Gaussian,
            bandwidth_rule: BandwidthRule::ScaledRate,
        }
    }
}

impl KernelConfig {
    pub fn manual(h: f64) -> Self {
        KernelConfig {
            kernel: Kernel::Gaussian,
            bandwidth_rule: BandwidthRule::Manual(h),
        }
    }

    pub fn scaled_rate() -> Self {
        KernelConfig::default()
    }

    /// Bandwidth for smoothing over the given index sample.
    pub fn bandwidth(&self, index: &[f64]) -> Result<f64> {
        let h = match self.bandwidth_rule {
            BandwidthRule::Manual(h) => h,
            BandwidthRule::ScaledRate => {
                let n = index.len();
                if n < 2 {
                    return Err(Error::Config(
                        "scaled-rate bandwidth needs at least 2 index values".into(),
                    ));
                }
                let sd = sample_sd(index);
                (n as f64).powf(-0.2) / sd
            }
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive and finite, got {h}")));
        }
        Ok(h)
    }
}

pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EtaSource {
    Estimated { h: f64, leave_one_out: bool },
    Oracle,
}

/// The five nuisance functions evaluated at each observation's index value.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaProfile {
    pub index: Vec<f64>,
    pub eta_f: Vec<f64>,
    pub eta_m: Vec<f64>,
    pub eta_m_prime: Vec<f64>,
    /// `n x d1`
    pub eta_x: DMatrix<f64>,
    /// `n x d_w`
    pub eta_w: DMatrix<f64>,
    pub source: EtaSource,
}

impl EtaProfile {
    pub fn len(&self) -> usize {
        self.eta_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_f.is_empty()
    }

    /// Nonparametric link estimate `eta_m / eta_f` at each point.
    pub fn link(&self) -> Vec<f64> {
        self.eta_m
            .iter()
            .zip(&self.eta_f)
            .map(|(m, f)| m / f)
            .collect()
    }
}

/// Sample quantities the kernel sums run over.
#[derive(Clone, Debug)]
pub struct SmoothingSample {
    index: Vec<f64>,
    /// Row-major `[r_j, X_j..., W_j...]`.
    packed: Vec<f64>,
    d1: usize,
    d_w: usize,
}

impl SmoothingSample {
    pub fn new(series: &Series, theta: &Theta, spec: &ModelSpec) -> Result<Self> {
        series.check(spec)?;
        theta.check(spec)?;
        let gamma2 = materialize_gamma2(theta, spec)?;
        let index = series.index(&gamma2);
        let resid = series.partial_residuals(&theta.gamma1);
        let d1 = spec.d1();
        let d_w = spec.d_w;
        let stride = 1 + d1 + d_w;
        let mut packed = Vec::with_capacity(series.len() * stride);
        for (j, r) in resid.iter().enumerate() {
            packed.push(*r);
            // gradient of the linear form is X itself
            packed.extend(series.x.row(j).iter());
            packed.extend(series.w.row(j).iter());
        }
        Ok(SmoothingSample {
            index,
            packed,
            d1,
            d_w,
        })
    }

    pub fn index(&self) -> &[f64] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn stride(&self) -> usize {
        1 + self.d1 + self.d_w
    }

    /// Unnormalized sums at one evaluation point, skipping sample row `skip`.
    /// Layout of the result: `[sum K, sum K', sum r K', sum K*packed...]`,
    /// each without the `1/sqrt(2 pi)` factor.
    fn raw_sums(&self, t: f64, inv_h: f64, skip: Option<usize>) -> Vec<f64> {
        let p = self.stride();
        let mut acc = vec![0.0; 3 + p];
        let (head, body) = acc.split_at_mut(3);
        let mut s_k = 0.0;
        let mut s_kd = 0.0;
        let mut s_rkd = 0.0;
        for (j, (tj, row)) in self.index.iter().zip(self.packed.chunks_exact(p)).enumerate() {
            if Some(j) == skip {
                continue;
            }
            let u = (tj - t) * inv_h;
            let k = (-0.5 * u * u).exp();
            if k == 0.0 {
                continue;
            }
            let kd = -u * k;
            s_k += k;
            s_kd += kd;
            s_rkd += row[0] * kd;
            for (a, v) in body.iter_mut().zip(row) {
                *a += k * v;
            }
        }
        head[0] = s_k;
        head[1] = s_kd;
        head[2] = s_rkd;
        acc
    }

    /// Evaluates the nuisance profile at `points`. With `leave_one_out`, the
    /// points must be this sample's own index values and row `i` is dropped
    /// from the sums for point `i`.
    pub fn evaluate(&self, points: &[f64], h: f64, leave_one_out: bool) -> Result<EtaProfile> {
        self.evaluate_with(points, h, leave_one_out, false)
    }

    /// Same as [`evaluate`](Self::evaluate) but always on the calling thread.
    pub fn evaluate_sequential(
        &self,
        points: &[f64],
        h: f64,
        leave_one_out: bool,
    ) -> Result<EtaProfile> {
        self.evaluate_with(points, h, leave_one_out, true)
    }

    fn evaluate_with(
        &self,
        points: &[f64],
        h: f64,
        leave_one_out: bool,
        sequential: bool,
    ) -> Result<EtaProfile> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
        }
        let n = self.len();
        if leave_one_out {
            if n < 2 {
                return Err(Error::Domain(
                    "leave-one-out smoothing needs at least 2 observations".into(),
                ));
            }
            if points.len() != n {
                return Err(Error::Domain(
                    "leave-one-out evaluation must be at the sample's own index values".into(),
                ));
            }
        } else if n == 0 {
            return Err(Error::Domain("empty smoothing sample".into()));
        }
        let inv_h = 1.0 / h;
        let norm = if leave_one_out { (n - 1) as f64 } else { n as f64 };
        let scale = INV_SQRT_2PI / (norm * h);
        let row = |i: usize| {
            let skip = if leave_one_out { Some(i) } else { None };
            self.raw_sums(points[i], inv_h, skip)
        };
        let sums = if sequential {
            par::map_range_seq(points.len(), row)
        } else {
            par::map_range(points.len(), row)
        };

        let m = points.len();
        let (d1, d_w) = (self.d1, self.d_w);
        let mut eta_f = Vec::with_capacity(m);
        let mut eta_m = Vec::with_capacity(m);
        let mut eta_mp = Vec::with_capacity(m);
        let mut eta_x = DMatrix::zeros(m, d1);
        let mut eta_w = DMatrix::zeros(m, d_w);
        for (i, s) in sums.iter().enumerate() {
            let f = s[0] * scale;
            let em = s[3] * scale;
            // eta_f * d/dt eta_m - eta_m * d/dt eta_f; d/dt K((t_j - t)/h) = -K'(u)/h
            let mp = -(f * s[2] - em * s[1]) * scale * inv_h;
            eta_f.push(f);
            eta_m.push(em);
            eta_mp.push(mp);
            for k in 0..d1 {
                eta_x[(i, k)] = s[4 + k] * scale;
            }
            for k in 0..d_w {
                eta_w[(i, k)] = s[4 + d1 + k] * scale;
            }
        }
        Ok(EtaProfile {
            index: points.to_vec(),
            eta_f,
            eta_m,
            eta_m_prime: eta_mp,
            eta_x,
            eta_w,
            source: EtaSource::Estimated { h, leave_one_out },
        })
    }
}

/// Leave-one-out Nadaraya–Watson fit of `resid` on `index` at each sample
/// point. Returns the fitted values and the leave-one-out density estimates.
pub fn leave_one_out_link(index: &[f64], resid: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = index.len();
    if n < 2 {
        return Err(Error::Domain(
            "leave-one-out smoothing needs at least 2 observations".into(),
        ));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
    }
    let inv_h = 1.0 / h;
    let scale = INV_SQRT_2PI / ((n - 1) as f64 * h);
    let sums = par::map_range(n, |i| {
        let t = index[i];
        let (mut sk, mut srk) = (0.0, 0.0);
        let (mut gap, mut nearest) = (f64::INFINITY, 0.0);
        for (j, (tj, rj)) in index.iter().zip(resid).enumerate() {
            if j == i {
                continue;
            }
            let u = (tj - t) * inv_h;
            let k = (-0.5 * u * u).exp();
            sk += k;
            srk += k * rj;
            if u.abs() < gap {
                gap = u.abs();
                nearest = *rj;
            }
        }
        (sk, srk, nearest)
    });
    let mut link = Vec::with_capacity(n);
    let mut dens = Vec::with_capacity(n);
    for (sk, srk, nearest) in sums {
        // all weights underflowed: the Gaussian smoother's limit is the nearest neighbour
        link.push(if sk > 0.0 { srk / sk } else { nearest });
        dens.push(sk * scale);
    }
    Ok((link, dens))
}

/// Kernel estimates of the nuisance profile at the sample's own index values.
pub fn estimate_eta(
    series: &Series,
    theta: &Theta,
    spec: &ModelSpec,
    cfg: &KernelConfig,
    leave_one_out: bool,
) -> Result<EtaProfile> {
    let sample = SmoothingSample::new(series, theta, spec)?;
    let h = cfg.bandwidth(sample.index())?;
    sample.evaluate(sample.index(), h, leave_one_out)
}

/// Nuisance profile with the analytic index density and the remaining
/// functions learned on an independent training sample.
///
/// The training sums give `m`, `m'`, `E[X | t]` and `E[W | t]` as ratios to
/// the training density estimate; these are then rescaled by the supplied
/// density, e.g. `eta_m = f(t) * eta_m_train(t) / f_train(t)` and
/// `eta_m' = f(t)^2 * eta_m'_train(t) / f_train(t)^2`.
pub fn oracle_eta(
    series: &Series,
    theta: &Theta,
    spec: &ModelSpec,
    train: &Series,
    cfg: &KernelConfig,
    density: &dyn Fn(f64) -> f64,
) -> Result<EtaProfile> {
    series.check(spec)?;
    let gamma2 = materialize_gamma2(theta, spec)?;
    let points = series.index(&gamma2);
    let learned = SmoothingSample::new(train, theta, spec)?;
    let h = cfg.bandwidth(learned.index())?;
    let mut prof = learned.evaluate(&points, h, false)?;
    for i in 0..prof.len() {
        let ft = prof.eta_f[i];
        if ft <= 0.0 {
            return Err(Error::DegeneratePoint(i));
        }
        let f = density(points[i]);
        if !(f >= 0.0 && f.is_finite()) {
            return Err(Error::Config(format!(
                "index density returned {f} at t = {}",
                points[i]
            )));
        }
        let ratio = f / ft;
        prof.eta_m[i] *= ratio;
        prof.eta_m_prime[i] *= ratio * ratio;
        for v in prof.eta_x.row_mut(i).iter_mut() {
            *v *= ratio;
        }
        for v in prof.eta_w.row_mut(i).iter_mut() {
            *v *= ratio;
        }
        prof.eta_f[i] = f;
    }
    prof.source = EtaSource::Oracle;
    Ok(prof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Identification;
    use approx::assert_abs_diff_eq;

    fn toy(y: Vec<f64>, w0: Vec<f64>) -> (Series, Theta, ModelSpec) {
        let n = y.len();
        let mut w = DMatrix::zeros(n, 2);
        for i in 0..n {
            w[(i, 0)] = w0[i];
        }
        let s = Series::new(y, DMatrix::zeros(n, 0), w).unwrap();
        let spec = ModelSpec::plsim(0, 2, Identification::FixFirst);
        (s, Theta::new(vec![], vec![0.0], vec![]), spec)
    }

    #[test]
    fn kernel_values() {
        assert_abs_diff_eq!(kernel_eval(0.0), 0.3989422804, epsilon = 1e-10);
        assert_eq!(kernel_deriv(0.0), 0.0);
        // exp(-1/2) / sqrt(2 pi)
        assert_abs_diff_eq!(kernel_eval(1.0), 0.2419707245, epsilon = 1e-10);
        assert_abs_diff_eq!(kernel_deriv(2.0), -2.0 * kernel_eval(2.0), epsilon = 1e-16);
    }

    #[test]
    fn single_point_density() {
        let (s, t, spec) = toy(vec![3.0], vec![0.7]);
        let prof = estimate_eta(&s, &t, &spec, &KernelConfig::manual(0.5), false).unwrap();
        assert_abs_diff_eq!(prof.eta_f[0], kernel_eval(0.0) / 0.5, epsilon = 1e-15);
        assert!(matches!(
            estimate_eta(&s, &t, &spec, &KernelConfig::manual(0.5), true),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn two_point_hand_values() {
        let (s, t, spec) = toy(vec![0.0, 2.0], vec![0.0, 1.0]);
        let prof = estimate_eta(&s, &t, &spec, &KernelConfig::manual(1.0), false).unwrap();
        assert_abs_diff_eq!(prof.eta_f[0], 0.3204565, epsilon = 1e-7);
        assert_abs_diff_eq!(prof.eta_f[0], prof.eta_f[1], epsilon = 1e-15);
        // eta_m(0) = (0*K(0) + 2*K(1)) / 2
        assert_abs_diff_eq!(prof.eta_m[0], kernel_eval(1.0), epsilon = 1e-15);
    }

    #[test]
    fn constant_response_factors_out() {
        let w0: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let (s, t, spec) = toy(vec![2.5; 40], w0);
        for loo in [false, true] {
            let prof = estimate_eta(&s, &t, &spec, &KernelConfig::manual(0.3), loo).unwrap();
            for i in 0..40 {
                assert_abs_diff_eq!(prof.eta_m[i], 2.5 * prof.eta_f[i], epsilon = 1e-14);
                assert_abs_diff_eq!(prof.eta_m_prime[i], 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn nonpositive_bandwidth_rejected() {
        let (s, t, spec) = toy(vec![1.0, 2.0], vec![0.0, 1.0]);
        assert!(matches!(
            estimate_eta(&s, &t, &spec, &KernelConfig::manual(0.0), false),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            estimate_eta(&s, &t, &spec, &KernelConfig::manual(-1.0), false),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn leave_one_out_drops_self_term() {
        let (s, t, spec) = toy(vec![1.0, 5.0, -2.0], vec![0.0, 0.4, 1.1]);
        let full = estimate_eta(&s, &t, &spec, &KernelConfig::manual(0.6), false).unwrap();
        let loo = estimate_eta(&s, &t, &spec, &KernelConfig::manual(0.6), true).unwrap();
        for i in 0..3 {
            let self_k = kernel_eval(0.0) / 0.6;
            assert_abs_diff_eq!(
                loo.eta_f[i] * 2.0,
                full.eta_f[i] * 3.0 - self_k,
                epsilon = 1e-14
            );
            assert_abs_diff_eq!(
                loo.eta_m[i] * 2.0,
                full.eta_m[i] * 3.0 - self_k * s.y[i],
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn scaled_rate_bandwidth() {
        let idx = [1.0, 2.0, 3.0, 4.0];
        let h = KernelConfig::scaled_rate().bandwidth(&idx).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(h, 4f64.powf(-0.2) / sd, epsilon = 1e-15);
        assert!(KernelConfig::scaled_rate().bandwidth(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let w0: Vec<f64> = (0..200).map(|i| (i as f64 * 0.71).cos() * 3.0).collect();
        let y: Vec<f64> = w0.iter().map(|t| t.sin() + 0.1 * t).collect();
        let (s, t, spec) = toy(y, w0);
        let sample = SmoothingSample::new(&s, &t, &spec).unwrap();
        let a = sample.evaluate(sample.index(), 0.2, true).unwrap();
        let b = sample.evaluate_sequential(sample.index(), 0.2, true).unwrap();
        assert_eq!(a, b);
    }
}
