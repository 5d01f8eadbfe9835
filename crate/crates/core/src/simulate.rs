//! Sample paths of the experimental designs.
//!
//! Both presets share the index covariates: a Gaussian VAR(1)
//! `W_i = rho_w W_{i-1} + N(0, S)` with `S_kl = 0.5^|k-l|`, started from its
//! stationary law `N(0, S / (1 - rho_w^2))`.
//!
//! * `Design51`: `Y_i = g11 Y_{i-1} + g12 Y_{i-2} + m(W_i^T g2) + sigma_i zeta_i`,
//!   `m(u) = 0.75 sin^2(pi u)`, `sigma_i^2 = b1 + b2 Y_{i-1}^2`, `X_i = (Y_{i-1}, Y_{i-2})`.
//! * `DesignSupB2`: `mu_i = g11 U_{i-1}^2 + g12 U_{i-2}^2 + 0.25 + 0.75 sin^2(pi W_i^T g2)`,
//!   `u_i = sqrt(mu_i) nu_i` and the observed path `R_i = rho0 R_{i-1} + u_i`.
//!
//! Every draw comes from a ChaCha8 stream: the master seed fixes the key and
//! the replication index selects the stream, so replications are independent
//! and reproducible in any execution order.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{materialize_gamma2, Identification, ModelSpec, Series, Theta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Design51,
    DesignSupB2,
}

/// Standardized innovation law (mean 0, variance 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    #[serde(alias = "Gaussian")]
    Gaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    #[serde(alias = "Uniform")]
    Uniform,
    /// `0.5 N(-1/sqrt 6, 1/6) + 0.5 N(1/sqrt 6, 3/2)`.
    #[serde(alias = "Mixture")]
    Mixture,
}

impl Innovation {
    pub fn name(self) -> &'static str {
        match self {
            Innovation::Gaussian => "gaussian",
            Innovation::Uniform => "uniform",
            Innovation::Mixture => "mixture",
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Innovation::Gaussian => rng.sample(StandardNormal),
            Innovation::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            Innovation::Mixture => {
                let m = 1.0 / 6f64.sqrt();
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < 0.5 {
                    -m + (1.0f64 / 6.0).sqrt() * z
                } else {
                    m + 1.5f64.sqrt() * z
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub preset: Preset,
    pub n: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub innovation: Innovation,
    /// True parameter; the index direction is read with `identification`.
    pub theta_true: Theta,
    #[serde(default)]
    pub identification: Identification,
    #[serde(default = "default_rho_w")]
    pub rho_w: f64,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    500
}
fn default_rho_w() -> f64 {
    0.25
}
fn default_rho0() -> f64 {
    0.1
}

impl SimDesign {
    /// Conditionally heteroscedastic lag-1 design:
    /// `g1 = (0.1, 0)`, `g2 = (1, 1, 1)`, `beta = (0.9, 0.1)`.
    pub fn design51(n: usize, innovation: Innovation, seed: u64) -> Self {
        SimDesign {
            preset: Preset::Design51,
            n,
            burn_in: default_burn_in(),
            innovation,
            theta_true: Theta::new(vec![0.1, 0.0], vec![1.0, 1.0], vec![0.9, 0.1]),
            identification: Identification::FixFirst,
            rho_w: default_rho_w(),
            rho0: default_rho0(),
            seed,
        }
    }

    /// AR(1) observed with a semiparametric ARCH-type error:
    /// `g1 = (0.1, 0)`, `g2 = (1, 1, 1)`, `rho0 = 0.1`.
    pub fn design_sup_b2(n: usize, innovation: Innovation, seed: u64) -> Self {
        SimDesign {
            preset: Preset::DesignSupB2,
            n,
            burn_in: default_burn_in(),
            innovation,
            theta_true: Theta::new(vec![0.1, 0.0], vec![1.0, 1.0], vec![]),
            identification: Identification::FixFirst,
            rho_w: default_rho_w(),
            rho0: default_rho0(),
            seed,
        }
    }

    pub fn d_w(&self) -> usize {
        self.theta_true.gamma2_free.len() + 1
    }

    pub fn gamma2(&self) -> Result<Vec<f64>> {
        let spec = ModelSpec::plsim(self.theta_true.gamma1.len(), self.d_w(), self.identification);
        materialize_gamma2(&self.theta_true, &spec)
    }

    /// Innovation covariance `S` of the index covariates.
    pub fn w_innovation_cov(&self) -> DMatrix<f64> {
        let d = self.d_w();
        DMatrix::from_fn(d, d, |k, l| 0.5f64.powi((k as i32 - l as i32).abs()))
    }

    /// Stationary variance of the index `W_i^T gamma2 / (1 - rho_w^2)`.
    pub fn index_variance(&self, gamma2: &[f64]) -> f64 {
        let g = DVector::from_column_slice(gamma2);
        let q = (g.transpose() * self.w_innovation_cov() * &g)[(0, 0)];
        q / (1.0 - self.rho_w * self.rho_w)
    }

    /// Density of the stationary (centred Gaussian) index law for direction `gamma2`.
    pub fn index_density(&self, gamma2: &[f64]) -> impl Fn(f64) -> f64 + Send + Sync {
        let var = self.index_variance(gamma2);
        let c = 1.0 / (2.0 * PI * var).sqrt();
        move |t: f64| c * (-0.5 * t * t / var).exp()
    }

    /// Stability condition for the presets: `|g11| + |g12| + sqrt(b2) < 1`, `|rho_w| < 1`.
    pub fn is_ergodic(&self) -> bool {
        let g = &self.theta_true.gamma1;
        let lin: f64 = g.iter().take(2).map(|v| v.abs()).sum();
        let arch = self.theta_true.beta.get(1).map_or(0.0, |b| b.abs().sqrt());
        lin + arch < 1.0 && self.rho_w.abs() < 1.0 && self.rho0.abs() < 1.0
    }

    fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!("simulation needs n >= 10, got {}", self.n)));
        }
        if self.theta_true.gamma1.len() != 2 {
            return Err(Error::Config("presets use two lagged regressors".into()));
        }
        if self.preset == Preset::Design51 && !matches!(self.theta_true.beta.len(), 0 | 2) {
            return Err(Error::Config("Design51 takes beta = (b1, b2) or none".into()));
        }
        if self.rho_w.abs() >= 1.0 {
            return Err(Error::Config(format!("rho_w = {} is not stationary", self.rho_w)));
        }
        Ok(())
    }
}

/// Latent quantities of a simulated path.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    /// Mean-equation errors.
    pub eps: Vec<f64>,
    /// Conditional variance of `eps` (Design51) or conditional mean `mu_i` (DesignSupB2).
    pub sigma2: Vec<f64>,
    /// `u_i` (DesignSupB2 only).
    pub u: Option<Vec<f64>>,
    /// Observed AR path `R_i` (DesignSupB2 only).
    pub r: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    /// For Design51 the observed series; for DesignSupB2 the latent
    /// `(U_i^2, (U_{i-1}^2, U_{i-2}^2), W_i)` series.
    pub series: Series,
    pub truth: Truth,
}

/// RNG for replication `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Link of the Design51 mean.
pub fn link_design51(u: f64) -> f64 {
    let s = (PI * u).sin();
    0.75 * s * s
}

/// Link of the DesignSupB2 conditional mean of `U^2`.
pub fn link_sup_b2(u: f64) -> f64 {
    0.25 + link_design51(u)
}

struct WProcess {
    rho: f64,
    chol: DMatrix<f64>,
    state: DVector<f64>,
}

impl WProcess {
    fn new<R: Rng>(design: &SimDesign, rng: &mut R) -> Result<Self> {
        let d = design.d_w();
        let s = design.w_innovation_cov();
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Config("index innovation covariance is not positive definite".into()))?
            .l();
        let z = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        let state = (&chol * z) / (1.0 - design.rho_w * design.rho_w).sqrt();
        Ok(WProcess {
            rho: design.rho_w,
            chol,
            state,
        })
    }

    fn step<R: Rng>(&mut self, rng: &mut R) -> &DVector<f64> {
        let d = self.state.len();
        let z = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        self.state = &self.state * self.rho + &self.chol * z;
        &self.state
    }
}

/// Simulates the design on stream 0.
pub fn simulate(design: &SimDesign) -> Result<SimOutput> {
    simulate_stream(design, 0)
}

/// Simulates the design on the given replication stream.
pub fn simulate_stream(design: &SimDesign, stream: u64) -> Result<SimOutput> {
    let mut rng = stream_rng(design.seed, stream);
    simulate_with(design, &mut rng)
}

pub fn simulate_with<R: Rng>(design: &SimDesign, rng: &mut R) -> Result<SimOutput> {
    design.validate()?;
    let gamma2 = DVector::from_vec(design.gamma2()?);
    let g1 = &design.theta_true.gamma1;
    let (g11, g12) = (g1[0], g1[1]);
    let n = design.n;
    let d_w = design.d_w();
    let total = design.burn_in + n;

    let mut wp = WProcess::new(design, rng)?;
    let mut y = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, 2);
    let mut w = DMatrix::zeros(n, d_w);
    let mut eps = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    let mut us = Vec::new();
    let mut rs = Vec::new();

    // lagged state, started at zero
    let (mut lag1, mut lag2) = (0.0, 0.0);
    let mut r_prev = 0.0;
    for step in 0..total {
        let wi = wp.step(rng).clone();
        let t = wi.dot(&gamma2);
        let zeta = design.innovation.sample(rng);
        let (value, e, s2, extra) = match design.preset {
            Preset::Design51 => {
                let s2 = match design.theta_true.beta.as_slice() {
                    [b1, b2] => b1 + b2 * lag1 * lag1,
                    _ => 1.0,
                };
                let e = s2.sqrt() * zeta;
                (g11 * lag1 + g12 * lag2 + link_design51(t) + e, e, s2, None)
            }
            Preset::DesignSupB2 => {
                let mu = g11 * lag1 + g12 * lag2 + link_sup_b2(t);
                let u = mu.sqrt() * zeta;
                let r = design.rho0 * r_prev + u;
                r_prev = r;
                (u * u, mu * (zeta * zeta - 1.0), mu, Some((u, r)))
            }
        };
        if step >= design.burn_in {
            let i = step - design.burn_in;
            y.push(value);
            x[(i, 0)] = lag1;
            x[(i, 1)] = lag2;
            w.row_mut(i).copy_from(&wi.transpose());
            eps.push(e);
            sigma2.push(s2);
            if let Some((u, r)) = extra {
                us.push(u);
                rs.push(r);
            }
        }
        lag2 = lag1;
        lag1 = value;
    }
    let (u, r) = match design.preset {
        Preset::Design51 => (None, None),
        Preset::DesignSupB2 => (Some(us), Some(rs)),
    };
    Ok(SimOutput {
        series: Series::new(y, x, w)?,
        truth: Truth { eps, sigma2, u, r },
    })
}
