use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::simulate::SimDesign;
use crate::types::{Identification, ModelSpec, Theta, VarianceForm};

/// Simple hypotheses of the simulation study. All fix `gamma2 = (1, 1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// PLSIM, `gamma1 = (0, 0)`.
    #[serde(rename = "Lag0")]
    Lag0,
    /// PLSIM, `gamma1 = (0.1, 0)`.
    #[serde(rename = "Lag1")]
    Lag1,
    /// PLSIM, `gamma1 = (0.1, 0.1)`.
    #[serde(rename = "Lag2")]
    Lag2,
    /// CHPLSIM, `gamma1 = (0, 0)`, `beta = (0.9, 0.1)`.
    #[serde(rename = "Lag0-CH1")]
    Lag0Ch1,
    /// CHPLSIM, `gamma1 = (0.1, 0)`, `beta = (0.9, 0.1)`.
    #[serde(rename = "Lag1-CH1")]
    Lag1Ch1,
    /// CHPLSIM, `gamma1 = (0.1, 0.1)`, `beta = (0.9, 0.1)`.
    #[serde(rename = "Lag2-CH1")]
    Lag2Ch1,
    /// CHPLSIM, `gamma1 = (0.1, 0)`, `beta = (0.9, 0)`.
    #[serde(rename = "Lag1-CH0")]
    Lag1Ch0,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 7] = [
        Hypothesis::Lag0,
        Hypothesis::Lag1,
        Hypothesis::Lag2,
        Hypothesis::Lag0Ch1,
        Hypothesis::Lag1Ch1,
        Hypothesis::Lag2Ch1,
        Hypothesis::Lag1Ch0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Hypothesis::Lag0 => "Lag0",
            Hypothesis::Lag1 => "Lag1",
            Hypothesis::Lag2 => "Lag2",
            Hypothesis::Lag0Ch1 => "Lag0-CH1",
            Hypothesis::Lag1Ch1 => "Lag1-CH1",
            Hypothesis::Lag2Ch1 => "Lag2-CH1",
            Hypothesis::Lag1Ch0 => "Lag1-CH0",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Hypothesis::ALL
            .into_iter()
            .find(|h| h.name().eq_ignore_ascii_case(s) || h.name().replace('-', "").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown test {s:?}")))
    }

    pub fn is_heteroscedastic(self) -> bool {
        !matches!(self, Hypothesis::Lag0 | Hypothesis::Lag1 | Hypothesis::Lag2)
    }

    pub fn spec(self) -> ModelSpec {
        if self.is_heteroscedastic() {
            ModelSpec::chplsim(2, 3, Identification::FixFirst, VarianceForm::ArchLag1)
        } else {
            ModelSpec::plsim(2, 3, Identification::FixFirst)
        }
    }

    pub fn theta0(self) -> Theta {
        let gamma1 = match self {
            Hypothesis::Lag0 | Hypothesis::Lag0Ch1 => vec![0.0, 0.0],
            Hypothesis::Lag1 | Hypothesis::Lag1Ch1 | Hypothesis::Lag1Ch0 => vec![0.1, 0.0],
            Hypothesis::Lag2 | Hypothesis::Lag2Ch1 => vec![0.1, 0.1],
        };
        let beta = match self {
            Hypothesis::Lag0 | Hypothesis::Lag1 | Hypothesis::Lag2 => vec![],
            Hypothesis::Lag1Ch0 => vec![0.9, 0.0],
            _ => vec![0.9, 0.1],
        };
        Theta::new(gamma1, vec![1.0, 1.0], beta)
    }
}

/// Source of the nuisance functions in a Monte Carlo cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaMode {
    /// Kernel estimates on each replication's own data.
    #[default]
    Estim,
    /// Analytic index density with the other functions learned once on an
    /// independent training path of `train_size` observations.
    Ref { train_size: usize },
}

impl EtaMode {
    pub fn name(self) -> &'static str {
        match self {
            EtaMode::Estim => "estim",
            EtaMode::Ref { .. } => "ref",
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: SimDesign,
    pub test: Hypothesis,
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub eta_mode: EtaMode,
    /// Worker threads; 0 uses the global pool.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub skip_errors: bool,
    #[serde(default)]
    pub kernel: KernelConfig,
}

impl ExperimentConfig {
    pub fn new(design: SimDesign, test: Hypothesis, replications: usize) -> Self {
        ExperimentConfig {
            design,
            test,
            replications,
            alpha: default_alpha(),
            eta_mode: EtaMode::Estim,
            workers: 0,
            skip_errors: false,
            kernel: KernelConfig::scaled_rate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let EtaMode::Ref { train_size } = self.eta_mode {
            if train_size < 10 {
                return Err(Error::Config("reference training sample needs >= 10 points".into()));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameter as written in config files: the index direction may be given in
/// full (`gamma2`) or by its free coordinates (`gamma2_free`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaInput {
    pub gamma1: Vec<f64>,
    #[serde(default)]
    pub gamma2: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma2_free: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl ThetaInput {
    pub fn resolve(&self, spec: &ModelSpec) -> Result<Theta> {
        let theta = match (&self.gamma2, &self.gamma2_free) {
            (Some(full), None) => Theta::from_direction(
                self.gamma1.clone(),
                full,
                self.beta.clone(),
                spec.identification,
            )?,
            (None, Some(free)) => Theta::new(self.gamma1.clone(), free.clone(), self.beta.clone()),
            _ => {
                return Err(Error::Config(
                    "give exactly one of gamma2 and gamma2_free".into(),
                ))
            }
        };
        theta.check(spec)?;
        Ok(theta)
    }
}

impl From<&Theta> for ThetaInput {
    fn from(t: &Theta) -> Self {
        ThetaInput {
            gamma1: t.gamma1.clone(),
            gamma2: None,
            gamma2_free: Some(t.gamma2_free.clone()),
            beta: t.beta.clone(),
        }
    }
}

/// Configuration of the single-dataset `test` and `fit` workflows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub theta0: Option<ThetaInput>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl TestConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: TestConfig = serde_json::from_str(&text)?;
        cfg.model.fill_variance_defaults();
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn theta0(&self) -> Result<Theta> {
        self.theta0
            .as_ref()
            .ok_or_else(|| Error::Config("config has no theta0".into()))?
            .resolve(&self.model)
    }
}
