//! Monte Carlo rejection rates.
//!
//! Replication `r` simulates on RNG stream `r` of the design seed; the
//! reference-mode training path uses the reserved stream `u64::MAX`. Per-
//! replication outcomes are collected in index order before tallying, so the
//! report depends only on the configuration, never on the worker count.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::el::{wilks_test, ElStatus, EtaInput};
use crate::error::{Error, Result};
use crate::harness::config::{EtaMode, ExperimentConfig};
use crate::harness::prep_ar::prep_observed_ar;
use crate::par;
use crate::simulate::{simulate_stream, Preset, SimDesign, SimOutput};
use crate::types::Series;

const TRAIN_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRecord {
    pub test: String,
    pub innovation: String,
    pub n: usize,
    pub eta_mode: String,
    pub replications: usize,
    pub completed: usize,
    pub rejections: usize,
    pub rate: f64,
    pub se: f64,
    pub hull_violations: usize,
    pub skipped: usize,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RejectionReport {
    pub cells: Vec<CellRecord>,
}

pub const TSV_COLUMNS: [&str; 11] = [
    "test",
    "innovation",
    "n",
    "eta_mode",
    "replications",
    "rejections",
    "rate",
    "se",
    "hull_violations",
    "skipped",
    "wall_time_secs",
];

impl RejectionReport {
    /// Tab-separated table, one line per cell. Wall time is only included
    /// when `timing` is set since it is the one non-reproducible field.
    pub fn to_tsv(&self, timing: bool) -> String {
        let cols = if timing { &TSV_COLUMNS[..] } else { &TSV_COLUMNS[..10] };
        let mut out = cols.join("\t");
        out.push('\n');
        for c in &self.cells {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{}",
                c.test,
                c.innovation,
                c.n,
                c.eta_mode,
                c.replications,
                c.rejections,
                c.rate,
                c.se,
                c.hull_violations,
                c.skipped
            );
            if timing {
                let _ = write!(out, "\t{:.3}", c.wall_time_secs);
            }
            out.push('\n');
        }
        out
    }
}

struct Outcome {
    rejected: bool,
    hull: bool,
}

/// Series seen by the test for one simulated path.
fn observed_series(design: &SimDesign, sim: SimOutput) -> Result<Series> {
    match design.preset {
        Preset::Design51 => Ok(sim.series),
        Preset::DesignSupB2 => {
            let r = sim
                .truth
                .r
                .ok_or_else(|| Error::Data("simulation lacks the observed path".into()))?;
            prep_observed_ar(&r)?.into_series(&sim.series.w)
        }
    }
}

/// Design with the path lengthened so the tested series has `n` rows.
fn simulation_design(design: &SimDesign) -> SimDesign {
    let mut d = design.clone();
    if d.preset == Preset::DesignSupB2 {
        d.n += 3;
    }
    d
}

fn replication(
    cfg: &ExperimentConfig,
    sim_design: &SimDesign,
    r: usize,
    train: Option<&Series>,
    density: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<Outcome> {
    let sim = simulate_stream(sim_design, r as u64)?;
    let series = observed_series(&cfg.design, sim)?;
    let spec = cfg.test.spec();
    let theta0 = cfg.test.theta0();
    let eta = match train {
        None => EtaInput::Estimated,
        Some(train) => EtaInput::Oracle { train, density },
    };
    let res = wilks_test(&series, &theta0, &spec, &cfg.kernel, eta)?;
    Ok(Outcome {
        rejected: res.rejects(cfg.alpha),
        hull: res.status == ElStatus::HullViolation,
    })
}

/// Runs one Monte Carlo cell.
pub fn run_mc(cfg: &ExperimentConfig) -> Result<RejectionReport> {
    cfg.validate()?;
    let started = Instant::now();
    let sim_design = simulation_design(&cfg.design);
    let gamma2 = cfg.design.gamma2()?;

    let train = match cfg.eta_mode {
        EtaMode::Estim => None,
        EtaMode::Ref { train_size } => {
            // the reference learns the true functions, so it uses latent data
            let mut d = cfg.design.clone();
            d.n = train_size;
            Some(simulate_stream(&d, TRAIN_STREAM)?.series)
        }
    };
    // the designs' index is Gaussian, so its density is available analytically
    let density = cfg.design.index_density(&gamma2);

    let outcomes: Vec<Result<Outcome>> = par::with_workers(cfg.workers, || {
        par::map_range(cfg.replications, |r| {
            replication(cfg, &sim_design, r, train.as_ref(), &density)
        })
    });

    let mut rejections = 0;
    let mut hull = 0;
    let mut skipped = 0;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                rejections += usize::from(o.rejected);
                hull += usize::from(o.hull);
            }
            Err(e) if cfg.skip_errors => {
                let _ = e;
                skipped += 1;
            }
            Err(e) => {
                return Err(Error::Replication {
                    replication: r,
                    source: Box::new(e),
                })
            }
        }
    }
    let completed = cfg.replications - skipped;
    let rate = if completed > 0 {
        rejections as f64 / completed as f64
    } else {
        0.0
    };
    let se = if completed > 0 {
        (rate * (1.0 - rate) / completed as f64).sqrt()
    } else {
        0.0
    };
    Ok(RejectionReport {
        cells: vec![CellRecord {
            test: cfg.test.name().to_string(),
            innovation: cfg.design.innovation.name().to_string(),
            n: cfg.design.n,
            eta_mode: cfg.eta_mode.name().to_string(),
            replications: cfg.replications,
            completed,
            rejections,
            rate,
            se,
            hull_violations: hull,
            skipped,
            wall_time_secs: started.elapsed().as_secs_f64(),
        }],
    })
}

/// Runs every cell in order and concatenates the reports.
pub fn run_table(cells: &[ExperimentConfig]) -> Result<RejectionReport> {
    let mut report = RejectionReport::default();
    for cfg in cells {
        report.cells.extend(run_mc(cfg)?.cells);
    }
    Ok(report)
}
