use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plsim_el::estimate::{default_init, profile_ls_fit, variance_ls_fit};
use plsim_el::harness::csv_io::write_ar;
use plsim_el::harness::{
    prep_observed_ar, read_ar_csv, read_series_csv, run_table, write_series_csv, EtaMode,
    ExperimentConfig, Hypothesis, TestConfig, ThetaInput,
};
use plsim_el::simulate::{simulate, Innovation, SimDesign};
use plsim_el::{wilks_test, Error, EtaInput, Result};

#[derive(Parser)]
#[command(name = "plsim-el", version, about = "Empirical-likelihood tests for (CH)PLSIM time series")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Design51,
    SupB2,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnovationArg {
    Gaussian,
    Uniform,
    Mixture,
}

impl From<InnovationArg> for Innovation {
    fn from(v: InnovationArg) -> Self {
        match v {
            InnovationArg::Gaussian => Innovation::Gaussian,
            InnovationArg::Uniform => Innovation::Uniform,
            InnovationArg::Mixture => Innovation::Mixture,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a design and dump it as CSV (`r,w1..` for sup-b2).
    Simulate {
        #[arg(long, value_enum, default_value = "design51")]
        preset: PresetArg,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "gaussian")]
        innovation: InnovationArg,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// EL test of the config's theta0 on a CSV series.
    Test {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Profile least-squares fit on a CSV series.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Start from the config's theta0 instead of the default initializer.
        #[arg(long)]
        from_theta0: bool,
    },
    /// Monte Carlo rejection rates.
    Mc(McArgs),
    /// Build the PLSIM series from an observed AR(1) path (`r,w1..` CSV).
    PrepAr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        d_w: usize,
    },
}

#[derive(Args)]
struct McArgs {
    /// JSON experiment config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',')]
    innovation: Vec<InnovationArg>,
    /// Hypotheses, comma separated (Lag0, Lag1, Lag2, Lag0-CH1, Lag1-CH1, Lag2-CH1, Lag1-CH0).
    #[arg(long, value_delimiter = ',')]
    tests: Vec<String>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `estim` or `ref`.
    #[arg(long, value_delimiter = ',')]
    eta_mode: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    train_size: usize,
    #[arg(long)]
    skip_errors: bool,
    /// Append wall time per cell (makes the report non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn design_for(preset: PresetArg, n: usize, innovation: Innovation, seed: u64) -> SimDesign {
    match preset {
        PresetArg::Design51 => SimDesign::design51(n, innovation, seed),
        PresetArg::SupB2 => SimDesign::design_sup_b2(n, innovation, seed),
    }
}

fn cmd_simulate(
    common: &Common,
    preset: PresetArg,
    n: usize,
    innovation: InnovationArg,
    burn_in: Option<usize>,
) -> Result<()> {
    let mut design = design_for(preset, n, innovation.into(), common.seed.unwrap_or(0));
    if let Some(b) = burn_in {
        design.burn_in = b;
    }
    let sim = simulate(&design)?;
    let mut buf = Vec::new();
    match preset {
        PresetArg::Design51 => plsim_el::harness::csv_io::write_series(&mut buf, &sim.series)?,
        PresetArg::SupB2 => {
            let r = sim.truth.r.as_deref().unwrap_or_default();
            write_ar(&mut buf, r, &sim.series.w)?;
        }
    }
    match &common.out {
        Some(p) => std::fs::write(p, buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn cmd_test(common: &Common, config: &Path, data: &Path) -> Result<()> {
    let cfg = TestConfig::from_json_file(config)?;
    let theta0 = cfg.theta0()?;
    let series = read_series_csv(data, &cfg.model)?;
    let res = wilks_test(&series, &theta0, &cfg.model, &cfg.kernel, EtaInput::Estimated)?;
    let mut out = String::new();
    let _ = writeln!(out, "n\t{}", series.len());
    let _ = writeln!(out, "n_eff\t{}", res.weights.len());
    let _ = writeln!(out, "wilks\t{:.6}", res.wilks);
    let _ = writeln!(out, "df\t{}", res.df);
    let _ = writeln!(out, "p_value\t{:.6}", res.p_value);
    let _ = writeln!(out, "reject\t{}", res.rejects(cfg.alpha));
    let _ = writeln!(out, "status\t{:?}", res.status);
    let _ = writeln!(out, "iterations\t{}", res.iterations);
    for (k, l) in res.lambda.iter().enumerate() {
        let _ = writeln!(out, "lambda{}\t{:.6e}", k + 1, l);
    }
    emit(&common.out, &out)
}

fn cmd_fit(common: &Common, config: &Path, data: &Path, from_theta0: bool) -> Result<()> {
    let cfg = TestConfig::from_json_file(config)?;
    let series = read_series_csv(data, &cfg.model)?;
    let init = if from_theta0 {
        cfg.theta0()?
    } else {
        default_init(&series, &cfg.model)?
    };
    let fit = profile_ls_fit(&series, &cfg.model, &cfg.kernel, &init)?;
    let gamma2 = plsim_el::types::materialize_gamma2(&fit.theta_hat, &cfg.model)?;
    let variance = match cfg.model.variance_form {
        Some(form) => Some(variance_ls_fit(&fit.residuals, &series.y, form)?),
        None => None,
    };
    let json = serde_json::json!({
        "theta": ThetaInput::from(&fit.theta_hat),
        "gamma2": gamma2,
        "sse": fit.sse,
        "evaluations": fit.iterations,
        "converged": fit.converged,
        "variance_se": variance.map(|v| v.se),
    });
    let mut text = serde_json::to_string_pretty(&json).map_err(Error::from)?;
    text.push('\n');
    emit(&common.out, &text)
}

fn parse_mode(s: &str, train_size: usize) -> Result<EtaMode> {
    match s.to_ascii_lowercase().as_str() {
        "estim" => Ok(EtaMode::Estim),
        "ref" => Ok(EtaMode::Ref { train_size }),
        other => Err(Error::Config(format!("unknown eta mode {other:?}"))),
    }
}

fn cmd_mc(common: &Common, args: &McArgs) -> Result<()> {
    let base = match &args.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => {
            let preset = args.preset.unwrap_or(PresetArg::Design51);
            let n = args.n.first().copied().unwrap_or(500);
            ExperimentConfig::new(
                design_for(preset, n, Innovation::Gaussian, 0),
                Hypothesis::Lag1,
                args.replications.unwrap_or(100),
            )
        }
    };
    let mut base = base;
    if let Some(p) = args.preset {
        let seed = base.design.seed;
        base.design = design_for(p, base.design.n, base.design.innovation, seed);
    }
    if let Some(seed) = common.seed {
        base.design.seed = seed;
    }
    if let Some(w) = common.workers {
        base.workers = w;
    }
    if let Some(r) = args.replications {
        base.replications = r;
    }
    if let Some(a) = args.alpha {
        base.alpha = a;
    }
    if args.skip_errors {
        base.skip_errors = true;
    }
    let tests = if args.tests.is_empty() {
        vec![base.test]
    } else {
        args.tests.iter().map(|t| Hypothesis::parse(t)).collect::<Result<_>>()?
    };
    let innovations: Vec<Innovation> = if args.innovation.is_empty() {
        vec![base.design.innovation]
    } else {
        args.innovation.iter().map(|i| (*i).into()).collect()
    };
    let ns = if args.n.is_empty() { vec![base.design.n] } else { args.n.clone() };
    let modes = if args.eta_mode.is_empty() {
        vec![base.eta_mode]
    } else {
        args.eta_mode
            .iter()
            .map(|m| parse_mode(m, args.train_size))
            .collect::<Result<_>>()?
    };

    let mut cells = Vec::new();
    for test in &tests {
        for innovation in &innovations {
            for n in &ns {
                for mode in &modes {
                    let mut cfg = base.clone();
                    cfg.test = *test;
                    cfg.design.innovation = *innovation;
                    cfg.design.n = *n;
                    cfg.eta_mode = *mode;
                    cfg.validate()?;
                    cells.push(cfg);
                }
            }
        }
    }
    let report = run_table(&cells)?;
    emit(&common.out, &report.to_tsv(args.timing))
}

fn cmd_prep_ar(common: &Common, data: &Path, d_w: usize) -> Result<()> {
    let (r, w) = read_ar_csv(data, d_w)?;
    let prepared = prep_observed_ar(&r)?;
    eprintln!("rho_tilde\t{:.6}", prepared.rho_tilde);
    let series = prepared.into_series(&w)?;
    match &common.out {
        Some(p) => write_series_csv(p, &series),
        None => plsim_el::harness::csv_io::write_series(std::io::stdout(), &series),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Simulate {
            preset,
            n,
            innovation,
            burn_in,
        } => cmd_simulate(common, *preset, *n, *innovation, *burn_in),
        Command::Test { config, data } => cmd_test(common, config, data),
        Command::Fit {
            config,
            data,
            from_theta0,
        } => cmd_fit(common, config, data, *from_theta0),
        Command::Mc(args) => cmd_mc(common, args),
        Command::PrepAr { data, d_w } => cmd_prep_ar(common, data, *d_w),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
