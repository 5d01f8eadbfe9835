//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. The Monte Carlo cells dominate the runtime (tens of minutes on a
//! single core).

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use plsim_el::chi2::chi2_sf;
use plsim_el::estimate::variance_ls_fit;
use plsim_el::harness::{run_mc, EtaMode, ExperimentConfig, Hypothesis};
use plsim_el::kernel::SmoothingSample;
use plsim_el::moments::standardized_autocovariance;
use plsim_el::simulate::{simulate_stream, stream_rng};
use plsim_el::types::{jacobian_gamma2, materialize_gamma2};
use plsim_el::{
    oracle_eta, psi, simulate, solve_lambda, ElStatus, Identification, Innovation, KernelConfig,
    MomentMatrix, ModelSpec, Series, SimDesign, SolverOptions, Theta, VarianceForm,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SEED: u64 = 20_240_501;
const TRAIN_STREAM: u64 = u64::MAX;

const SIZE_LAG1: (f64, f64) = (0.03, 0.09);
const POWER_MIN: f64 = 0.95;
const SIZE_CH1: (f64, f64) = (0.03, 0.12);
const POWER_CH0_MIN: f64 = 0.99;
const SIZE_OBSERVED_AR: (f64, f64) = (0.04, 0.10);
const SOLVER_EXACT_TOL: f64 = 1e-8;
const SOLVER_ORACLE_TOL: f64 = 1e-5;
const WILKS_MEAN: (f64, f64) = (3.7, 4.3);
const WILKS_Q95: (f64, f64) = (8.9, 10.1);
const MDS_BOUND_SCALE: f64 = 4.0;
const INDEX_VAR_TOL: f64 = 0.15;
const INNOV_MEAN_TOL: f64 = 0.01;
const INNOV_VAR_TOL: f64 = 0.02;
const ARCH_TOL: f64 = 0.02;
const CHI2_TOL: f64 = 1e-10;
const DERIV_REL_TOL: f64 = 0.02;
const ORTHO_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

fn mc_rate(test: Hypothesis, design: SimDesign, reps: usize) -> f64 {
    let cfg = ExperimentConfig::new(design, test, reps);
    let report = run_mc(&cfg).expect("Monte Carlo cell");
    let c = &report.cells[0];
    assert_eq!(c.completed, reps);
    c.rate
}

fn design51(n: usize) -> SimDesign {
    SimDesign::design51(n, Innovation::Gaussian, SEED)
}

fn size_lag1() -> Outcome {
    let rate = mc_rate(Hypothesis::Lag1, design51(2000), 1000);
    Outcome {
        pass: within(rate, SIZE_LAG1),
        detail: format!("Lag1 gaussian n=2000 1000 reps: rate {rate:.4} in {SIZE_LAG1:?}"),
    }
}

fn power_lag0_lag2() -> Outcome {
    let r0 = mc_rate(Hypothesis::Lag0, design51(2000), 500);
    let r2 = mc_rate(Hypothesis::Lag2, design51(2000), 500);
    Outcome {
        pass: r0 >= POWER_MIN && r2 >= POWER_MIN,
        detail: format!(
            "n=2000 500 reps: Lag0 rate {r0:.4}, Lag2 rate {r2:.4}, both >= {POWER_MIN}"
        ),
    }
}

fn chplsim_size_and_power() -> Outcome {
    let size = mc_rate(Hypothesis::Lag1Ch1, design51(2000), 1000);
    let power = mc_rate(Hypothesis::Lag1Ch0, design51(2000), 500);
    Outcome {
        pass: within(size, SIZE_CH1) && power >= POWER_CH0_MIN,
        detail: format!(
            "n=2000: Lag1-CH1 1000 reps rate {size:.4} in {SIZE_CH1:?}; \
             Lag1-CH0 500 reps rate {power:.4} >= {POWER_CH0_MIN}"
        ),
    }
}

fn observed_ar_size() -> Outcome {
    let design = SimDesign::design_sup_b2(8000, Innovation::Gaussian, SEED);
    let rate = mc_rate(Hypothesis::Lag1, design, 500);
    Outcome {
        pass: within(rate, SIZE_OBSERVED_AR),
        detail: format!(
            "observed AR with error, Lag1 n=8000 500 reps: rate {rate:.4} in {SIZE_OBSERVED_AR:?}"
        ),
    }
}

/// Root of the decreasing map `l -> sum psi / (1 + l psi)` by bisection.
fn bisection_lambda(psi: &[f64]) -> f64 {
    let hi_psi = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo_psi = psi.iter().cloned().fold(f64::INFINITY, f64::min);
    let g = |l: f64| psi.iter().map(|p| p / (1.0 + l * p)).sum::<f64>();
    let (mut a, mut b) = (-1.0 / hi_psi, -1.0 / lo_psi);
    let pad = 1e-12 * (b - a);
    a += pad;
    b -= pad;
    while b - a > 1e-12 {
        let mid = 0.5 * (a + b);
        if g(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn solver_exactness() -> Outcome {
    let two = MomentMatrix::from_rows(&[vec![-1.0], vec![2.0]]);
    let res = solve_lambda(&two, SolverOptions::default()).expect("two-point problem");
    let w_expected = 2.0 * (9.0f64 / 8.0).ln();
    let exact = (res.lambda[0] - 0.25).abs() < SOLVER_EXACT_TOL
        && (res.wilks - w_expected).abs() < SOLVER_EXACT_TOL;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(5..80);
        let shift = rng.random_range(-1.0..1.0);
        let psi: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + shift
            })
            .collect();
        if !(psi.iter().any(|p| *p < 0.0) && psi.iter().any(|p| *p > 0.0)) {
            continue;
        }
        let m = MomentMatrix::new(DMatrix::from_column_slice(n, 1, &psi));
        let res = solve_lambda(&m, SolverOptions::default()).expect("1-D problem");
        let err = if res.status == ElStatus::Converged {
            (res.lambda[0] - bisection_lambda(&psi)).abs()
        } else {
            f64::INFINITY
        };
        worst = worst.max(err);
        done += 1;
    }
    Outcome {
        pass: exact && worst < SOLVER_ORACLE_TOL,
        detail: format!(
            "two-point lambda {:.10} W {:.10} (expect 0.25, {w_expected:.10}); \
             200 1-D problems max |lambda - bisection| {worst:.2e}",
            res.lambda[0], res.wilks
        ),
    }
}

fn wilks_pivotality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut stats: Vec<f64> = (0..2000)
        .map(|_| {
            let rows = DMatrix::from_fn(500, 4, |_, _| rng.sample(StandardNormal));
            solve_lambda(&MomentMatrix::new(rows), SolverOptions::default())
                .expect("synthetic EL problem")
                .wilks
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let q95 = stats[(0.95 * stats.len() as f64).ceil() as usize - 1];
    Outcome {
        pass: within(mean, WILKS_MEAN) && within(q95, WILKS_Q95),
        detail: format!(
            "N(0, I4) rows n=500 2000 reps: mean W {mean:.3} in {WILKS_MEAN:?}, \
             0.95-quantile {q95:.3} in {WILKS_Q95:?}"
        ),
    }
}

fn standardized(m: &MomentMatrix) -> DMatrix<f64> {
    let means = m.column_means();
    let sds = m.column_sds();
    DMatrix::from_fn(m.n_eff(), m.dim(), |i, j| (m.psi[(i, j)] - means[j]) / sds[j])
}

fn martingale_difference() -> Outcome {
    let test = Hypothesis::Lag1;
    let spec = test.spec();
    let theta0 = test.theta0();
    let cfg = KernelConfig::scaled_rate();
    let train_design = SimDesign::design51(10_000, Innovation::Gaussian, SEED);
    let train = simulate_stream(&train_design, TRAIN_STREAM).expect("training path").series;
    let gamma2 = materialize_gamma2(&theta0, &spec).expect("direction");
    let density = train_design.index_density(&gamma2);
    let mut worst_ratio = 0.0f64;
    let mut worst_robust = 0.0f64;
    for seed in 0..20 {
        let sim = simulate(&SimDesign::design51(5000, Innovation::Gaussian, SEED + seed))
            .expect("simulation");
        let eta = oracle_eta(&sim.series, &theta0, &spec, &train, &cfg, &density)
            .expect("oracle profile");
        let m = psi(&sim.series, &theta0, &eta, &spec).expect("moments");
        let n = m.n_eff();
        let bound = MDS_BOUND_SCALE / (n as f64).sqrt();
        let z = standardized(&m);
        for lag in 1..=5 {
            let ac = standardized_autocovariance(&m, lag);
            worst_ratio = worst_ratio.max(ac.amax() / bound);
            for a in 0..m.dim() {
                for b in 0..m.dim() {
                    // heavy-tailed rows: standard error from the products themselves
                    let sq: f64 = (0..n - lag).map(|i| (z[(i, a)] * z[(i + lag, b)]).powi(2)).sum();
                    let se = sq.sqrt() / n as f64;
                    worst_robust = worst_robust.max(ac[(a, b)].abs() / se);
                }
            }
        }
    }
    Outcome {
        pass: worst_ratio < 1.0,
        detail: format!(
            "Lag1 oracle profile n=5000 20 seeds lags 1..5: max |autocov| / (4/sqrt(n_eff)) = {worst_ratio:.3}; \
             max |autocov| / product-based se = {worst_robust:.2}"
        ),
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

fn simulator_moments() -> Outcome {
    let design = SimDesign::design51(100_000, Innovation::Gaussian, SEED + 8);
    let sim = simulate(&design).expect("long path");
    let index = sim.series.index(&[1.0, 1.0, 1.0]);
    let (_, index_var) = mean_var(&index);
    let index_ok = (index_var - 88.0 / 15.0).abs() < INDEX_VAR_TOL;

    let mut innov_ok = true;
    let mut innov_detail = Vec::new();
    for innov in [Innovation::Gaussian, Innovation::Uniform, Innovation::Mixture] {
        let mut rng = stream_rng(SEED + 8, 1);
        let draws: Vec<f64> = (0..1_000_000).map(|_| innov.sample(&mut rng)).collect();
        let (m, v) = mean_var(&draws);
        innov_ok &= m.abs() < INNOV_MEAN_TOL && (v - 1.0).abs() < INNOV_VAR_TOL;
        innov_detail.push(format!("{} ({m:.4}, {v:.4})", innov.name()));
    }

    let fit = variance_ls_fit(&sim.truth.eps, &sim.series.y, VarianceForm::ArchLag1)
        .expect("variance regression");
    let arch_ok = (fit.beta[0] - 0.9).abs() < ARCH_TOL && (fit.beta[1] - 0.1).abs() < ARCH_TOL;
    Outcome {
        pass: index_ok && innov_ok && arch_ok,
        detail: format!(
            "index variance {index_var:.4} vs {:.4}; innovations {}; variance regression ({:.4}, {:.4})",
            88.0 / 15.0,
            innov_detail.join(", "),
            fit.beta[0],
            fit.beta[1]
        ),
    }
}

/// Adaptive Simpson on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rule(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = rule(fa, flm, fm, a, m);
        let right = rule(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, rule(fa, fm, fb, a, b), tol, 30)
}

/// `Gamma(k / 2)` for integer `k` from `Gamma(1/2) = sqrt(pi)` and `Gamma(1) = 1`.
fn half_integer_gamma(k: usize) -> f64 {
    let (mut g, mut x) = if k % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x < k as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Upper tail of chi-square(k) by quadrature in `u = sqrt(t)`, which removes
/// the singularity at zero for `k = 1`.
fn chi2_sf_quadrature(x: f64, k: usize) -> f64 {
    let norm = 2.0 / (2f64.powf(k as f64 / 2.0) * half_integer_gamma(k));
    let f = move |u: f64| norm * u.powi(k as i32 - 1) * (-0.5 * u * u).exp();
    let lo = x.sqrt();
    let mut total = 0.0;
    let mut a = lo;
    while a < lo + 60.0 {
        total += simpson(&f, a, a + 1.0, 1e-13);
        a += 1.0;
    }
    total
}

fn smooth_monotone_sample(n: usize) -> (Series, Theta, ModelSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let t: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y = t
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v.tanh() + 0.1 * e
        })
        .collect();
    let series = Series::new(y, DMatrix::zeros(n, 0), DMatrix::from_column_slice(n, 1, &t))
        .expect("series");
    (series, Theta::new(vec![], vec![], vec![]), ModelSpec::plsim(0, 1, Identification::FixFirst))
}

fn numerical_kernels() -> Outcome {
    let mut chi2_worst = 0.0f64;
    for df in 1..=10usize {
        let k = df as f64;
        for x in [0.05, 0.5 * k, k, 2.0 * k + 2.0, 3.0 * k + 12.0] {
            let ours = chi2_sf(x, df).expect("chi2_sf");
            chi2_worst = chi2_worst.max((ours - chi2_sf_quadrature(x, df)).abs());
        }
    }

    let (series, theta, spec) = smooth_monotone_sample(5000);
    let sample = SmoothingSample::new(&series, &theta, &spec).expect("sample");
    let h = KernelConfig::scaled_rate().bandwidth(sample.index()).expect("bandwidth");
    let step = h / 10.0;
    let points: Vec<f64> = (0..31).map(|k| -1.5 + 0.1 * k as f64).collect();
    let shift = |d: f64| points.iter().map(|t| t + d).collect::<Vec<_>>();
    let at = sample.evaluate(&points, h, false).expect("profile");
    let up = sample.evaluate(&shift(step), h, false).expect("profile");
    let dn = sample.evaluate(&shift(-step), h, false).expect("profile");
    let mut deriv_worst = 0.0f64;
    for i in 0..points.len() {
        let dm = (up.eta_m[i] - dn.eta_m[i]) / (2.0 * step);
        let df = (up.eta_f[i] - dn.eta_f[i]) / (2.0 * step);
        let fd = at.eta_f[i] * dm - at.eta_m[i] * df;
        deriv_worst = deriv_worst.max((at.eta_m_prime[i] - fd).abs() / fd.abs());
    }

    let unit = ModelSpec::plsim(0, 4, Identification::UnitNorm);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mut ortho_worst = 0.0f64;
    let mut tried = 0;
    while tried < 200 {
        let free: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        if free.iter().map(|v| v * v).sum::<f64>() >= 0.99 {
            continue;
        }
        let theta = Theta::new(vec![], free, vec![]);
        let g = materialize_gamma2(&theta, &unit).expect("direction");
        let j = jacobian_gamma2(&theta, &unit).expect("jacobian");
        for c in 0..3 {
            let dot: f64 = (0..4).map(|r| g[r] * j[(r, c)]).sum();
            ortho_worst = ortho_worst.max(dot.abs());
        }
        tried += 1;
    }

    Outcome {
        pass: chi2_worst < CHI2_TOL && deriv_worst < DERIV_REL_TOL && ortho_worst < ORTHO_TOL,
        detail: format!(
            "chi2_sf vs quadrature max err {chi2_worst:.2e} (50 points, df 1..10); \
             derivative term vs finite differences max rel err {deriv_worst:.2e}; \
             max |g2^T J2| {ortho_worst:.2e}"
        ),
    }
}

fn determinism() -> Outcome {
    let mut identical = true;
    let mut cells = Vec::new();
    for (test, mode) in [
        (Hypothesis::Lag1, EtaMode::Estim),
        (Hypothesis::Lag1Ch1, EtaMode::Estim),
        (Hypothesis::Lag1, EtaMode::Ref { train_size: 1000 }),
    ] {
        let mut cfg = ExperimentConfig::new(design51(300), test, 24);
        cfg.eta_mode = mode;
        let mut reports = Vec::new();
        for workers in [1, 2, 4] {
            cfg.workers = workers;
            reports.push(run_mc(&cfg).expect("cell").to_tsv(false));
        }
        identical &= reports.windows(2).all(|p| p[0] == p[1]);
        cells.push(format!("{} {}", test.name(), mode.name()));
    }
    Outcome {
        pass: identical,
        detail: format!("reports for [{}] byte-identical over 1, 2, 4 workers", cells.join(", ")),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("solver_exactness", solver_exactness),
        ("numerical_kernels", numerical_kernels),
        ("wilks_pivotality", wilks_pivotality),
        ("simulator_moments", simulator_moments),
        ("determinism_across_workers", determinism),
        ("martingale_difference", martingale_difference),
        ("plsim_size_lag1", size_lag1),
        ("plsim_power_lag0_lag2", power_lag0_lag2),
        ("chplsim_size_and_power", chplsim_size_and_power),
        ("observed_ar_size_n8000", observed_ar_size),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {name}: {} ({:.1}s)",
            out.detail,
            started.elapsed().as_secs_f64()
        );
        if !out.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
