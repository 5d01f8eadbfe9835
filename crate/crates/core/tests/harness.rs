use plsim_el::harness::csv_io::{read_series, write_series};
use plsim_el::harness::{prep_observed_ar, run_mc, EtaMode, ExperimentConfig, Hypothesis};
use plsim_el::{simulate, wilks_test, EtaInput, Innovation, KernelConfig, SimDesign};

fn cell(test: Hypothesis, n: usize, reps: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(SimDesign::design51(n, Innovation::Gaussian, seed), test, reps)
}

#[test]
fn reports_are_identical_across_worker_counts() {
    let mut cfg = cell(Hypothesis::Lag1Ch1, 150, 12, 4);
    let mut tsv = Vec::new();
    for workers in [1, 2, 3] {
        cfg.workers = workers;
        tsv.push(run_mc(&cfg).unwrap().to_tsv(false));
    }
    assert_eq!(tsv[0], tsv[1]);
    assert_eq!(tsv[0], tsv[2]);
}

#[test]
fn reference_mode_is_deterministic_too() {
    let mut cfg = cell(Hypothesis::Lag1, 120, 6, 5);
    cfg.eta_mode = EtaMode::Ref { train_size: 400 };
    cfg.workers = 1;
    let a = run_mc(&cfg).unwrap();
    cfg.workers = 2;
    let b = run_mc(&cfg).unwrap();
    assert_eq!(a.to_tsv(false), b.to_tsv(false));
    assert_eq!(a.cells[0].eta_mode, "ref");
}

#[test]
fn standard_error_is_binomial() {
    let report = run_mc(&cell(Hypothesis::Lag0, 150, 20, 6)).unwrap();
    let c = &report.cells[0];
    assert_eq!(c.rate, c.rejections as f64 / c.completed as f64);
    assert_eq!(c.se, (c.rate * (1.0 - c.rate) / c.completed as f64).sqrt());
}

#[test]
fn null_p_values_from_csv_dumps_are_not_piled_near_zero() {
    let test = Hypothesis::Lag1;
    let spec = test.spec();
    let mut small = 0;
    for seed in 0..10 {
        let sim = simulate(&SimDesign::design51(1000, Innovation::Gaussian, 100 + seed)).unwrap();
        let mut buf = Vec::new();
        write_series(&mut buf, &sim.series).unwrap();
        let series = read_series(buf.as_slice(), &spec).unwrap();
        assert_eq!(series, sim.series);
        let res = wilks_test(
            &series,
            &test.theta0(),
            &spec,
            &KernelConfig::scaled_rate(),
            EtaInput::Estimated,
        )
        .unwrap();
        if res.p_value < 0.1 {
            small += 1;
        }
    }
    assert!(small <= 2, "{small} of 10 p-values below 0.1");
}

#[test]
fn observed_ar_coefficient_is_consistent() {
    let design = SimDesign::design_sup_b2(4000, Innovation::Gaussian, 12);
    let sim = simulate(&design).unwrap();
    let prepared = prep_observed_ar(sim.truth.r.as_ref().unwrap()).unwrap();
    assert!((prepared.rho_tilde - 0.1).abs() <= 0.03, "{}", prepared.rho_tilde);
}

// 2 x 1000 replications at n = 2000; run with `cargo test -- --ignored`.
#[test]
#[ignore]
fn estimated_and_reference_rates_agree() {
    let estim = cell(Hypothesis::Lag1, 2000, 1000, 13);
    let mut reference = estim.clone();
    reference.eta_mode = EtaMode::Ref { train_size: 10_000 };
    let a = run_mc(&estim).unwrap().cells[0].rate;
    let b = run_mc(&reference).unwrap().cells[0].rate;
    println!("estim {a:.4} ref {b:.4}");
    assert!((a - b).abs() <= 0.02, "estim {a} ref {b}");
}
