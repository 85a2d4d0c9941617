use fdx_core::simharness::{gen_hierarchical_with, preset_configs, Preset};
use fdx_core::{
    compute_metrics, gen_equicorr, gen_hierarchical, gen_iid, run_experiment, ExperimentConfig,
    FdxLevel, Procedure, Scenario,
};

fn pair_correlation(draw: impl Fn(u64) -> Option<(f64, f64)>, n: u64) -> f64 {
    let pairs: Vec<(f64, f64)> = (0..n).filter_map(draw).collect();
    let n = pairs.len();
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>() / n as f64;
    let (ma, mb) = (mean(&|p| p.0), mean(&|p| p.1));
    let cov = mean(&|p| (p.0 - ma) * (p.1 - mb));
    let va = mean(&|p| (p.0 - ma).powi(2));
    let vb = mean(&|p| (p.1 - mb).powi(2));
    cov / (va * vb).sqrt()
}

#[test]
fn equicorrelated_pairs_have_the_target_correlation() {
    let rho = 0.4;
    let c = pair_correlation(
        |s| {
            let d = gen_equicorr(2, 0.0, 0.0, rho, s).unwrap();
            Some((d.z[0], d.z[1]))
        },
        20_000,
    );
    assert!((c - rho).abs() < 0.03, "correlation {c}");
}

#[test]
fn hierarchical_null_correlation() {
    let c = pair_correlation(
        |s| {
            let d = gen_hierarchical(2, s).unwrap();
            Some((d.z[0], d.z[1]))
        },
        200_000,
    );
    assert!((c - 0.0033).abs() < 0.01, "correlation {c}");
    // Null pairs share sqrt(100) * mu0 with variance 1/3: correlation 0.25.
    let c100 = pair_correlation(
        |s| {
            let d = gen_hierarchical_with(2, 100, s).unwrap();
            (!d.theta[0] && !d.theta[1]).then(|| (d.z[0], d.z[1]))
        },
        30_000,
    );
    assert!(
        (c100 - 0.25).abs() < 0.03,
        "null correlation with 100 observations {c100}"
    );
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(
        gen_iid(500, 0.2, -2.0, 9).unwrap(),
        gen_iid(500, 0.2, -2.0, 9).unwrap()
    );
    assert_eq!(
        gen_equicorr(500, 0.2, -2.0, 0.5, 9).unwrap(),
        gen_equicorr(500, 0.2, -2.0, 0.5, 9).unwrap()
    );
    assert_eq!(
        gen_hierarchical(500, 9).unwrap(),
        gen_hierarchical(500, 9).unwrap()
    );
    assert_ne!(
        gen_iid(500, 0.2, -2.0, 9).unwrap().z,
        gen_iid(500, 0.2, -2.0, 10).unwrap().z
    );
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig::new(
        Scenario::Iid {
            m: 800,
            pi: 0.2,
            mu: -2.0,
        },
        vec![
            Procedure::Proc2Oracle,
            Procedure::Proc2EmpiricalNull,
            Procedure::Bh,
            Procedure::Gr,
        ],
        FdxLevel::new(0.1, 0.05).unwrap(),
    )
    .with_reps(40)
    .with_seed(77);
    let one = run_experiment(&cfg.clone().with_threads(1)).unwrap();
    let four = run_experiment(&cfg.with_threads(4)).unwrap();
    assert_eq!(one.rows, four.rows);
    assert_eq!(one.exclusions, four.exclusions);
}

#[test]
fn no_signal_means_fdp_equals_exceedance() {
    let rejected = [0usize, 3];
    let theta = vec![false; 10];
    let m = compute_metrics(&rejected, &theta, 0.05).unwrap();
    assert_eq!(m.fdp, 1.0);
    assert!(m.exceeded);
    assert_eq!(m.tp, 0);
}

#[test]
fn oracle_procedure2_is_valid_on_table1_rows() {
    for cfg in preset_configs(Preset::Table1, Some(400), 3, 1) {
        let cfg = ExperimentConfig {
            procedures: vec![Procedure::Proc2Oracle],
            ..cfg
        };
        let report = run_experiment(&cfg).unwrap();
        let row = report.row(Procedure::Proc2Oracle).unwrap();
        let alpha = cfg.level.alpha();
        let bound = alpha + 3.0 * (alpha * (1.0 - alpha) / cfg.reps as f64).sqrt();
        assert!(
            row.fdx <= bound,
            "{}: FDX {} above {bound}",
            cfg.scenario.label(),
            row.fdx
        );
    }
}
