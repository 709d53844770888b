use super::*;
use proptest::prelude::*;

fn truth() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 4, &[0.8, 0.6, 0.0, 0.0, -0.8, 0.0, 0.0, 0.0])
}

fn identity_sigma() -> Vec<DMatrix<f64>> {
    vec![DMatrix::identity(4, 4); 2]
}

#[test]
fn exact_estimate_scores_perfectly() {
    let m = replication_metrics(&truth(), &truth(), &identity_sigma(), 1e-5);
    assert_eq!(
        m,
        RepMetrics {
            tp: 3,
            fp: 0,
            mcv: 0,
            mse: 0.0
        }
    );
}

#[test]
fn all_zero_estimate_misses_everything() {
    let m = replication_metrics(&DMatrix::zeros(2, 4), &truth(), &identity_sigma(), 1e-5);
    assert_eq!((m.tp, m.fp, m.mcv), (0, 0, 3));
    assert!((m.mse - (0.64 + 0.36 + 0.64)).abs() < 1e-12);
}

#[test]
fn unit_error_has_unit_mse() {
    let mut est = truth();
    est[(1, 2)] += 1.0;
    let m = replication_metrics(&est, &truth(), &identity_sigma(), 1e-5);
    assert_eq!((m.tp, m.fp, m.mcv), (3, 1, 1));
    assert!((m.mse - 1.0).abs() < 1e-15);
}

#[test]
fn mse_uses_the_covariance() {
    let mut est = truth();
    est[(0, 0)] += 1.0;
    est[(0, 1)] += 1.0;
    let sigma = vec![ar1_covariance(4, 0.5); 2];
    let m = replication_metrics(&est, &truth(), &sigma, 1e-5);
    assert!((m.mse - 3.0).abs() < 1e-12);
    assert_eq!(ar1_covariance(3, 0.2)[(0, 2)], 0.2f64.powi(2));
}

#[test]
fn threshold_decides_selection() {
    let mut est = truth();
    est[(1, 3)] = 1e-6;
    assert_eq!(replication_metrics(&est, &truth(), &identity_sigma(), 1e-5).fp, 0);
    assert_eq!(replication_metrics(&est, &truth(), &identity_sigma(), 1e-7).fp, 1);
}

proptest! {
    #[test]
    fn mcv_identity(values in prop::collection::vec(-1.0f64..1.0, 8), mask in prop::collection::vec(any::<bool>(), 8)) {
        let est = DMatrix::from_fn(2, 4, |k, a| if mask[k * 4 + a] { values[k * 4 + a] } else { 0.0 });
        let m = replication_metrics(&est, &truth(), &identity_sigma(), 1e-5);
        prop_assert_eq!(m.mcv, 3 - m.tp + m.fp);
        prop_assert!(m.tp <= 3 && m.fp <= 5);
        prop_assert!(m.mse >= 0.0);
    }
}

#[test]
fn median_and_sd() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert_eq!(sample_sd(&[5.0]), 0.0);
    assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

fn tiny_config(reps: usize) -> BenchConfig {
    BenchConfig::from_toml(&format!(
        r#"
        [scenario]
        n = 120
        d_n = 4
        rho = 0.2
        r = [0.0, 0.0]
        seed = 8

        [bench]
        reps = {reps}
        penalties = ["bar", "lasso"]
        tau_grid = [0.5, 2.0, 8.0]
        "#
    ))
    .unwrap()
}

#[test]
fn config_sections_parse() {
    let cfg = tiny_config(3);
    assert_eq!(cfg.bench.reps, 3);
    assert_eq!(cfg.bench.penalties, vec![PenaltyChoice::Bar, PenaltyChoice::Lasso]);
    assert_eq!(cfg.scenario.n, 120);
    let bare = BenchConfig::from_toml("[scenario]\nn = 10\nd_n = 2\nrho = 0\nr = [0, 1]\n").unwrap();
    assert_eq!(bare.bench, BenchSettings::default());
    assert!(BenchConfig::from_toml("[scenario]\nn = 10\nd_n = 2\nrho = 0\nr = [0, 1]\n[bench]\nfoo = 1\n").is_err());
    let mut empty_grid = tiny_config(1);
    empty_grid.bench.tau_grid = Some(vec![]);
    assert!(matches!(
        run_bench(&empty_grid, &FitConfig::default(), Some(1)),
        Err(HarnessError::Config(_))
    ));
}

#[test]
fn single_replication_means_equal_its_values() {
    let cfg = tiny_config(1);
    let report = run_bench(&cfg, &FitConfig::default(), Some(1)).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        let d = report
            .details
            .iter()
            .find(|d| d.penalty == row.penalty)
            .and_then(|d| d.outcome.as_ref())
            .unwrap();
        assert_eq!(row.tp, d.metrics.tp as f64);
        assert_eq!(row.fp, d.metrics.fp as f64);
        assert_eq!(row.mcv, d.metrics.mcv as f64);
        assert_eq!(row.mmse, d.metrics.mse);
        assert_eq!(row.mse_sd, 0.0);
        assert_eq!((row.reps, row.failures), (1, 0));
        assert_eq!((row.n, row.p, row.q), (120, 8, 6));
    }
    let oracle = report.rows.iter().find(|r| r.penalty == ORACLE).unwrap();
    assert_eq!((oracle.tp, oracle.fp), (6.0, 0.0));
}

#[test]
fn failures_are_counted_and_abort_past_half() {
    let mut cfg = tiny_config(2);
    let strict = FitConfig {
        max_outer: 2,
        ..FitConfig::default()
    };
    cfg.bench.penalties = vec![PenaltyChoice::Bar];
    assert!(matches!(
        run_bench(&cfg, &strict, Some(1)),
        Err(HarnessError::TooManyFailures { .. })
    ));
}

#[test]
fn summary_and_detail_layout() {
    let cfg = tiny_config(2);
    let report = run_bench(&cfg, &FitConfig::default(), Some(1)).unwrap();
    let mut buf = Vec::new();
    write_summary(&report.rows, Format::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "penalty,n,p,rho,r1,r2,TP,FP,MCV,MMSE,MSE_SD,reps,failures");
    assert!(lines.next().unwrap().starts_with("BAR,120,8,0.200000,0.000000,0.000000,"));
    assert_eq!(text.lines().count(), 4);

    let mut buf = Vec::new();
    write_details(&report.details, Format::Tsv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "rep\tpenalty\ttau_star\ttp\tfp\tmcv\tmse\titers\tconverged"
    );
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn fit_report_tables() {
    let sc = Scenario::standard(100, 2, 0.0, [0.0, 0.0], 4);
    let sim = gen_dataset(&sc).unwrap();
    let model = Model::new(&sim.dataset, sc.specs().unwrap()).unwrap();
    let fit = fit_unpenalized_model(&model, &FitConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_fit_report(&fit, Format::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 2);
    assert!(blocks[0].starts_with("risk,covariate,estimate,zero\n1,z1,"));
    assert_eq!(blocks[0].lines().count(), 5);
    assert!(blocks[1].starts_with("metric,value\npenalty,none\n"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(cli_main(["icrbar"]), 2);
    assert_eq!(cli_main(["icrbar", "fit"]), 2);
    assert_eq!(cli_main(["icrbar", "--format", "xml", "gridsearch", "--data", "x.csv"]), 2);
    assert_eq!(cli_main(["icrbar", "fit", "--data", "/nonexistent/file.csv"]), 2);
    assert_eq!(cli_main(["icrbar", "--help"]), 0);
}
