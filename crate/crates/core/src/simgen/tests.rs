use super::*;

fn spec(r: f64) -> TransformationSpec {
    TransformationSpec::new(r).unwrap()
}

fn corr(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let n = x.nrows() as f64;
    let (ca, cb) = (x.column(a), x.column(b));
    let (ma, mb) = (ca.mean(), cb.mean());
    let cov = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / (n - 1.0);
    cov / (ca.variance() * n / (n - 1.0)).sqrt() / (cb.variance() * n / (n - 1.0)).sqrt()
}

#[test]
fn covariate_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = gen_covariates(10_000, 5, 0.0, &mut rng);
    for a in 0..5 {
        assert!((x.column(a).variance() - 1.0).abs() < 0.05);
        for b in 0..a {
            assert!(corr(&x, a, b).abs() < 0.1);
        }
    }
    let x = gen_covariates(10_000, 4, 0.8, &mut rng);
    for a in 1..4 {
        assert!((corr(&x, a, a - 1) - 0.8).abs() < 0.05);
        assert!((x.column(a).variance() - 1.0).abs() < 0.05);
    }
}

#[test]
fn covariate_covariance_matches_ar1() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gen_covariates(10_000, 6, 0.2, &mut rng);
    let n = x.nrows() as f64;
    for a in 0..6 {
        for b in 0..6 {
            let cov = x.column(a).dot(&x.column(b)) / n;
            let target = 0.2f64.powi((a as i32 - b as i32).abs());
            assert!((cov - target).abs() < 0.05, "({a},{b}) {cov} vs {target}");
        }
    }
}

#[test]
fn event_probability_examples() {
    let z = [0.3, -1.2];
    let zero = [0.0, 0.0];
    assert!((event_probability(&spec(0.0), &zero, &z, 0.2) - (1.0 - (-0.2f64).exp())).abs() < 1e-15);
    assert!((event_probability(&spec(0.0), &zero, &z, 0.2) - 0.18127).abs() < 1e-5);
    assert!((event_probability(&spec(1.0), &zero, &z, 0.2) - (1.0 - 1.0 / 1.2)).abs() < 1e-15);
    let p1 = event_probability(&spec(0.5), &zero, &[5.0, 5.0], 0.2);
    let p2 = event_probability(&spec(0.5), &zero, &[-5.0, 1.0], 0.2);
    assert_eq!(p1, p2);
}

#[test]
fn cause_probabilities_overflow() {
    let beta = DMatrix::from_row_slice(2, 1, &[3.0, -3.0]);
    let specs = [spec(0.0), spec(0.0)];
    assert!(matches!(
        cause_probabilities(&specs, &beta, &[1.2], 0.2),
        Err(SimError::ProbabilityOverflow { .. })
    ));
    let p = cause_probabilities(&specs, &beta, &[0.1], 0.2).unwrap();
    assert!(p.iter().sum::<f64>() < 1.0);
}

#[test]
fn event_time_boundaries() {
    let s = spec(0.7);
    let load = 0.2 * 0.4f64.exp();
    let p = -(-s.g(load).unwrap()).exp_m1();
    let (t0, c0) = event_time(&s, p, 1e-12, load);
    assert!(t0 > 0.0 && t0 < 1e-9 && !c0);
    let (t1, _) = event_time(&s, p, 1.0 - 1e-9, load);
    assert!(t1 > 10.0);
    let (t2, c2) = event_time(&s, p, 1.0, load);
    assert!(t2 >= t1 && t2.is_finite());
    let _ = c2;
    // inverse property: F_k(t) / p = v
    for v in [0.1, 0.5, 0.9] {
        let (t, _) = event_time(&s, p, v, load);
        let f = -(-s.g(load * -(-t).exp_m1()).unwrap()).exp_m1();
        assert!((f / p - v).abs() < 1e-12);
    }
}

#[test]
fn examinations_support_and_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sum = 0.0;
    for _ in 0..100_000 {
        let (u1, u2) = gen_examinations((0.1, 1.5), (0.1, 1.6), &mut rng);
        assert!((0.1..=1.5).contains(&u1));
        assert!(u2 - u1 >= 0.1 - 1e-15 && u2 <= 3.1 + 1e-12);
        sum += u1;
    }
    assert!((sum / 1e5 - 0.8).abs() < 0.02);
}

/// Largest gap between the empirical subdistribution of cause `k` and the
/// model CIF averaged over the generated covariates.
fn kolmogorov(sim: &SimulatedData, scenario: &Scenario, k: usize) -> f64 {
    let spec = scenario.specs().unwrap()[k];
    let beta = scenario.beta_true();
    let bk: Vec<f64> = beta.row(k).iter().copied().collect();
    let loads: Vec<f64> = sim
        .dataset
        .subjects()
        .iter()
        .map(|s| scenario.baseline_scale * linear(&bk, s.covariates.at(0.0)).exp())
        .collect();
    let model_cif = |t: f64| {
        let m = -(-t).exp_m1();
        loads.iter().map(|&l| -(-spec.g_raw(l * m)).exp_m1()).sum::<f64>() / loads.len() as f64
    };
    let mut times: Vec<f64> = sim
        .latent
        .iter()
        .filter(|(c, _)| *c == k + 1)
        .map(|(_, t)| t.unwrap())
        .collect();
    times.sort_by(f64::total_cmp);
    let n = sim.latent.len() as f64;
    let mut worst: f64 = 0.0;
    for (idx, &t) in times.iter().enumerate() {
        let f = model_cif(t);
        worst = worst.max((f - idx as f64 / n).abs()).max((f - (idx + 1) as f64 / n).abs());
    }
    worst.max((model_cif(f64::INFINITY) - times.len() as f64 / n).abs())
}

#[test]
fn generated_cif_matches_model() {
    let mut null = Scenario::standard(20_000, 3, 0.2, [0.0, 0.0], 11);
    null.beta_true = Some(vec![vec![0.0; 3]; 2]);
    let sim = gen_dataset(&null).unwrap();
    assert_eq!(sim.truncated, 0);
    for k in 0..2 {
        let ks = kolmogorov(&sim, &null, k);
        assert!(ks < 0.02, "null k={k}: {ks}");
    }
    let po = Scenario::standard(20_000, 14, 0.2, [1.0, 1.0], 12);
    let sim = gen_dataset(&po).unwrap();
    assert_eq!(sim.truncated, 0);
    for k in 0..2 {
        let ks = kolmogorov(&sim, &po, k);
        assert!(ks < 0.02, "r=1 k={k}: {ks}");
    }
}

#[test]
fn null_event_fraction_matches_quadrature() {
    let mut sc = Scenario::standard(20_000, 2, 0.0, [0.0, 0.0], 5);
    sc.beta_true = Some(vec![vec![0.0; 2]; 2]);
    let sim = gen_dataset(&sc).unwrap();
    let observed = sim.dataset.n_events() as f64 / 20_000.0;
    // 2 E[F(U_2)], F(t) = 1 - exp(-0.2 (1 - e^-t)), midpoint rule over (U_1, dU)
    let m = 400;
    let mut acc = 0.0;
    for i in 0..m {
        let u1 = 0.1 + 1.4 * (i as f64 + 0.5) / m as f64;
        for j in 0..m {
            let du = 0.1 + 1.5 * (j as f64 + 0.5) / m as f64;
            acc += 1.0 - (-0.2 * (1.0 - (-(u1 + du)).exp())).exp();
        }
    }
    let expected = 2.0 * acc / (m * m) as f64;
    assert!((observed - expected).abs() < 0.02, "{observed} vs {expected}");
    let total = 2.0 * (1.0 - (-0.2f64).exp());
    assert!((total - 0.3626).abs() < 1e-4);
}

#[test]
fn overflow_policies() {
    let mut sc = Scenario::standard(2_000, 6, 0.2, [0.0, 0.0], 3);
    let sim = gen_dataset(&sc).unwrap();
    assert!(sim.truncated > 0);
    sc.overflow = OverflowPolicy::Error;
    assert!(matches!(gen_dataset(&sc), Err(SimError::ProbabilityOverflow { .. })));
    let po = Scenario::standard(2_000, 6, 0.2, [1.0, 1.0], 3);
    assert_eq!(gen_dataset(&po).unwrap().truncated, 0);
}

#[test]
fn records_are_consistent() {
    let mut sc = Scenario::standard(3_000, 4, 0.2, [0.5, 1.0], 9);
    let sim = gen_dataset(&sc).unwrap();
    assert!(sim.dataset.subjects().iter().all(|s| !s.cause_missing()));
    for (s, (cause, t)) in sim.dataset.subjects().iter().zip(&sim.latent) {
        assert_eq!(s.exam_times.len(), 2);
        match s.outcome {
            Outcome::RightCensored => assert!(*cause == 0 || t.unwrap() > s.exam_times[1]),
            Outcome::Event { interval, cause: c } => {
                assert_eq!(c, Cause::Known(*cause));
                let t = t.unwrap();
                assert_eq!(interval, if t <= s.exam_times[0] { 1 } else { 2 });
            }
        }
        assert_eq!(cause == &0, t.is_none());
    }
    sc.missing_prob = 0.3;
    let masked = gen_dataset(&sc).unwrap();
    let frac = masked.dataset.subjects().iter().filter(|s| s.cause_missing()).count() as f64
        / masked.dataset.n_events() as f64;
    assert!((frac - 0.3).abs() < 0.05);
    assert_eq!(masked.dataset.n_events(), sim.dataset.n_events());
}

#[test]
fn same_seed_same_dataset() {
    let sc = Scenario::standard(500, 5, 0.5, [0.0, 1.0], 77);
    let a = gen_dataset(&sc).unwrap();
    let b = gen_dataset(&sc).unwrap();
    assert_eq!(a.dataset.subjects(), b.dataset.subjects());
    let other = Scenario { seed: 78, ..sc };
    assert_ne!(gen_dataset(&other).unwrap().dataset.subjects(), a.dataset.subjects());
}

#[test]
fn replication_seeds_differ() {
    let seeds: std::collections::HashSet<u64> = (0..1000).map(|r| replication_seed(42, r)).collect();
    assert_eq!(seeds.len(), 1000);
}

#[test]
fn scenario_toml_keys() {
    let text = r#"
        n = 200
        d_n = 14
        K = 2
        rho = 0.2
        r = [0.0, 0.0]
        missing_prob = 0.0
        seed = 3
    "#;
    let sc: Scenario = toml::from_str(text).unwrap();
    assert_eq!(sc, Scenario::standard(200, 14, 0.2, [0.0, 0.0], 3));
    assert_eq!(sc.true_support(), vec![vec![0, 1, 2], vec![0, 1, 2]]);
    assert!(toml::from_str::<Scenario>("n = 1\nd_n = 1\nrho = 0\nr = [0, 0]\nbogus = 1").is_err());
    let bad = Scenario { rho: 1.0, ..sc };
    assert!(bad.validate().is_err());
}
