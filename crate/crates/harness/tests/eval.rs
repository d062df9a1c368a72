mod common;

use common::*;
use rem_core::CorrelationModel;
use rem_harness::*;

#[test]
fn trpl_only_is_exact_on_a_noise_free_trpl_scene() {
    let s = scene(CorrelationModel::exponential(0.05, 0.1, 0.0), 0.0, vec![], 1);
    let (_, train, test) = standard(&s);
    let r = monte_carlo_eval(&config(&s, Method::TrplOnly, 40, 50), &train, &test[..]).unwrap();
    assert!(r.median_rmse.abs() < 1e-9, "{}", r.median_rmse);
}

#[test]
fn sk_with_all_but_one_input_beats_trpl() {
    let s = scene(truth_corr(), 0.0, vec![], 2);
    let (_, train, test) = standard(&s);
    let n = test.len();
    let trpl = monte_carlo_eval(&config(&s, Method::TrplOnly, n - 1, 200), &train, &test[..]).unwrap();
    let sk = monte_carlo_eval(&config(&s, Method::Sk, n - 1, 200), &train, &test[..]).unwrap();
    assert!(sk.median_rmse < trpl.median_rmse, "SK {} vs TRPL {}", sk.median_rmse, trpl.median_rmse);
    assert!(sk.median_rmse < 0.5 * trpl.median_rmse);
}

#[test]
fn trpl_only_rmse_estimates_the_field_sigma() {
    let s = scene(truth_corr(), 0.0, vec![], 4);
    let (r, train, test) = standard(&s);
    let rep = monte_carlo_eval(&config(&s, Method::TrplOnly, 100, 100), &train, &test[..]).unwrap();
    let sf = &r.campaigns[0].sf;
    let rms = (sf.iter().map(|z| z * z).sum::<f64>() / sf.len() as f64).sqrt();
    assert!((rep.median_rmse - rms).abs() < 0.1 * rms, "{} vs {rms}", rep.median_rmse);
}

#[test]
fn fixed_seed_gives_identical_reports() {
    let s = scene(truth_corr(), 0.5, vec![], 5);
    let (_, train, test) = standard(&s);
    for m in [Method::Ok, Method::TgSk, Method::Gpr] {
        let cfg = config(&s, m, 30, 16);
        assert_eq!(monte_carlo_eval(&cfg, &train, &test[..]).unwrap(), monte_carlo_eval(&cfg, &train, &test[..]).unwrap());
    }
    let mut other = config(&s, Method::Ok, 30, 16);
    other.seed += 1;
    assert_ne!(
        monte_carlo_eval(&other, &train, &test[..]).unwrap().rmse,
        monte_carlo_eval(&config(&s, Method::Ok, 30, 16), &train, &test[..]).unwrap().rmse
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let s = scene(truth_corr(), 0.5, vec![], 6);
    let (_, train, test) = standard(&s);
    for m in [Method::Ok, Method::McGpr] {
        let cfg = config(&s, m, 40, 12);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo_eval(&cfg, &train, &test[..]).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.median_rmse.to_bits(), b.median_rmse.to_bits());
        assert_eq!(a, b);
    }
}

#[test]
fn evaluator_reads_only_inputs_and_held_out_truth() {
    let s = scene(truth_corr(), 0.5, vec![], 8);
    let (_, train, test) = standard(&s);
    let n = test.len();
    for m in [Method::Ok, Method::Gpr, Method::McGpr, Method::TgOk] {
        let cfg = config(&s, m, 25, 9);
        let audited = AuditedSource::new(&test[..]);
        monte_carlo_eval(&cfg, &train, &audited).unwrap();
        assert_eq!(audited.input_reads(), 9 * 25, "{m}");
        assert_eq!(audited.score_reads(), 9 * (n - 25), "{m}");
        // Every location is read exactly once per iteration, as input or as truth.
        assert!((0..n).all(|i| audited.reads_of(i) == 9), "{m}");
    }
}

#[test]
fn row_order_does_not_change_ok_results() {
    let s = scene(truth_corr(), 0.5, vec![], 9);
    let (_, train, test) = standard(&s);
    let cfg = config(&s, Method::Ok, 60, 20);
    let a = monte_carlo_eval(&cfg, &train, &test[..]).unwrap();
    let mut shuffled = test.clone();
    shuffled.reverse();
    shuffled.swap(3, 100);
    let b = monte_carlo_eval(&cfg, &train, &shuffled[..]).unwrap();
    assert_eq!(a.rmse, b.rmse);
}

#[test]
fn report_is_self_consistent() {
    let s = scene(truth_corr(), 0.5, vec![], 10);
    let (_, train, test) = standard(&s);
    let cfg = config(&s, Method::Ok, 50, 15);
    let r = monte_carlo_eval(&cfg, &train, &test[..]).unwrap();
    assert_eq!(r.rmse.len(), 15);
    assert_eq!(r.median_rmse, median(&r.rmse));
    assert_eq!(r.config, cfg);
    assert_eq!(r.elevation.iter().map(|b| b.samples).sum::<usize>(), 15 * (test.len() - 50));
    assert_eq!(r.elevation[0].center_deg, 5.0);
    assert!(r.fitted.corr.is_some());
    let json = serde_json::to_string(&r).unwrap();
    let back: EvaluationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.rmse, r.rmse);
    assert_eq!(back.config, r.config);
}

#[test]
fn invalid_configurations_are_rejected() {
    let s = scene(truth_corr(), 0.5, vec![], 11);
    let (_, train, test) = standard(&s);
    let n = test.len();
    for m in [0, n] {
        let err = monte_carlo_eval(&config(&s, Method::Ok, m, 3), &train, &test[..]).unwrap_err();
        assert!(matches!(err, HarnessError::Validation(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
    let err = monte_carlo_eval(&config(&s, Method::Ok, 10, 3), &test, &test[..]).unwrap_err();
    assert!(matches!(err, HarnessError::Validation(_)));
    let mut cfg = config(&s, Method::Ok, 10, 3);
    cfg.train_campaign = Some("a.csv".into());
    cfg.test_campaign = Some("a.csv".into());
    assert!(matches!(monte_carlo_eval(&cfg, &train, &test[..]), Err(HarnessError::Validation(_))));
}

#[test]
fn overlapping_campaigns_are_flagged() {
    let s = scene(truth_corr(), 0.5, vec![], 12);
    let r = rem_synth::generate_campaigns(&s, &flights(300.0, 7, 5.0, &[40.0, 70.0])).unwrap();
    let test = &r.campaigns[0].measurements;
    let train = &r.campaigns[1].measurements;
    let separated = monte_carlo_eval(&config(&s, Method::Ok, 20, 2), train, &test[..]).unwrap();
    assert!(separated.warnings.iter().all(|w| !w.contains("overlap")));
    let (a, b): (Vec<_>, Vec<_>) = test.iter().partition(|m| m.seq % 2 == 0);
    let overlapping = monte_carlo_eval(&config(&s, Method::Ok, 20, 2), &a, &b[..]).unwrap();
    assert!(overlapping.warnings.iter().any(|w| w.contains("overlap")));
}

#[test]
fn tiny_radius_falls_back_and_completes() {
    let s = scene(truth_corr(), 0.5, vec![], 13);
    let (_, train, test) = standard(&s);
    let mut cfg = config(&s, Method::Ok, 10, 4);
    cfg.radius_m = 0.5;
    let r = monte_carlo_eval(&cfg, &train, &test[..]).unwrap();
    assert!(r.counters.fallbacks > 4 * (test.len() - 10) / 2);
    assert!(r.warnings.iter().any(|w| w.contains("fell back")));
    let trpl = monte_carlo_eval(&config(&s, Method::TrplOnly, 10, 4), &train, &test[..]).unwrap();
    assert!((r.median_rmse - trpl.median_rmse).abs() < 0.2);
}

#[test]
fn calibrated_mode_fits_delta_on_training_data() {
    let mut s = scene(CorrelationModel::exponential(0.05, 0.1, 0.5), 0.0, vec![], 14);
    s.propagation.gamma_override = Some([0.0, 0.0]);
    s.pattern_distortion = Some(rem_synth::DistortionSpec::Sector {
        bin_deg: 5.0,
        az_deg: [0.0, 360.0],
        el_deg: [0.0, 90.0],
        delta_db: -6.0,
    });
    let (_, train, test) = standard(&s);
    let mut cfg = config(&s, Method::TrplOnly, 10, 20);
    let base = monte_carlo_eval(&cfg, &train, &test[..]).unwrap();
    cfg.mode = Mode::Calibrated;
    cfg.options.min_support = 3;
    let cal = monte_carlo_eval(&cfg, &train, &test[..]).unwrap();
    assert!(cal.fitted.calibrated_bins.unwrap() > 0);
    assert!(cal.median_rmse < base.median_rmse, "{} vs {}", cal.median_rmse, base.median_rmse);
}

#[test]
fn score_regions_restrict_the_scored_targets() {
    let s = scene(truth_corr(), 0.5, vec![], 15);
    let (_, train, test) = standard(&s);
    let region = ScoreRegion { center: frame().to_geo(150.0, 150.0, 0.0), radius_m: 60.0 };
    let inside = test.iter().filter(|m| region.contains(&m.location)).count();
    assert!(inside > 0 && inside < test.len());
    let mut cfg = config(&s, Method::Ok, 30, 6);
    cfg.options.score_regions = vec![region];
    let audited = AuditedSource::new(&test[..]);
    let r = monte_carlo_eval(&cfg, &train, &audited).unwrap();
    assert_eq!(r.rmse.len(), 6);
    assert_eq!(audited.input_reads(), 6 * 30);
    let scored = audited.score_reads();
    assert!(scored <= 6 * inside && scored >= 6 * inside.saturating_sub(30));
    assert!((0..test.len()).filter(|&i| !region.contains(&test[i].location)).all(|i| audited.reads_of(i) <= 6));

    cfg.options.score_regions = vec![ScoreRegion { center: frame().to_geo(5000.0, 0.0, 0.0), radius_m: 10.0 }];
    assert!(matches!(monte_carlo_eval(&cfg, &train, &test[..]), Err(HarnessError::Validation(_))));
}
