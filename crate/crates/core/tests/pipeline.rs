//! End-to-end reconstruction on synthetic campaigns built in the test.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rem_core::calibration::{delta_gain, estimate_a_uav, estimate_effective_pattern, CalibratedDelta};
use rem_core::completion::{build_grid, nuclear_norm, nuclear_norm_min, McPipeline};
use rem_core::geo::LocalFrame;
use rem_core::gpr::gpr_fit;
use rem_core::kriging::{ok_predict, predict_many, sk_predict};
use rem_core::propagation::{calibrated_received_power_db, distorted_received_power_db, trpl_received_power_db};
use rem_core::shadow::extract_sf;
use rem_core::{CorrelationModel, GeoPoint, KrigingConfig, McConfig, Measurement, PropagationConfig, SfSample, Variant};

const MODEL: CorrelationModel = CorrelationModel { a: 0.6, p1: 0.04, p2: 0.01, q: 0.05, sigma_z: 4.0 };

fn frame() -> LocalFrame {
    LocalFrame::new(GeoPoint::new(52.0, 4.0, 0.0).unwrap())
}

fn gs() -> GeoPoint {
    frame().to_geo(0.0, 0.0, 10.0)
}

fn grid_points(n_side: usize, spacing: f64, alt: f64) -> Vec<GeoPoint> {
    let f = frame();
    (0..n_side * n_side).map(|k| f.to_geo(40.0 + spacing * (k % n_side) as f64, 40.0 + spacing * (k / n_side) as f64, alt)).collect()
}

fn sample_field(pts: &[GeoPoint], seed: u64) -> Vec<f64> {
    let n = pts.len();
    let cov = DMatrix::from_fn(n, n, |i, j| MODEL.covariance(&pts[i], &pts[j]) + if i == j { 1e-9 } else { 0.0 });
    let l = cov.cholesky().unwrap().unpack();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    (l * w).iter().copied().collect()
}

fn samples(pts: &[GeoPoint], z: &[f64]) -> Vec<SfSample> {
    pts.iter().zip(z).enumerate().map(|(i, (p, z))| SfSample { location: *p, z: *z, seq: i }).collect()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn residual_extraction_returns_injected_field() {
    let cfg = PropagationConfig::new(2.4e9, 20.0);
    let pts = grid_points(12, 15.0, 50.0);
    let sf = sample_field(&pts, 1);
    let meas: Vec<Measurement> = pts
        .iter()
        .zip(&sf)
        .enumerate()
        .map(|(i, (p, z))| Measurement { location: *p, rsrp_dbm: trpl_received_power_db(&cfg, &cfg.link(&gs(), p).unwrap()).unwrap() + z, seq: i })
        .collect();
    let got = extract_sf(&meas, &cfg, &gs(), None).unwrap();
    for (s, z) in got.iter().zip(&sf) {
        assert!((s.z - z).abs() < 1e-9);
    }
}

#[test]
fn kriging_on_held_out_points_beats_the_prior() {
    let pts = grid_points(20, 10.0, 50.0);
    let z = sample_field(&pts, 2);
    let (train, test): (Vec<usize>, Vec<usize>) = (0..pts.len()).partition(|i| i % 4 != 0);
    let tr = samples(&train.iter().map(|&i| pts[i]).collect::<Vec<_>>(), &train.iter().map(|&i| z[i]).collect::<Vec<_>>());
    let targets: Vec<GeoPoint> = test.iter().map(|&i| pts[i]).collect();
    let truth: Vec<f64> = test.iter().map(|&i| z[i]).collect();

    for variant in [Variant::Ok, Variant::Sk] {
        let preds = predict_many(&tr, &MODEL, &targets, &KrigingConfig::new(60.0, variant)).unwrap();
        let z_hat: Vec<f64> = preds.iter().map(|p| p.z_hat).collect();
        let prior = rmse(&vec![0.0; truth.len()], &truth);
        assert!(rmse(&z_hat, &truth) < 0.6 * prior, "{variant:?}: {} vs {prior}", rmse(&z_hat, &truth));
        assert!(preds.iter().all(|p| !p.fallback && p.mse >= 0.0));
    }
}

#[test]
fn predict_many_agrees_with_single_target_calls() {
    let pts = grid_points(10, 12.0, 60.0);
    let tr = samples(&pts, &sample_field(&pts, 3));
    let targets: Vec<GeoPoint> = grid_points(6, 17.0, 55.0);
    for variant in [Variant::Ok, Variant::Sk] {
        let cfg = KrigingConfig::new(40.0, variant);
        let many = predict_many(&tr, &MODEL, &targets, &cfg).unwrap();
        for (t, p) in targets.iter().zip(&many) {
            let one = match variant {
                Variant::Ok => ok_predict(&tr, &MODEL, t, &cfg),
                _ => sk_predict(&tr, &MODEL, t, &cfg),
            };
            match one {
                Ok(one) => assert!((one.z_hat - p.z_hat).abs() < 1e-9 && one.neighbors == p.neighbors),
                Err(_) => assert!(p.fallback),
            }
        }
    }
}

#[test]
fn gpr_variance_grows_away_from_data() {
    let pts = grid_points(8, 10.0, 50.0);
    let model = gpr_fit(&samples(&pts, &sample_field(&pts, 4)), &MODEL, MODEL.sigma_z, 0.5).unwrap();
    let f = frame();
    let near = model.predict(&f.to_geo(75.0, 75.0, 50.0));
    let far = model.predict(&f.to_geo(900.0, 900.0, 50.0));
    assert!(near.variance < 0.2 * far.variance);
    assert!((far.variance - MODEL.variance()).abs() < 0.05 * MODEL.variance());
    assert!(far.z_hat.abs() < 0.1);
}

#[test]
fn completion_stays_inside_the_confidence_band() {
    let pts = grid_points(10, 12.0, 50.0);
    let tr = samples(&pts, &sample_field(&pts, 5));
    let model = gpr_fit(&tr, &MODEL, MODEL.sigma_z, 0.5).unwrap();
    let spec = build_grid(&tr, 10.0).unwrap();
    let cfg = McConfig::default();
    let pipe = McPipeline::build(&model, &spec, &cfg).unwrap();
    let grid = &pipe.grid;
    assert_eq!(grid.z.shape(), (spec.n_rows, spec.n_cols));
    for ((zm, z), s) in pipe.outcome.z_mc.iter().zip(grid.z.iter()).zip(grid.sigma.iter()) {
        assert!((zm - z).abs() <= cfg.alpha * s + 1e-9);
    }
    assert!(nuclear_norm(&pipe.outcome.z_mc) <= nuclear_norm(&grid.z) + 1e-9);
    assert_eq!(pipe.outcome, nuclear_norm_min(grid, &cfg));
    let combined = &pipe.z_smooth + &pipe.z_ds_dilated;
    assert_eq!(combined, pipe.combined);
    let node = spec.node(3, 4);
    assert!((pipe.predict(&node) - pipe.combined[(3, 4)]).abs() < 1e-6);
}

#[test]
fn calibration_recovers_injected_distortion() {
    let mut cfg = PropagationConfig::new(2.4e9, 20.0);
    cfg.gamma_override = Some(Complex::new(0.0, 0.0));
    let injected = CalibratedDelta::sector(5.0, (0.0, 90.0), (20.0, 50.0), -6.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = frame();
    let meas: Vec<Measurement> = (0..4000)
        .map(|i| {
            let u: f64 = rand::Rng::random(&mut rng);
            let v: f64 = rand::Rng::random(&mut rng);
            let p = f.to_geo(-300.0 + 600.0 * u, -300.0 + 600.0 * v, 70.0);
            let g = cfg.link(&gs(), &p).unwrap();
            Measurement { location: p, rsrp_dbm: distorted_received_power_db(&cfg, &g, &injected).unwrap(), seq: i }
        })
        .collect();
    let est = estimate_a_uav(&meas, &gs(), cfg.tx_power_dbm);
    assert_eq!(est.skipped, 0);
    let eff = estimate_effective_pattern(&est.samples, &cfg.gs_pattern, cfg.wavelength(), 5.0, 1).unwrap();
    let delta = delta_gain(&eff, &cfg.uav_pattern, 1);
    for m in &meas {
        let g = cfg.link(&gs(), &m.location).unwrap();
        assert!((calibrated_received_power_db(&cfg, &g, &delta).unwrap() - m.rsrp_dbm).abs() < 1e-6);
        assert!((delta.at(g.phi_r, g.theta_r) - injected.at(g.phi_r, g.theta_r)).abs() < 1e-6);
    }
}
