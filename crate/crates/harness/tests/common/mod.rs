#![allow(dead_code)]

use rem_core::{CorrelationModel, GeoPoint, LocalFrame, Measurement};
use rem_harness::{EnvironmentSpec, EvalConfig, Method};
use rem_synth::{generate_campaigns, Blob, PropagationSpec, SceneRealization, SceneSpec, Trajectory};

pub fn frame() -> LocalFrame {
    LocalFrame::new(GeoPoint::new(35.7275, -78.6960, 0.0).unwrap())
}

pub fn truth_corr() -> CorrelationModel {
    CorrelationModel { a: 0.7, p1: 0.05, p2: 0.005, q: 0.1, sigma_z: 3.0 }
}

pub fn scene(corr: CorrelationModel, noise_sd: f64, blobs: Vec<Blob>, seed: u64) -> SceneSpec {
    SceneSpec {
        gs: frame().to_geo(-40.0, -40.0, 10.0),
        propagation: PropagationSpec::new(3.5e9, 10.0),
        corr,
        noise_sd,
        blobs,
        pattern_distortion: None,
        seed,
    }
}

pub fn environment(s: &SceneSpec) -> EnvironmentSpec {
    EnvironmentSpec { gs: s.gs, propagation: s.propagation.clone() }
}

/// Lawnmower flights over the same square at each altitude.
pub fn flights(width: f64, lanes: usize, spacing: f64, altitudes: &[f64]) -> Vec<(String, Trajectory)> {
    altitudes
        .iter()
        .map(|&h| (format!("h{h}"), Trajectory::lawnmower(frame().to_geo(0.0, 0.0, h), width, width, lanes, spacing)))
        .collect()
}

/// Test campaign at 40 m, training campaign at 70 m over the same area.
pub fn standard(s: &SceneSpec) -> (SceneRealization, Vec<Measurement>, Vec<Measurement>) {
    let r = generate_campaigns(s, &flights(300.0, 7, 5.0, &[40.0, 70.0])).unwrap();
    let test = r.campaigns[0].measurements.clone();
    let train = r.campaigns[1].measurements.clone();
    (r, train, test)
}

pub fn config(s: &SceneSpec, method: Method, m: usize, iterations: usize) -> EvalConfig {
    let mut cfg = EvalConfig::new(method, m, environment(s));
    cfg.iterations = iterations;
    cfg.seed = 7;
    cfg
}
