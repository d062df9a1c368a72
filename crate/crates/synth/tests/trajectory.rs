use proptest::prelude::*;
use rem_core::geo::{horizontal_distance, vertical_distance};
use rem_core::{GeoPoint, LocalFrame};
use rem_synth::Trajectory;

fn origin() -> GeoPoint {
    LocalFrame::new(GeoPoint::new(35.7275, -78.6960, 0.0).unwrap()).to_geo(0.0, 0.0, 40.0)
}

fn spacing_ok(t: &Trajectory) -> Result<(), TestCaseError> {
    let pts = t.sample_points().unwrap();
    prop_assert!(pts.len() >= 2);
    for w in pts.windows(2) {
        let d = horizontal_distance(&w[0], &w[1]).hypot(vertical_distance(&w[0], &w[1]));
        prop_assert!((d / t.sample_spacing_m - 1.0).abs() <= 0.1, "step {d} vs {}", t.sample_spacing_m);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zigzag_spacing(w in 30.0..400.0f64, h in 30.0..400.0f64, legs in 1usize..9, s in 2.0..15.0f64) {
        spacing_ok(&Trajectory::zigzag(origin(), w, h, legs, s))?;
    }

    #[test]
    fn lawnmower_spacing(w in 30.0..400.0f64, h in 30.0..400.0f64, lanes in 2usize..12, s in 2.0..15.0f64) {
        spacing_ok(&Trajectory::lawnmower(origin(), w, h, lanes, s))?;
    }

    #[test]
    fn ring_spacing(r in 20.0..300.0f64, s in 2.0..15.0f64) {
        spacing_ok(&Trajectory::ring(origin(), r, s))?;
    }
}
