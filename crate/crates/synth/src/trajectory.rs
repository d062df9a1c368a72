//! Flight paths and their resampling at a fixed 3D spacing.

use rem_core::{GeoPoint, LocalFrame, RemError};
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Zigzag,
    Lawnmower,
    Ring,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<GeoPoint>,
    pub kind: TrajectoryKind,
    pub sample_spacing_m: f64,
}

/// Builder form of a trajectory, as it appears in scene documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrajectorySpec {
    Zigzag { origin: GeoPoint, width_m: f64, height_m: f64, legs: usize, spacing_m: f64 },
    Lawnmower { origin: GeoPoint, width_m: f64, height_m: f64, lanes: usize, spacing_m: f64 },
    Ring { center: GeoPoint, radius_m: f64, spacing_m: f64 },
    Custom { waypoints: Vec<GeoPoint>, spacing_m: f64 },
}

impl TrajectorySpec {
    pub fn build(&self) -> Trajectory {
        match self {
            TrajectorySpec::Zigzag { origin, width_m, height_m, legs, spacing_m } => {
                Trajectory::zigzag(*origin, *width_m, *height_m, *legs, *spacing_m)
            }
            TrajectorySpec::Lawnmower { origin, width_m, height_m, lanes, spacing_m } => {
                Trajectory::lawnmower(*origin, *width_m, *height_m, *lanes, *spacing_m)
            }
            TrajectorySpec::Ring { center, radius_m, spacing_m } => Trajectory::ring(*center, *radius_m, *spacing_m),
            TrajectorySpec::Custom { waypoints, spacing_m } => Trajectory::custom(waypoints.clone(), *spacing_m),
        }
    }
}

const RING_VERTICES: usize = 720;

impl Trajectory {
    /// Diagonal legs sweeping east and west across a `width × height`
    /// rectangle whose south-west corner is `origin`, at `origin.alt`.
    pub fn zigzag(origin: GeoPoint, width_m: f64, height_m: f64, legs: usize, spacing_m: f64) -> Self {
        let f = LocalFrame::new(origin);
        let legs = legs.max(1);
        let waypoints = (0..=legs)
            .map(|k| {
                let e = if k % 2 == 0 { 0.0 } else { width_m };
                f.to_geo(e, height_m * k as f64 / legs as f64, origin.alt)
            })
            .collect();
        Self { waypoints, kind: TrajectoryKind::Zigzag, sample_spacing_m: spacing_m }
    }

    /// Parallel east-west lanes joined at alternating ends.
    pub fn lawnmower(origin: GeoPoint, width_m: f64, height_m: f64, lanes: usize, spacing_m: f64) -> Self {
        let f = LocalFrame::new(origin);
        let lanes = lanes.max(2);
        let mut waypoints = Vec::with_capacity(2 * lanes);
        for k in 0..lanes {
            let n = height_m * k as f64 / (lanes - 1) as f64;
            let (a, b) = if k % 2 == 0 { (0.0, width_m) } else { (width_m, 0.0) };
            waypoints.push(f.to_geo(a, n, origin.alt));
            waypoints.push(f.to_geo(b, n, origin.alt));
        }
        Self { waypoints, kind: TrajectoryKind::Lawnmower, sample_spacing_m: spacing_m }
    }

    /// Closed circle of horizontal radius `radius_m` around `center`.
    pub fn ring(center: GeoPoint, radius_m: f64, spacing_m: f64) -> Self {
        let f = LocalFrame::new(center);
        let waypoints = (0..=RING_VERTICES)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / RING_VERTICES as f64;
                f.to_geo(radius_m * a.sin(), radius_m * a.cos(), center.alt)
            })
            .collect();
        Self { waypoints, kind: TrajectoryKind::Ring, sample_spacing_m: spacing_m }
    }

    pub fn custom(waypoints: Vec<GeoPoint>, spacing_m: f64) -> Self {
        Self { waypoints, kind: TrajectoryKind::Custom, sample_spacing_m: spacing_m }
    }

    /// Same path flown at `alt`.
    pub fn at_altitude(&self, alt: f64) -> Self {
        Self { waypoints: self.waypoints.iter().map(|p| p.with_alt(alt)).collect(), ..self.clone() }
    }

    /// Points along the path, each exactly `sample_spacing_m` (straight-line,
    /// 3D) from its predecessor, starting at the first waypoint.
    pub fn sample_points(&self) -> Result<Vec<GeoPoint>> {
        if self.waypoints.is_empty() || !(self.sample_spacing_m > 0.0) {
            return Err(RemError::InvalidInput("trajectory needs waypoints and a positive spacing".into()).into());
        }
        for w in &self.waypoints {
            w.validate()?;
        }
        let f = LocalFrame::new(self.waypoints[0]);
        let local: Vec<[f64; 3]> = self
            .waypoints
            .iter()
            .map(|p| {
                let (e, n) = f.to_local(p);
                [e, n, p.alt]
            })
            .collect();
        let s = self.sample_spacing_m;
        let mut out = vec![local[0]];
        let (mut seg, mut t) = (0usize, 0.0f64);
        'walk: loop {
            let cur = *out.last().expect("non-empty");
            while seg + 1 < local.len() {
                if let Some(t_hit) = sphere_exit(&local[seg], &local[seg + 1], &cur, s, t) {
                    t = t_hit;
                    out.push(lerp(&local[seg], &local[seg + 1], t));
                    continue 'walk;
                }
                seg += 1;
                t = 0.0;
            }
            break;
        }
        Ok(out.into_iter().map(|[e, n, h]| f.to_geo(e, n, h)).collect())
    }
}

fn lerp(a: &[f64; 3], b: &[f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// Smallest `t ∈ [t_min, 1]` at which `a + t(b − a)` is at distance `r` from
/// `c` while leaving the sphere, if any.
fn sphere_exit(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3], r: f64, t_min: f64) -> Option<f64> {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let m = [a[0] - c[0], a[1] - c[1], a[2] - c[2]];
    let qa = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if qa == 0.0 {
        return None;
    }
    let qb = 2.0 * (d[0] * m[0] + d[1] * m[1] + d[2] * m[2]);
    let qc = m[0] * m[0] + m[1] * m[1] + m[2] * m[2] - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let t = (-qb + disc.sqrt()) / (2.0 * qa);
    (t >= t_min - 1e-12 && t <= 1.0).then_some(t.max(t_min))
}
