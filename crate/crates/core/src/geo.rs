//! Geodesic distances, bearings and the ground-station to UAV link geometry.
//!
//! Azimuths are degrees clockwise from true north in `[0, 360)`. Elevations
//! are degrees from the local horizontal. Altitudes are heights above the
//! reflecting ground plane.

use serde::{Deserialize, Serialize};

use crate::error::{RemError, Result};
use crate::scalar::Real;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wavelength in meters for a carrier frequency in Hz.
pub fn wavelength<T: Real>(carrier_hz: T) -> T {
    T::lit(SPEED_OF_LIGHT) / carrier_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T = f64> {
    /// Latitude, degrees.
    pub lat: T,
    /// Longitude, degrees.
    pub lon: T,
    /// Height above the reflecting ground plane, meters.
    pub alt: T,
}

impl<T: Real> GeoPoint<T> {
    pub fn new(lat: T, lon: T, alt: T) -> Result<Self> {
        let p = Self { lat, lon, alt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat >= T::lit(-90.0) && self.lat <= T::lit(90.0)) {
            return Err(RemError::InvalidInput(format!("latitude {} out of range", self.lat)));
        }
        if !(self.lon >= T::lit(-180.0) && self.lon <= T::lit(180.0)) {
            return Err(RemError::InvalidInput(format!("longitude {} out of range", self.lon)));
        }
        if !self.alt.is_finite() {
            return Err(RemError::InvalidInput("altitude is not finite".into()));
        }
        Ok(())
    }

    pub fn with_alt(self, alt: T) -> Self {
        Self { alt, ..self }
    }

    /// Both horizontal and vertical separations are exactly zero.
    pub fn coincides(&self, other: &Self) -> bool {
        self.lat == other.lat && self.lon == other.lon && self.alt == other.alt
    }
}

/// Central angle between two points, radians.
///
/// Evaluates the spherical law of cosines through its haversine identity,
/// which is the same angle but stays accurate at meter-scale separations
/// where the plain arccos form loses about half of its significant digits.
fn central_angle<T: Real>(a: &GeoPoint<T>, b: &GeoPoint<T>) -> T {
    let half = T::lit(0.5);
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = (dphi * half).sin();
    let s2 = (dlambda * half).sin();
    let h = s1 * s1 + phi1.cos() * phi2.cos() * s2 * s2;
    let h = h.clamp(T::zero(), T::one());
    T::lit(2.0) * h.sqrt().asin()
}

/// Great-circle distance between the ground projections of `a` and `b`.
pub fn horizontal_distance<T: Real>(a: &GeoPoint<T>, b: &GeoPoint<T>) -> T {
    if a.lat == b.lat && a.lon == b.lon {
        return T::zero();
    }
    T::lit(EARTH_RADIUS_M) * central_angle(a, b)
}

pub fn vertical_distance<T: Real>(a: &GeoPoint<T>, b: &GeoPoint<T>) -> T {
    (a.alt - b.alt).abs()
}

/// Initial great-circle bearing from `from` to `to`, degrees in `[0, 360)`.
/// Returns 0 when the ground projections coincide.
pub fn bearing<T: Real>(from: &GeoPoint<T>, to: &GeoPoint<T>) -> T {
    if from.lat == to.lat && from.lon == to.lon {
        return T::zero();
    }
    let (phi1, phi2) = (from.lat.to_radians(), to.lat.to_radians());
    let dlambda = (to.lon - from.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    wrap_degrees(y.atan2(x).to_degrees())
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_degrees<T: Real>(deg: T) -> T {
    let full = T::lit(360.0);
    let mut w = deg % full;
    if w < T::zero() {
        w += full;
    }
    if w >= full {
        w -= full;
    }
    w
}

/// Equirectangular local tangent plane anchored at an origin point.
///
/// Adequate for the few-kilometer extents of a single measurement campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame<T = f64> {
    pub origin: GeoPoint<T>,
    meters_per_deg_lat: T,
    meters_per_deg_lon: T,
}

impl<T: Real> LocalFrame<T> {
    pub fn new(origin: GeoPoint<T>) -> Self {
        let m = T::lit(EARTH_RADIUS_M) * T::pi() / T::lit(180.0);
        Self {
            origin,
            meters_per_deg_lat: m,
            meters_per_deg_lon: m * origin.lat.to_radians().cos(),
        }
    }

    /// `(east, north)` offsets in meters.
    pub fn to_local(&self, p: &GeoPoint<T>) -> (T, T) {
        (
            (p.lon - self.origin.lon) * self.meters_per_deg_lon,
            (p.lat - self.origin.lat) * self.meters_per_deg_lat,
        )
    }

    pub fn to_geo(&self, east: T, north: T, alt: T) -> GeoPoint<T> {
        GeoPoint {
            lat: self.origin.lat + north / self.meters_per_deg_lat,
            lon: self.origin.lon + east / self.meters_per_deg_lon,
            alt,
        }
    }
}

/// Line-of-sight and ground-reflection geometry of a ground-station to UAV link.
///
/// `theta_r` and `theta_r1` are measured downward from the UAV horizontal
/// (the UAV antenna faces the ground), so for the direct ray `theta_r == theta_t`.
/// `theta_t1` is the departure elevation of the reflected ray at the ground
/// station and is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry<T = f64> {
    pub d_h: T,
    pub d_v: T,
    pub d_3d: T,
    pub theta_t: T,
    pub theta_r: T,
    pub phi_t: T,
    pub phi_r: T,
    /// Ground station to specular point.
    pub d1: T,
    /// Specular point to UAV.
    pub d2: T,
    pub theta_ref: T,
    /// Phase lag of the reflected ray relative to the direct ray, radians.
    pub delta_tau: T,
    pub theta_t1: T,
    pub theta_r1: T,
    pub phi_t1: T,
    pub phi_r1: T,
}

impl<T: Real> LinkGeometry<T> {
    pub fn reflected_path(&self) -> T {
        self.d1 + self.d2
    }
}

/// Computes the full link geometry with the flat-earth image method.
pub fn link_geometry<T: Real>(gs: &GeoPoint<T>, uav: &GeoPoint<T>, wavelength: T) -> Result<LinkGeometry<T>> {
    let d_h = horizontal_distance(gs, uav);
    let d_v = vertical_distance(gs, uav);
    let d_3d = d_h.hypot(d_v);
    if d_3d == T::zero() {
        return Err(RemError::DegenerateLink);
    }
    let (h_gs, h_uav) = (gs.alt, uav.alt);
    if h_gs < T::zero() || h_uav < T::zero() {
        return Err(RemError::InvalidInput("antenna height below the ground plane".into()));
    }
    if !(wavelength > T::zero()) {
        return Err(RemError::InvalidInput("wavelength must be positive".into()));
    }

    let theta_t = (h_uav - h_gs).atan2(d_h).to_degrees();
    let phi_t = bearing(gs, uav);
    let phi_r = bearing(uav, gs);

    // Image source at -h_gs: the reflected path is the straight line to the image.
    let h_sum = h_gs + h_uav;
    let path_refl = d_h.hypot(h_sum);
    let (d1, d2) = if h_sum > T::zero() {
        (path_refl * h_gs / h_sum, path_refl * h_uav / h_sum)
    } else {
        let half = path_refl * T::lit(0.5);
        (half, half)
    };
    let theta_ref = h_sum.atan2(d_h).to_degrees();
    // (d1 + d2) - d_3d without cancellation.
    let excess = T::lit(4.0) * h_gs * h_uav / (path_refl + d_3d);
    let delta_tau = T::two_pi() * excess / wavelength;

    Ok(LinkGeometry {
        d_h,
        d_v,
        d_3d,
        theta_t,
        theta_r: theta_t,
        phi_t,
        phi_r,
        d1,
        d2,
        theta_ref,
        delta_tau,
        theta_t1: -theta_ref,
        theta_r1: theta_ref,
        phi_t1: phi_t,
        phi_r1: phi_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64, alt: f64) -> GeoPoint {
        GeoPoint::new(lat, lon, alt).unwrap()
    }

    /// Points `east`/`north` meters from a reference, for building exact layouts.
    fn offset(east: f64, north: f64, alt: f64) -> GeoPoint {
        LocalFrame::new(p(35.7, -78.7, 0.0)).to_geo(east, north, alt)
    }

    /// The law-of-cosines form, kept as the reference for the haversine evaluation.
    fn arccos_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * (a.lon - b.lon).to_radians().cos();
        EARTH_RADIUS_M * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn one_degree_of_latitude() {
        let expected = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;
        let d = horizontal_distance(&p(0.0, 0.0, 5.0), &p(1.0, 0.0, 90.0));
        assert!((d - 111_194.9).abs() < 0.5);
        assert!((d - expected).abs() < 1e-6);
        let d2 = horizontal_distance(&p(0.0, 10.0, 0.0), &p(0.0, 11.0, 0.0));
        assert!((d - d2).abs() < 1e-6);
        assert_eq!(horizontal_distance(&p(12.0, 34.0, 1.0), &p(12.0, 34.0, 9.0)), 0.0);
    }

    #[test]
    fn vertical_distance_is_absolute_difference() {
        assert_eq!(vertical_distance(&p(0.0, 0.0, 10.0), &p(0.0, 0.0, 100.0)), 90.0);
        assert_eq!(vertical_distance(&p(0.0, 0.0, 100.0), &p(0.0, 0.0, 10.0)), 90.0);
        assert_eq!(vertical_distance(&p(0.0, 0.0, 7.0), &p(1.0, 1.0, 7.0)), 0.0);
    }

    #[test]
    fn invalid_points_rejected() {
        assert!(GeoPoint::new(91.0, 0.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn equal_heights_put_specular_point_at_midpoint() {
        let g = link_geometry(&offset(0.0, 0.0, 50.0), &offset(100.0, 0.0, 50.0), 0.1).unwrap();
        let half = (50.0f64 * 50.0 + 50.0 * 50.0).sqrt();
        assert!((g.d_h - 100.0).abs() < 1e-6);
        assert!((g.d1 - half).abs() < 1e-6 && (g.d2 - half).abs() < 1e-6);
        assert!((g.theta_t).abs() < 1e-12);
        assert!((g.phi_t - 90.0).abs() < 1e-3);
        assert!((g.phi_r - 270.0).abs() < 1e-3);
    }

    #[test]
    fn vertical_link() {
        let g = link_geometry(&offset(0.0, 0.0, 10.0), &offset(0.0, 0.0, 60.0), 0.1).unwrap();
        assert_eq!(g.theta_t, 90.0);
        assert_eq!(g.theta_r, 90.0);
        assert_eq!(g.d_3d, 50.0);
    }

    #[test]
    fn coincident_endpoints_are_degenerate() {
        let a = offset(3.0, 4.0, 20.0);
        assert_eq!(link_geometry(&a, &a, 0.1), Err(RemError::DegenerateLink));
    }

    #[test]
    fn image_method_matches_2d_oracle() {
        // 2D oracle: GS at (0, 10), UAV at (40, 30), image source at (0, -10).
        let lambda = 0.085_654_988;
        let (h_gs, h_uav, d_h) = (10.0f64, 30.0f64, 40.0f64);
        let los = ((d_h - 0.0).powi(2) + (h_uav - h_gs).powi(2)).sqrt();
        let refl = ((d_h - 0.0).powi(2) + (h_uav + h_gs).powi(2)).sqrt();
        let tau = 2.0 * std::f64::consts::PI * (refl - los) / lambda;

        let g = link_geometry(&offset(0.0, 0.0, h_gs), &offset(0.0, d_h, h_uav), lambda).unwrap();
        assert!((g.d_h - d_h).abs() < 1e-6);
        assert!((g.d_3d - los).abs() < 1e-6);
        assert!((g.reflected_path() - refl).abs() < 1e-6);
        // delta_tau is ~1e2 radians; 1e-6 m of d_h error maps to ~1e-4 rad.
        assert!((g.delta_tau - tau).abs() < 1e-3);
        // Specular point splits d_h in ratio h_gs : h_uav.
        let x1 = d_h * h_gs / (h_gs + h_uav);
        assert!((g.d1 - x1.hypot(h_gs)).abs() < 1e-6);
        assert!((g.theta_ref - (40.0f64 / 40.0).atan().to_degrees()).abs() < 1e-6);
    }

    #[test]
    fn delta_tau_non_increasing_in_range() {
        let gs = offset(0.0, 0.0, 10.0);
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let g = link_geometry(&gs, &offset(k as f64 * 7.5, 0.0, 40.0), 0.1).unwrap();
            assert!(g.delta_tau <= last + 1e-12);
            last = g.delta_tau;
        }
    }

    #[test]
    fn works_in_single_precision() {
        let gs = GeoPoint::<f32>::new(35.0, -78.0, 10.0).unwrap();
        let uav = GeoPoint::<f32>::new(35.001, -78.0, 50.0).unwrap();
        let g = link_geometry(&gs, &uav, 0.0857f32).unwrap();
        // f32 latitude resolution near 35 deg is about 0.4 m.
        assert!((g.d_h - 111.19).abs() < 1.0);
        assert!(g.reflected_path() >= g.d_3d);
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (35.0f64..36.0, -79.0f64..-78.0, 0.0f64..120.0).prop_map(|(a, b, c)| p(a, b, c))
    }

    proptest! {
        #[test]
        fn haversine_matches_arccos_form(a in arb_point(), b in arb_point()) {
            let d = horizontal_distance(&a, &b);
            let reference = arccos_distance(&a, &b);
            prop_assume!(reference > 1000.0);
            prop_assert!((d - reference).abs() <= 1e-6 * reference);
        }

        #[test]
        fn metric_properties(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = horizontal_distance(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - horizontal_distance(&b, &a)).abs() <= 1e-9 * ab.max(1.0));
            let ac = horizontal_distance(&a, &c);
            let cb = horizontal_distance(&c, &b);
            prop_assert!(ab <= (ac + cb) * (1.0 + 1e-6));
        }

        #[test]
        fn link_invariants(a in arb_point(), b in arb_point(), lambda in 0.01f64..1.0) {
            prop_assume!(!a.coincides(&b));
            let g = link_geometry(&a, &b, lambda).unwrap();
            let lhs = g.d_3d * g.d_3d;
            let rhs = g.d_h * g.d_h + g.d_v * g.d_v;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs);
            prop_assert!(g.reflected_path() >= g.d_3d * (1.0 - 1e-12));
            prop_assert!(g.delta_tau >= 0.0);
            if a.alt > 0.0 && b.alt > 0.0 {
                prop_assert!(g.theta_ref > 0.0 && g.theta_ref <= 90.0);
            }
        }
    }
}
