//! Deterministic propagation: Fresnel ground reflection and the two-ray
//! received-power model, with an optional per-angle UAV gain correction.

mod antenna;

pub use antenna::{AntennaPattern, DIPOLE_PEAK_DBI};
pub(crate) use antenna::{grid_axes, read_grid_rows};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibratedDelta;
use crate::error::{RemError, Result};
use crate::geo::{self, GeoPoint, LinkGeometry};
use crate::scalar::Real;

/// Default relative permittivity of average ground.
pub const DEFAULT_GROUND_PERMITTIVITY: f64 = 15.0;

/// Path loss reported for links whose two rays cancel exactly.
pub const DEFAULT_PATH_LOSS_CEILING_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    #[default]
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig<T = f64> {
    pub carrier_hz: T,
    pub tx_power_dbm: T,
    pub ground_rel_permittivity: T,
    pub polarization: Polarization,
    pub gs_pattern: AntennaPattern<T>,
    pub uav_pattern: AntennaPattern<T>,
    /// Replaces the Fresnel coefficient when set.
    pub gamma_override: Option<Complex<T>>,
    pub path_loss_ceiling_db: T,
}

impl<T: Real> PropagationConfig<T> {
    /// Isotropic antennas over average ground, vertical polarization.
    pub fn new(carrier_hz: T, tx_power_dbm: T) -> Self {
        Self {
            carrier_hz,
            tx_power_dbm,
            ground_rel_permittivity: T::lit(DEFAULT_GROUND_PERMITTIVITY),
            polarization: Polarization::Vertical,
            gs_pattern: AntennaPattern::isotropic(),
            uav_pattern: AntennaPattern::isotropic(),
            gamma_override: None,
            path_loss_ceiling_db: T::lit(DEFAULT_PATH_LOSS_CEILING_DB),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > T::zero()) {
            return Err(RemError::InvalidInput("carrier frequency must be positive".into()));
        }
        if !(self.ground_rel_permittivity >= T::one()) {
            return Err(RemError::InvalidInput("relative permittivity must be at least 1".into()));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(RemError::InvalidInput("transmit power is not finite".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> T {
        geo::wavelength(self.carrier_hz)
    }

    pub fn link(&self, gs: &GeoPoint<T>, uav: &GeoPoint<T>) -> Result<LinkGeometry<T>> {
        geo::link_geometry(gs, uav, self.wavelength())
    }

    fn gamma(&self, theta_ref: T) -> Complex<T> {
        self.gamma_override
            .unwrap_or_else(|| reflection_coefficient(theta_ref, self.ground_rel_permittivity, self.polarization))
    }
}

/// Fresnel reflection coefficient of a lossless dielectric half-space at
/// grazing angle `theta_ref` (degrees above the surface).
pub fn reflection_coefficient<T: Real>(theta_ref: T, eps_r: T, pol: Polarization) -> Complex<T> {
    let psi = theta_ref.to_radians();
    let (s, c) = (psi.sin(), psi.cos());
    let root = (eps_r - c * c).max(T::zero()).sqrt();
    let gamma = match pol {
        Polarization::Horizontal => (s - root) / (s + root),
        Polarization::Vertical => (eps_r * s - root) / (eps_r * s + root),
    };
    Complex::new(gamma, T::zero())
}

/// Two-ray attenuation factor (received over transmitted power, linear).
pub fn trpl_attenuation<T: Real>(cfg: &PropagationConfig<T>, geom: &LinkGeometry<T>) -> Result<T> {
    attenuation_with(cfg, geom, |_, _| T::zero())
}

/// Two-ray attenuation with the UAV gain of both rays adjusted by a ΔG table.
pub fn trpl_attenuation_distorted<T: Real>(
    cfg: &PropagationConfig<T>,
    geom: &LinkGeometry<T>,
    distortion: &CalibratedDelta<T>,
) -> Result<T> {
    attenuation_with(cfg, geom, |az, el| distortion.at(az, el))
}

fn attenuation_with<T: Real>(
    cfg: &PropagationConfig<T>,
    geom: &LinkGeometry<T>,
    uav_adjust_db: impl Fn(T, T) -> T,
) -> Result<T> {
    if !(geom.d_3d > T::zero()) {
        return Err(RemError::DegenerateLink);
    }
    let lambda = cfg.wavelength();
    let los_gain = (cfg.gs_pattern.gain_at(geom.phi_t, geom.theta_t)
        + cfg.uav_pattern.gain_at(geom.phi_r, geom.theta_r)
        + uav_adjust_db(geom.phi_r, geom.theta_r))
    .db_to_linear();
    let refl_gain = (cfg.gs_pattern.gain_at(geom.phi_t1, geom.theta_t1)
        + cfg.uav_pattern.gain_at(geom.phi_r1, geom.theta_r1)
        + uav_adjust_db(geom.phi_r1, geom.theta_r1))
    .db_to_linear();

    let los = Complex::new(los_gain.sqrt() / geom.d_3d, T::zero());
    let phase = Complex::new(geom.delta_tau.cos(), -geom.delta_tau.sin());
    let refl = cfg.gamma(geom.theta_ref) * phase * (refl_gain.sqrt() / geom.reflected_path());
    let scale = lambda / (T::lit(4.0) * T::pi());
    Ok(scale * scale * (los + refl).norm_sqr())
}

fn attenuation_to_db<T: Real>(cfg: &PropagationConfig<T>, a: T) -> T {
    if !(a > T::zero()) {
        return cfg.path_loss_ceiling_db;
    }
    (-a.linear_to_db()).min(cfg.path_loss_ceiling_db)
}

/// Two-ray path loss in dB, capped at the configured ceiling.
pub fn trpl_path_loss_db<T: Real>(cfg: &PropagationConfig<T>, geom: &LinkGeometry<T>) -> Result<T> {
    Ok(attenuation_to_db(cfg, trpl_attenuation(cfg, geom)?))
}

/// Received power in dBm predicted by the two-ray model.
pub fn trpl_received_power_db<T: Real>(cfg: &PropagationConfig<T>, geom: &LinkGeometry<T>) -> Result<T> {
    Ok(cfg.tx_power_dbm - trpl_path_loss_db(cfg, geom)?)
}

/// Two-ray received power plus the calibrated UAV gain correction at the
/// direct-ray arrival angle.
pub fn calibrated_received_power_db<T: Real>(
    cfg: &PropagationConfig<T>,
    geom: &LinkGeometry<T>,
    delta_gain: &CalibratedDelta<T>,
) -> Result<T> {
    Ok(trpl_received_power_db(cfg, geom)? + delta_gain.at(geom.phi_r, geom.theta_r))
}

/// Received power with the UAV pattern distorted by `distortion` on both rays.
pub fn distorted_received_power_db<T: Real>(
    cfg: &PropagationConfig<T>,
    geom: &LinkGeometry<T>,
    distortion: &CalibratedDelta<T>,
) -> Result<T> {
    let a = trpl_attenuation_distorted(cfg, geom, distortion)?;
    Ok(cfg.tx_power_dbm - attenuation_to_db(cfg, a))
}

/// Friis free-space received power in dBm with the line-of-sight gains.
pub fn fspl_received_power_db<T: Real>(cfg: &PropagationConfig<T>, geom: &LinkGeometry<T>) -> Result<T> {
    if !(geom.d_3d > T::zero()) {
        return Err(RemError::DegenerateLink);
    }
    let gains = cfg.gs_pattern.gain_at(geom.phi_t, geom.theta_t) + cfg.uav_pattern.gain_at(geom.phi_r, geom.theta_r);
    let fspl = T::lit(20.0) * (T::lit(4.0) * T::pi() * geom.d_3d / cfg.wavelength()).log10();
    Ok(cfg.tx_power_dbm + gains - fspl)
}
