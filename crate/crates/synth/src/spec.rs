//! Serializable scene description.

use std::path::PathBuf;

use num_complex::Complex;
use rem_core::calibration::CalibratedDelta;
use rem_core::propagation::{AntennaPattern, Polarization, PropagationConfig, DEFAULT_GROUND_PERMITTIVITY};
use rem_core::{CorrelationModel, GeoPoint};
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AntennaSpec {
    #[default]
    Isotropic,
    Dipole {
        #[serde(default = "default_dipole_step")]
        step_deg: f64,
    },
    /// `az_deg,el_deg,gain_dbi` pattern file.
    File { path: PathBuf },
}

fn default_dipole_step() -> f64 {
    1.0
}

impl AntennaSpec {
    pub fn build(&self) -> Result<AntennaPattern> {
        Ok(match self {
            AntennaSpec::Isotropic => AntennaPattern::isotropic(),
            AntennaSpec::Dipole { step_deg } => AntennaPattern::half_wave_dipole(*step_deg),
            AntennaSpec::File { path } => {
                AntennaPattern::read_csv(std::fs::File::open(path)?, path.display().to_string())?
            }
        })
    }
}

fn default_permittivity() -> f64 {
    DEFAULT_GROUND_PERMITTIVITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSpec {
    pub carrier_hz: f64,
    pub tx_power_dbm: f64,
    #[serde(default = "default_permittivity")]
    pub ground_rel_permittivity: f64,
    #[serde(default)]
    pub polarization: Polarization,
    #[serde(default)]
    pub gs_antenna: AntennaSpec,
    #[serde(default)]
    pub uav_antenna: AntennaSpec,
    /// Fixed reflection coefficient `[re, im]` replacing the Fresnel value.
    #[serde(default)]
    pub gamma_override: Option<[f64; 2]>,
}

impl PropagationSpec {
    pub fn new(carrier_hz: f64, tx_power_dbm: f64) -> Self {
        Self {
            carrier_hz,
            tx_power_dbm,
            ground_rel_permittivity: DEFAULT_GROUND_PERMITTIVITY,
            polarization: Polarization::Vertical,
            gs_antenna: AntennaSpec::Isotropic,
            uav_antenna: AntennaSpec::Isotropic,
            gamma_override: None,
        }
    }

    pub fn build(&self) -> Result<PropagationConfig> {
        let mut cfg = PropagationConfig::new(self.carrier_hz, self.tx_power_dbm);
        cfg.ground_rel_permittivity = self.ground_rel_permittivity;
        cfg.polarization = self.polarization;
        cfg.gs_pattern = self.gs_antenna.build()?;
        cfg.uav_pattern = self.uav_antenna.build()?;
        cfg.gamma_override = self.gamma_override.map(|[re, im]| Complex::new(re, im));
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Cosine-tapered shadow: `depth_db` at the center, 0 at and beyond the rim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: GeoPoint,
    pub radius_m: f64,
    pub depth_db: f64,
}

impl Blob {
    /// Contribution at horizontal distance `d_h` from the center.
    pub fn at_distance(&self, d_h: f64) -> f64 {
        if d_h >= self.radius_m {
            0.0
        } else {
            self.depth_db * 0.5 * (1.0 + (std::f64::consts::PI * d_h / self.radius_m).cos())
        }
    }
}

/// Gain change applied to the UAV antenna of the simulated link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistortionSpec {
    /// `delta_db` over an azimuth × elevation sector of bins.
    Sector { bin_deg: f64, az_deg: [f64; 2], el_deg: [f64; 2], delta_db: f64 },
    /// ΔG table in the `az_deg,el_deg,gain_dbi,support` format; every bin counts as supported.
    File { path: PathBuf },
}

impl DistortionSpec {
    pub fn build(&self) -> Result<CalibratedDelta> {
        Ok(match self {
            DistortionSpec::Sector { bin_deg, az_deg, el_deg, delta_db } => {
                CalibratedDelta::sector(*bin_deg, (az_deg[0], az_deg[1]), (el_deg[0], el_deg[1]), *delta_db)?
            }
            DistortionSpec::File { path } => CalibratedDelta::read_csv(std::fs::File::open(path)?, 0)?,
        })
    }
}

/// Ground truth for a synthetic campaign: deterministic propagation plus
/// correlated shadow fading, blobs and white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub gs: GeoPoint,
    pub propagation: PropagationSpec,
    pub corr: CorrelationModel,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub blobs: Vec<Blob>,
    #[serde(default)]
    pub pattern_distortion: Option<DistortionSpec>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
