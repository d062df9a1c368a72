//! Campaign generation and the measurement CSV format.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rem_core::calibration::CalibratedDelta;
use rem_core::geo::horizontal_distance;
use rem_core::propagation::{distorted_received_power_db, trpl_received_power_db};
use rem_core::{GeoPoint, Measurement, PropagationConfig, RemError};
use serde::{Deserialize, Serialize};

use crate::field::CorrelatedField;
use crate::spec::{Blob, SceneSpec};
use crate::trajectory::{Trajectory, TrajectorySpec};
use crate::Result;

const FIELD_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// One simulated flight with every component of the received power kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub name: String,
    pub measurements: Vec<Measurement>,
    /// Two-ray power, including the antenna distortion when the scene has one.
    pub deterministic_dbm: Vec<f64>,
    pub sf: Vec<f64>,
    pub blob_db: Vec<f64>,
    pub noise_db: Vec<f64>,
    /// Noise-free received power.
    pub truth_rsrp: Vec<f64>,
}

impl Campaign {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn locations(&self) -> Vec<GeoPoint> {
        self.measurements.iter().map(|m| m.location).collect()
    }
}

/// A realized scene: the campaigns plus the truth field behind them.
#[derive(Debug, Clone)]
pub struct SceneRealization {
    pub cfg: PropagationConfig,
    pub gs: GeoPoint,
    pub distortion: Option<CalibratedDelta>,
    pub blobs: Vec<Blob>,
    pub field: CorrelatedField,
    pub campaigns: Vec<Campaign>,
}

impl SceneRealization {
    /// Power from the deterministic model and the antenna distortion alone.
    pub fn deterministic_at(&self, p: &GeoPoint) -> Result<f64> {
        deterministic(&self.cfg, &self.gs, self.distortion.as_ref(), p)
    }

    pub fn blob_at(&self, p: &GeoPoint) -> f64 {
        blob_total(&self.blobs, p)
    }

    /// Noise-free truth. Away from flown points the shadow fading is its
    /// conditional mean given the realization.
    pub fn truth_at(&self, p: &GeoPoint) -> Result<f64> {
        Ok(self.deterministic_at(p)? + self.field.at(p) + self.blob_at(p))
    }

    pub fn campaign(&self, name: &str) -> Option<&Campaign> {
        self.campaigns.iter().find(|c| c.name == name)
    }
}

fn deterministic(cfg: &PropagationConfig, gs: &GeoPoint, distortion: Option<&CalibratedDelta>, p: &GeoPoint) -> Result<f64> {
    let g = cfg.link(gs, p)?;
    Ok(match distortion {
        Some(d) => distorted_received_power_db(cfg, &g, d)?,
        None => trpl_received_power_db(cfg, &g)?,
    })
}

fn blob_total(blobs: &[Blob], p: &GeoPoint) -> f64 {
    blobs.iter().map(|b| b.at_distance(horizontal_distance(&b.center, p))).sum()
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Realizes one joint shadow-fading field across every campaign so that
/// flights over the same area see the same environment.
pub fn generate_campaigns(scene: &SceneSpec, flights: &[(String, Trajectory)]) -> Result<SceneRealization> {
    scene.gs.validate()?;
    if !(scene.noise_sd >= 0.0) || !scene.noise_sd.is_finite() {
        return Err(RemError::InvalidInput(format!("noise_sd must be non-negative, got {}", scene.noise_sd)).into());
    }
    let cfg = scene.propagation.build()?;
    let distortion = scene.pattern_distortion.as_ref().map(|d| d.build()).transpose()?;

    let paths = flights.iter().map(|(_, t)| t.sample_points()).collect::<Result<Vec<_>>>()?;
    let all: Vec<GeoPoint> = paths.iter().flatten().copied().collect();
    let field = CorrelatedField::sample(&all, &scene.corr, &mut stream(scene.seed, FIELD_STREAM))?;
    let sf_all = field.values();

    let mut noise_rng = stream(scene.seed, NOISE_STREAM);
    let noise = Normal::new(0.0, scene.noise_sd).map_err(|e| RemError::InvalidInput(e.to_string()))?;

    let mut campaigns = Vec::with_capacity(flights.len());
    let mut offset = 0;
    for ((name, _), points) in flights.iter().zip(&paths) {
        let n = points.len();
        let sf = sf_all[offset..offset + n].to_vec();
        offset += n;
        let mut c = Campaign {
            name: name.clone(),
            measurements: Vec::with_capacity(n),
            deterministic_dbm: Vec::with_capacity(n),
            sf,
            blob_db: Vec::with_capacity(n),
            noise_db: Vec::with_capacity(n),
            truth_rsrp: Vec::with_capacity(n),
        };
        for (k, p) in points.iter().enumerate() {
            let det = deterministic(&cfg, &scene.gs, distortion.as_ref(), p)?;
            let blob = blob_total(&scene.blobs, p);
            let w = if scene.noise_sd > 0.0 { noise.sample(&mut noise_rng) } else { 0.0 };
            let truth = det + c.sf[k] + blob;
            c.deterministic_dbm.push(det);
            c.blob_db.push(blob);
            c.noise_db.push(w);
            c.truth_rsrp.push(truth);
            c.measurements.push(Measurement { location: *p, rsrp_dbm: truth + w, seq: k });
        }
        campaigns.push(c);
    }
    Ok(SceneRealization { cfg, gs: scene.gs, distortion, blobs: scene.blobs.clone(), field, campaigns })
}

/// Single-flight form of [`generate_campaigns`].
pub fn generate_campaign(scene: &SceneSpec, traj: &Trajectory) -> Result<SceneRealization> {
    generate_campaigns(scene, &[("campaign".to_string(), traj.clone())])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub name: String,
    pub trajectory: TrajectorySpec,
    /// Flight altitude override, m.
    #[serde(default)]
    pub altitude_m: Option<f64>,
}

/// Scene plus the flights to simulate, as read by the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDocument {
    pub scene: SceneSpec,
    pub campaigns: Vec<CampaignSpec>,
}

impl SynthDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn realize(&self) -> Result<SceneRealization> {
        let flights: Vec<(String, Trajectory)> = self
            .campaigns
            .iter()
            .map(|c| {
                let t = c.trajectory.build();
                (c.name.clone(), match c.altitude_m {
                    Some(a) => t.at_altitude(a),
                    None => t,
                })
            })
            .collect();
        generate_campaigns(&self.scene, &flights)
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    seq: usize,
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
    rsrp_dbm: f64,
}

/// Writes `seq,lat_deg,lon_deg,alt_m,rsrp_dbm` rows.
pub fn write_measurements_csv<W: Write>(writer: W, measurements: &[Measurement]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["seq", "lat_deg", "lon_deg", "alt_m", "rsrp_dbm"])?;
    for m in measurements {
        w.serialize(Row {
            seq: m.seq,
            lat_deg: m.location.lat,
            lon_deg: m.location.lon,
            alt_m: m.location.alt,
            rsrp_dbm: m.rsrp_dbm,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Lenient reader for files this crate wrote; the harness has the strict one.
pub fn read_measurements_csv<R: Read>(reader: R) -> Result<Vec<Measurement>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(Measurement {
                location: GeoPoint::new(row.lat_deg, row.lon_deg, row.alt_m)?,
                rsrp_dbm: row.rsrp_dbm,
                seq: row.seq,
            })
        })
        .collect()
}
