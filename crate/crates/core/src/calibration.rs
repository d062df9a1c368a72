//! In-field estimation of the effective UAV antenna pattern and the ΔG
//! correction applied on top of the chamber pattern.
//!
//! The estimate neglects the ground-reflected ray and treats every sample
//! as a free-space link between the ground-station pattern and the
//! unknown UAV pattern, so it is biased at low elevations where the
//! reflection is strong.

use std::io::{Read, Write};

use crate::error::{RemError, Result};
use crate::geo::{self, GeoPoint};
use crate::propagation::{grid_axes, read_grid_rows, AntennaPattern};
use crate::scalar::Real;
use crate::shadow::Measurement;

pub const DEFAULT_BIN_DEG: f64 = 5.0;
pub const DEFAULT_MIN_SUPPORT: usize = 25;

/// Square angular bins tiling azimuth `[0, 360)` and elevation `[-90, 90]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleBins<T = f64> {
    bin_deg: T,
    n_az: usize,
    n_el: usize,
}

impl<T: Real> AngleBins<T> {
    pub fn new(bin_deg: T) -> Result<Self> {
        let n_el = (T::lit(180.0) / bin_deg).round();
        if !(bin_deg > T::zero()) || (n_el * bin_deg - T::lit(180.0)).abs() > T::lit(1e-9) {
            return Err(RemError::InvalidInput("bin width must divide 180 degrees".into()));
        }
        let n_el = n_el.as_f64() as usize;
        Ok(Self { bin_deg, n_az: 2 * n_el, n_el })
    }

    pub fn bin_deg(&self) -> T {
        self.bin_deg
    }

    pub fn len(&self) -> usize {
        self.n_az * self.n_el
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_az, self.n_el)
    }

    pub fn az_centers(&self) -> Vec<T> {
        (0..self.n_az).map(|k| (T::from_count(k) + T::lit(0.5)) * self.bin_deg).collect()
    }

    pub fn el_centers(&self) -> Vec<T> {
        (0..self.n_el).map(|k| T::lit(-90.0) + (T::from_count(k) + T::lit(0.5)) * self.bin_deg).collect()
    }

    /// Flat index (azimuth-major) of the bin containing the direction.
    pub fn index(&self, az: T, el: T) -> Option<usize> {
        if !(el >= T::lit(-90.0) && el <= T::lit(90.0)) {
            return None;
        }
        let ia = ((geo::wrap_degrees(az) / self.bin_deg).floor().as_f64() as usize).min(self.n_az - 1);
        let ie = (((el + T::lit(90.0)) / self.bin_deg).floor().as_f64() as usize).min(self.n_el - 1);
        Some(ia * self.n_el + ie)
    }

    pub fn center(&self, index: usize) -> (T, T) {
        let (ia, ie) = (index / self.n_el, index % self.n_el);
        (
            (T::from_count(ia) + T::lit(0.5)) * self.bin_deg,
            T::lit(-90.0) + (T::from_count(ie) + T::lit(0.5)) * self.bin_deg,
        )
    }
}

/// Per-bin UAV gain correction ΔG in dB.
///
/// Bins whose support is below `min_support` read as 0 dB, i.e. they fall
/// back to the chamber pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedDelta<T = f64> {
    bins: AngleBins<T>,
    delta_db: Vec<T>,
    support: Vec<usize>,
    pub min_support: usize,
}

impl<T: Real> CalibratedDelta<T> {
    pub fn zeros(bin_deg: T) -> Result<Self> {
        let bins = AngleBins::new(bin_deg)?;
        Ok(Self { bins, delta_db: vec![T::zero(); bins.len()], support: vec![0; bins.len()], min_support: 0 })
    }

    /// A synthetic distortion: `delta_db` on every bin whose center lies in
    /// the azimuth range `[az_lo, az_hi)` and elevation range `[el_lo, el_hi)`.
    pub fn sector(bin_deg: T, az: (T, T), el: (T, T), delta_db: T) -> Result<Self> {
        let mut d = Self::zeros(bin_deg)?;
        for k in 0..d.bins.len() {
            let (ca, ce) = d.bins.center(k);
            if ca >= az.0 && ca < az.1 && ce >= el.0 && ce < el.1 {
                d.delta_db[k] = delta_db;
            }
        }
        Ok(d)
    }

    pub fn bins(&self) -> &AngleBins<T> {
        &self.bins
    }

    pub fn raw_delta(&self) -> &[T] {
        &self.delta_db
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_supported(&self, index: usize) -> bool {
        self.support[index] >= self.min_support
    }

    /// ΔG at the direction, 0 where unsupported or outside the table.
    pub fn at(&self, az: T, el: T) -> T {
        match self.bins.index(az, el) {
            Some(k) if self.is_supported(k) => self.delta_db[k],
            _ => T::zero(),
        }
    }

    /// Writes `az_deg,el_deg,gain_dbi,support` rows, azimuth-major, with
    /// ΔG in the gain column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| RemError::PatternFormat(e.to_string());
        w.write_record(["az_deg", "el_deg", "gain_dbi", "support"]).map_err(io)?;
        for k in 0..self.bins.len() {
            let (az, el) = self.bins.center(k);
            w.write_record([
                az.as_f64().to_string(),
                el.as_f64().to_string(),
                self.delta_db[k].as_f64().to_string(),
                self.support[k].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| RemError::PatternFormat(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R, min_support: usize) -> Result<Self> {
        let rows = read_grid_rows(reader, &["az_deg", "el_deg", "gain_dbi", "support"])?;
        let (az, el) = grid_axes(&rows)?;
        if el.len() < 2 {
            return Err(RemError::PatternFormat("need at least two elevation bins".into()));
        }
        let bins = AngleBins::new(T::lit(el[1] - el[0]))?;
        if bins.shape() != (az.len(), el.len()) {
            return Err(RemError::PatternFormat("bins do not tile the sphere".into()));
        }
        let mut out = Self::zeros(bins.bin_deg())?;
        out.min_support = min_support;
        for (k, r) in rows.iter().enumerate() {
            if bins.index(T::lit(r[0]), T::lit(r[1])) != Some(k) {
                return Err(RemError::PatternFormat(format!("line {}: bin centers out of place", k + 2)));
            }
            if r[3] < 0.0 || r[3].fract() != 0.0 {
                return Err(RemError::PatternFormat(format!("line {}: support must be a count", k + 2)));
            }
            out.delta_db[k] = T::lit(r[2]);
            out.support[k] = r[3] as usize;
        }
        Ok(out)
    }
}

/// Amplitude ratio of one in-field sample with its link angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSample<T = f64> {
    /// `sqrt(P_rx / P_tx)`, linear.
    pub amplitude: T,
    pub phi_r: T,
    pub theta_r: T,
    pub phi_t: T,
    pub theta_t: T,
    pub d_3d: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeEstimate<T = f64> {
    pub samples: Vec<AmplitudeSample<T>>,
    /// Measurements skipped because they coincide with the ground station.
    pub skipped: usize,
}

/// Per-sample UAV-effective amplitude ratio, ground reflection neglected.
pub fn estimate_a_uav<T: Real>(measurements: &[Measurement<T>], gs: &GeoPoint<T>, tx_power_dbm: T) -> AmplitudeEstimate<T> {
    let mut samples = Vec::with_capacity(measurements.len());
    let mut skipped = 0;
    for m in measurements {
        // Only the angles and d_3d are used; the wavelength is irrelevant here.
        let Ok(g) = geo::link_geometry(gs, &m.location, T::one()) else {
            skipped += 1;
            continue;
        };
        samples.push(AmplitudeSample {
            amplitude: (m.rsrp_dbm - tx_power_dbm).db_to_linear().sqrt(),
            phi_r: g.phi_r,
            theta_r: g.theta_r,
            phi_t: g.phi_t,
            theta_t: g.theta_t,
            d_3d: g.d_3d,
        });
    }
    AmplitudeEstimate { samples, skipped }
}

/// Effective UAV gain per angular bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePattern<T = f64> {
    bins: AngleBins<T>,
    gain_dbi: Vec<T>,
    support: Vec<usize>,
    pub min_support: usize,
}

impl<T: Real> EffectivePattern<T> {
    pub fn bins(&self) -> &AngleBins<T> {
        &self.bins
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_supported(&self, index: usize) -> bool {
        self.support[index] >= self.min_support
    }

    /// Gain of a supported bin.
    pub fn gain(&self, index: usize) -> Option<T> {
        self.is_supported(index).then(|| self.gain_dbi[index])
    }

    pub fn gain_at(&self, az: T, el: T) -> Option<T> {
        self.bins.index(az, el).and_then(|k| self.gain(k))
    }

    pub fn supported_bins(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.bins.len()).filter(|&k| self.is_supported(k))
    }

    /// Tabulates the estimate at bin centers, filling unsupported bins from
    /// `fallback`.
    pub fn to_pattern(&self, fallback: &AntennaPattern<T>) -> AntennaPattern<T> {
        let gain = (0..self.bins.len())
            .map(|k| {
                self.gain(k).unwrap_or_else(|| {
                    let (az, el) = self.bins.center(k);
                    fallback.gain_at(az, el)
                })
            })
            .collect();
        AntennaPattern::new(self.bins.az_centers(), self.bins.el_centers(), gain, "calibrated").unwrap()
    }

    /// Support-weighted mean gain per azimuth bin over elevation bins whose
    /// centers lie below `max_el`. `None` where no supported bin contributes.
    pub fn azimuth_marginal(&self, max_el: T) -> Vec<Option<T>> {
        let (n_az, n_el) = self.bins.shape();
        let el_centers = self.bins.el_centers();
        (0..n_az)
            .map(|ia| {
                let (mut acc, mut w) = (T::zero(), 0usize);
                for (ie, el) in el_centers.iter().enumerate() {
                    let k = ia * n_el + ie;
                    if *el < max_el && self.is_supported(k) && self.support[k] > 0 {
                        acc += self.gain_dbi[k] * T::from_count(self.support[k]);
                        w += self.support[k];
                    }
                }
                (w > 0).then(|| acc / T::from_count(w))
            })
            .collect()
    }
}

/// Bins the distance-compensated path gain by arrival direction.
///
/// Each sample contributes `(4π d / λ)² · Â² / G_gs(φ_t, θ_t)` in linear
/// units; bins average these before converting to dBi.
pub fn estimate_effective_pattern<T: Real>(
    ratios: &[AmplitudeSample<T>],
    gs_pattern: &AntennaPattern<T>,
    wavelength: T,
    bin_deg: T,
    min_support: usize,
) -> Result<EffectivePattern<T>> {
    if ratios.is_empty() {
        return Err(RemError::InsufficientData { needed: 1, got: 0 });
    }
    let bins = AngleBins::new(bin_deg)?;
    let mut sum = vec![T::zero(); bins.len()];
    let mut support = vec![0usize; bins.len()];
    let k = T::lit(4.0) * T::pi() / wavelength;
    for s in ratios {
        let Some(idx) = bins.index(s.phi_r, s.theta_r) else { continue };
        let g_gs = gs_pattern.linear_gain_at(s.phi_t, s.theta_t);
        let kd = k * s.d_3d;
        sum[idx] += kd * kd * s.amplitude * s.amplitude / g_gs;
        support[idx] += 1;
    }
    let min_support = min_support.max(1);
    if !support.iter().any(|&c| c >= min_support) {
        return Err(RemError::NoSupportedBins);
    }
    let gain_dbi = sum
        .iter()
        .zip(&support)
        .map(|(&s, &c)| if c > 0 { (s / T::from_count(c)).linear_to_db() } else { T::zero() })
        .collect();
    Ok(EffectivePattern { bins, gain_dbi, support, min_support })
}

/// ΔG = calibrated minus chamber gain on supported bins, 0 elsewhere.
pub fn delta_gain<T: Real>(effective: &EffectivePattern<T>, baseline: &AntennaPattern<T>, min_support: usize) -> CalibratedDelta<T> {
    let bins = effective.bins;
    let mut delta_db = vec![T::zero(); bins.len()];
    for (k, d) in delta_db.iter_mut().enumerate() {
        if effective.support[k] >= min_support && effective.support[k] > 0 {
            let (az, el) = bins.center(k);
            *d = effective.gain_dbi[k] - baseline.gain_at(az, el);
        }
    }
    CalibratedDelta { bins, delta_db, support: effective.support.clone(), min_support: min_support.max(1) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalFrame;
    use crate::propagation::{fspl_received_power_db, PropagationConfig};

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::new(35.72, -78.69, 0.0).unwrap())
    }

    /// Free-space measurements on a ring of radii and heights around the GS.
    fn fspl_campaign(cfg: &PropagationConfig, gs: &GeoPoint, distortion: Option<&CalibratedDelta>) -> Vec<Measurement> {
        let f = frame();
        let mut out = Vec::new();
        let mut seq = 0;
        for ia in 0..720 {
            let az = (ia as f64 + 0.25) * 0.5;
            for (r, h) in [(150.0, 40.0), (300.0, 60.0), (220.0, 90.0)] {
                let (e, n) = (r * az.to_radians().sin(), r * az.to_radians().cos());
                let loc = f.to_geo(e, n, h);
                let g = cfg.link(gs, &loc).unwrap();
                let adj = distortion.map_or(0.0, |d| d.at(g.phi_r, g.theta_r));
                out.push(Measurement { location: loc, rsrp_dbm: fspl_received_power_db(cfg, &g).unwrap() + adj, seq });
                seq += 1;
            }
        }
        out
    }

    #[test]
    fn unit_and_twenty_db_ratios() {
        let f = frame();
        let gs = f.to_geo(0.0, 0.0, 10.0);
        let ms = vec![
            Measurement { location: f.to_geo(0.0, 100.0, 50.0), rsrp_dbm: 30.0, seq: 0 },
            Measurement { location: f.to_geo(0.0, 100.0, 50.0), rsrp_dbm: 10.0, seq: 1 },
            Measurement { location: gs, rsrp_dbm: 10.0, seq: 2 },
        ];
        let est = estimate_a_uav(&ms, &gs, 30.0);
        assert_eq!(est.skipped, 1);
        assert!((est.samples[0].amplitude - 1.0).abs() < 1e-12);
        assert!((est.samples[1].amplitude - 0.1).abs() < 1e-12);
    }

    #[test]
    fn friis_amplitude_per_sample() {
        let cfg = PropagationConfig::new(3.5e9, 20.0);
        let gs = frame().to_geo(0.0, 0.0, 10.0);
        let ms = fspl_campaign(&cfg, &gs, None);
        let est = estimate_a_uav(&ms, &gs, cfg.tx_power_dbm);
        for s in &est.samples {
            let friis = cfg.wavelength() / (4.0 * std::f64::consts::PI * s.d_3d);
            assert!(((s.amplitude - friis) / friis).abs() < 1e-9);
        }
    }

    #[test]
    fn isotropic_free_space_calibrates_to_zero_dbi() {
        let cfg = PropagationConfig::new(3.5e9, 20.0);
        let gs = frame().to_geo(0.0, 0.0, 10.0);
        let est = estimate_a_uav(&fspl_campaign(&cfg, &gs, None), &gs, cfg.tx_power_dbm);
        let eff = estimate_effective_pattern(&est.samples, &cfg.gs_pattern, cfg.wavelength(), 5.0, 10).unwrap();
        assert!(eff.supported_bins().count() > 50);
        for k in eff.supported_bins() {
            assert!(eff.gain(k).unwrap().abs() < 1e-9);
        }
        let d = delta_gain(&eff, &cfg.uav_pattern, 10);
        assert!(d.raw_delta().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn sector_blockage_recovered() {
        let mut cfg = PropagationConfig::new(3.5e9, 20.0);
        cfg.gs_pattern = AntennaPattern::half_wave_dipole(1.0);
        let gs = frame().to_geo(0.0, 0.0, 10.0);
        let blockage = CalibratedDelta::sector(5.0, (90.0, 180.0), (-90.0, 90.0), -6.0).unwrap();
        let ms = fspl_campaign(&cfg, &gs, Some(&blockage));
        let est = estimate_a_uav(&ms, &gs, cfg.tx_power_dbm);
        let eff = estimate_effective_pattern(&est.samples, &cfg.gs_pattern, cfg.wavelength(), 5.0, 10).unwrap();
        let d = delta_gain(&eff, &cfg.uav_pattern, 10);
        for k in eff.supported_bins() {
            let (az, _) = d.bins().center(k);
            let want = if (90.0..180.0).contains(&az) { -6.0 } else { 0.0 };
            assert!((d.raw_delta()[k] - want).abs() < 0.5, "bin {k}: {}", d.raw_delta()[k]);
        }
    }

    #[test]
    fn unsupported_bins_fall_back_to_zero() {
        let cfg = PropagationConfig::new(3.5e9, 20.0);
        let gs = frame().to_geo(0.0, 0.0, 10.0);
        let ms = fspl_campaign(&cfg, &gs, None);
        let est = estimate_a_uav(&ms[..30], &gs, cfg.tx_power_dbm);
        let eff = estimate_effective_pattern(&est.samples, &cfg.gs_pattern, cfg.wavelength(), 5.0, 1).unwrap();
        let d = delta_gain(&eff, &AntennaPattern::new(vec![0.0], vec![-90.0, 90.0], vec![-3.0, -3.0], "b").unwrap(), 1000);
        assert!(d.raw_delta().iter().all(|v| *v == 0.0));
        assert_eq!(d.at(10.0, 20.0), 0.0);
        assert!(matches!(
            estimate_effective_pattern(&est.samples, &cfg.gs_pattern, cfg.wavelength(), 5.0, 1000),
            Err(RemError::NoSupportedBins)
        ));
    }

    #[test]
    fn tx_power_shift_leaves_delta_unchanged() {
        let mut cfg = PropagationConfig::new(3.5e9, 20.0);
        cfg.gs_pattern = AntennaPattern::half_wave_dipole(1.0);
        let gs = frame().to_geo(0.0, 0.0, 10.0);
        let ms = fspl_campaign(&cfg, &gs, None);
        let d0 = {
            let est = estimate_a_uav(&ms, &gs, cfg.tx_power_dbm);
            let eff = estimate_effective_pattern(&est.samples, &cfg.gs_pattern, cfg.wavelength(), 5.0, 5).unwrap();
            delta_gain(&eff, &cfg.uav_pattern, 5)
        };
        let shifted: Vec<_> = ms.iter().map(|m| Measurement { rsrp_dbm: m.rsrp_dbm + 7.5, ..*m }).collect();
        let est = estimate_a_uav(&shifted, &gs, cfg.tx_power_dbm + 7.5);
        let eff = estimate_effective_pattern(&est.samples, &cfg.gs_pattern, cfg.wavelength(), 5.0, 5).unwrap();
        let d1 = delta_gain(&eff, &cfg.uav_pattern, 5);
        for (a, b) in d0.raw_delta().iter().zip(d1.raw_delta()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_lookup_and_csv_round_trip() {
        let d = CalibratedDelta::sector(5.0, (90.0, 180.0), (0.0, 30.0), -6.0).unwrap();
        assert_eq!(d.at(100.0, 10.0), -6.0);
        assert_eq!(d.at(100.0, 40.0), 0.0);
        assert_eq!(d.at(-200.0, 10.0), -6.0);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = CalibratedDelta::<f64>::read_csv(buf.as_slice(), 0).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn bins_reject_non_dividing_width() {
        assert!(AngleBins::<f64>::new(7.0).is_err());
        let b = AngleBins::<f64>::new(5.0).unwrap();
        assert_eq!(b.shape(), (72, 36));
        assert_eq!(b.index(359.99, 90.0), Some(71 * 36 + 35));
        assert_eq!(b.index(0.0, -90.0), Some(0));
    }
}
