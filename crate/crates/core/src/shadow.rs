//! Shadow-fading residuals and their spatial correlation.
//!
//! The correlation model is separable: exponential in vertical separation
//! and bi-exponential in horizontal separation,
//! `R = exp(-q·d_v) · [a·exp(-p1·d_h) + (1 - a)·exp(-p2·d_h)]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibratedDelta;
use crate::error::{RemError, Result};
use crate::geo::{horizontal_distance, vertical_distance, GeoPoint};
use crate::optim::nelder_mead;
use crate::propagation::{self, PropagationConfig};
use crate::scalar::Real;

/// One received-power sample of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement<T = f64> {
    pub location: GeoPoint<T>,
    pub rsrp_dbm: T,
    pub seq: usize,
}

/// Shadow-fading residual (measured minus deterministic model), dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfSample<T = f64> {
    pub location: GeoPoint<T>,
    pub z: T,
    pub seq: usize,
}

/// Deterministic model the residuals are taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceModel {
    #[default]
    Trpl,
    Fspl,
}

/// Residuals against the two-ray model, or against the calibrated two-ray
/// model when `delta_gain` is supplied.
pub fn extract_sf<T: Real>(
    measurements: &[Measurement<T>],
    cfg: &PropagationConfig<T>,
    gs: &GeoPoint<T>,
    delta_gain: Option<&CalibratedDelta<T>>,
) -> Result<Vec<SfSample<T>>> {
    extract_sf_with(measurements, cfg, gs, delta_gain, ReferenceModel::Trpl)
}

pub fn extract_sf_with<T: Real>(
    measurements: &[Measurement<T>],
    cfg: &PropagationConfig<T>,
    gs: &GeoPoint<T>,
    delta_gain: Option<&CalibratedDelta<T>>,
    reference: ReferenceModel,
) -> Result<Vec<SfSample<T>>> {
    measurements
        .iter()
        .map(|m| {
            let predicted = predicted_power(cfg, gs, &m.location, delta_gain, reference)?;
            Ok(SfSample { location: m.location, z: m.rsrp_dbm - predicted, seq: m.seq })
        })
        .collect()
}

/// Deterministic received power at `at`.
pub fn predicted_power<T: Real>(
    cfg: &PropagationConfig<T>,
    gs: &GeoPoint<T>,
    at: &GeoPoint<T>,
    delta_gain: Option<&CalibratedDelta<T>>,
    reference: ReferenceModel,
) -> Result<T> {
    let g = cfg.link(gs, at)?;
    let base = match reference {
        ReferenceModel::Trpl => propagation::trpl_received_power_db(cfg, &g)?,
        ReferenceModel::Fspl => propagation::fspl_received_power_db(cfg, &g)?,
    };
    Ok(base + delta_gain.map_or(T::zero(), |d| d.at(g.phi_r, g.theta_r)))
}

fn mean<T: Real>(values: impl Iterator<Item = T>) -> (T, usize) {
    let (mut s, mut n) = (T::zero(), 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (if n > 0 { s / T::from_count(n) } else { T::zero() }, n)
}

/// Sample standard deviation (n - 1 denominator) of the residuals.
pub fn estimate_sigma<T: Real>(sf: &[SfSample<T>]) -> Result<T> {
    sample_sd(sf.iter().map(|s| s.z))
}

pub(crate) fn sample_sd<T: Real>(values: impl Iterator<Item = T> + Clone) -> Result<T> {
    let (m, n) = mean(values.clone());
    if n < 2 {
        return Err(RemError::InsufficientData { needed: 2, got: n });
    }
    let ss = values.fold(T::zero(), |acc, v| acc + (v - m) * (v - m));
    Ok((ss / T::from_count(n - 1)).sqrt())
}

/// Fitted spatial correlation of shadow fading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel<T = f64> {
    pub a: T,
    /// Fast horizontal decay rate, 1/m.
    pub p1: T,
    /// Slow horizontal decay rate, 1/m.
    pub p2: T,
    /// Vertical decay rate, 1/m.
    pub q: T,
    /// Shadow-fading standard deviation, dB.
    pub sigma_z: T,
}

impl<T: Real> CorrelationModel<T> {
    pub fn exponential(p: T, q: T, sigma_z: T) -> Self {
        Self { a: T::one(), p1: p, p2: p, q, sigma_z }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a >= T::zero()
            && self.a <= T::one()
            && self.p1 >= T::zero()
            && self.p2 >= T::zero()
            && self.q >= T::zero()
            && self.sigma_z >= T::zero()
            && self.sigma_z.is_finite();
        if ok {
            Ok(())
        } else {
            Err(RemError::InvalidInput(format!("correlation parameters out of range: {self:?}")))
        }
    }

    pub fn with_sigma(self, sigma_z: T) -> Self {
        Self { sigma_z, ..self }
    }

    #[inline]
    pub fn correlation_at(&self, d_h: T, d_v: T) -> T {
        (-self.q * d_v).exp() * (self.a * (-self.p1 * d_h).exp() + (T::one() - self.a) * (-self.p2 * d_h).exp())
    }

    pub fn correlation(&self, li: &GeoPoint<T>, lj: &GeoPoint<T>) -> T {
        self.correlation_at(horizontal_distance(li, lj), vertical_distance(li, lj))
    }

    pub fn variance(&self) -> T {
        self.sigma_z * self.sigma_z
    }

    /// `σ² · R`.
    pub fn covariance(&self, li: &GeoPoint<T>, lj: &GeoPoint<T>) -> T {
        self.variance() * self.correlation(li, lj)
    }

    /// `σ² · (1 - R)`.
    pub fn semivariogram(&self, li: &GeoPoint<T>, lj: &GeoPoint<T>) -> T {
        self.variance() * (T::one() - self.correlation(li, lj))
    }
}

/// Bin edges and pair budget for the empirical correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub dh_edges: Vec<f64>,
    pub dv_edges: Vec<f64>,
    /// Pairs beyond this budget are skipped with a deterministic stride.
    pub max_pairs: usize,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            dh_edges: (0..=20).map(|k| 20.0 * k as f64).collect(),
            dv_edges: (0..=4).map(|k| 10.0 * k as f64).collect(),
            max_pairs: 2_000_000,
        }
    }
}

impl BinSpec {
    fn validate(&self) -> Result<()> {
        let ok = |e: &[f64]| e.len() >= 2 && e.windows(2).all(|w| w[0] < w[1]) && e[0] >= 0.0;
        if !ok(&self.dh_edges) || !ok(&self.dv_edges) || self.max_pairs == 0 {
            return Err(RemError::InvalidInput("bin edges must be ascending, non-negative, at least two".into()));
        }
        Ok(())
    }

    fn locate(edges: &[f64], d: f64) -> Option<usize> {
        if d < edges[0] || d >= edges[edges.len() - 1] {
            return None;
        }
        Some(edges.partition_point(|e| *e <= d) - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationBin {
    /// Mean horizontal separation of the pairs in the bin.
    pub mean_dh: f64,
    pub mean_dv: f64,
    /// Normalized correlation estimate; 0 for empty bins.
    pub value: f64,
    pub count: usize,
}

impl CorrelationBin {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Binned empirical correlation; bins are horizontal-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub spec: BinSpec,
    pub bins: Vec<CorrelationBin>,
    /// Sample standard deviation used for normalization.
    pub sigma: f64,
    /// Empirical mean removed before accumulation.
    pub mean: f64,
    pub pairs_used: usize,
    /// Number of residuals behind the table.
    #[serde(default)]
    pub n_samples: usize,
    /// Separations of every visited pair, binned or not, in coarse cells.
    #[serde(default)]
    pub separations: Vec<SeparationCell>,
}

/// Pairs whose separation falls in one coarse `(d_h, d_v)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeparationCell {
    pub mean_dh: f64,
    pub mean_dv: f64,
    pub count: usize,
}

const SEPARATION_DH_M: f64 = 10.0;
const SEPARATION_DV_M: f64 = 5.0;

/// Coarse separation histogram, indexed `[dv cell][dh cell]`.
#[derive(Default)]
struct Separations(Vec<Vec<Acc>>);

impl Separations {
    fn add(&mut self, d_h: f64, d_v: f64) {
        let (ih, iv) = ((d_h / SEPARATION_DH_M) as usize, (d_v / SEPARATION_DV_M) as usize);
        if self.0.len() <= iv {
            self.0.resize_with(iv + 1, Vec::new);
        }
        let row = &mut self.0[iv];
        if row.len() <= ih {
            row.resize(ih + 1, Acc::default());
        }
        let c = &mut row[ih];
        c.dh += d_h;
        c.dv += d_v;
        c.count += 1;
    }

    fn merge(&mut self, other: Separations) {
        for (iv, row) in other.0.into_iter().enumerate() {
            for (ih, a) in row.into_iter().enumerate() {
                if a.count == 0 {
                    continue;
                }
                if self.0.len() <= iv {
                    self.0.resize_with(iv + 1, Vec::new);
                }
                let mine = &mut self.0[iv];
                if mine.len() <= ih {
                    mine.resize(ih + 1, Acc::default());
                }
                mine[ih].dh += a.dh;
                mine[ih].dv += a.dv;
                mine[ih].count += a.count;
            }
        }
    }

    fn cells(&self) -> Vec<SeparationCell> {
        self.0
            .iter()
            .flatten()
            .filter(|a| a.count > 0)
            .map(|a| SeparationCell { mean_dh: a.dh / a.count as f64, mean_dv: a.dv / a.count as f64, count: a.count })
            .collect()
    }
}

impl CorrelationTable {
    pub fn n_dh(&self) -> usize {
        self.spec.dh_edges.len() - 1
    }

    pub fn n_dv(&self) -> usize {
        self.spec.dv_edges.len() - 1
    }

    pub fn bin(&self, idh: usize, idv: usize) -> &CorrelationBin {
        &self.bins[idh * self.n_dv() + idv]
    }

    pub fn non_empty(&self) -> impl Iterator<Item = &CorrelationBin> {
        self.bins.iter().filter(|b| !b.is_empty())
    }
}

#[derive(Clone, Copy, Default)]
struct Acc {
    prod: f64,
    dh: f64,
    dv: f64,
    count: usize,
}

const ROWS_PER_CHUNK: usize = 32;

/// Pair-binned correlation `Σ z_i z_j / (count · σ̂²)` after mean removal.
///
/// Row chunks are accumulated in parallel and merged in chunk order, so the
/// result does not depend on the thread count.
pub fn empirical_correlation<T: Real>(sf: &[SfSample<T>], spec: &BinSpec) -> Result<CorrelationTable> {
    spec.validate()?;
    let n = sf.len();
    let sigma = estimate_sigma(sf)?.as_f64();
    let (m, _) = mean(sf.iter().map(|s| s.z.as_f64()));
    let z: Vec<f64> = sf.iter().map(|s| s.z.as_f64() - m).collect();
    let pts: Vec<GeoPoint<f64>> = sf
        .iter()
        .map(|s| GeoPoint { lat: s.location.lat.as_f64(), lon: s.location.lon.as_f64(), alt: s.location.alt.as_f64() })
        .collect();

    let total_pairs = n * (n - 1) / 2;
    let stride = total_pairs.div_ceil(spec.max_pairs).max(1);
    let (n_dh, n_dv) = (spec.dh_edges.len() - 1, spec.dv_edges.len() - 1);
    let n_bins = n_dh * n_dv;

    let chunks: Vec<(Vec<Acc>, usize, Separations)> = (0..n.div_ceil(ROWS_PER_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Acc::default(); n_bins];
            let mut used = 0usize;
            let mut seps = Separations::default();
            for i in c * ROWS_PER_CHUNK..((c + 1) * ROWS_PER_CHUNK).min(n) {
                // Linear index of pair (i, i + 1) in row-major upper-triangle order.
                let row_start = i * n - i * (i + 1) / 2;
                for j in i + 1..n {
                    if stride > 1 && (row_start + j - i - 1) % stride != 0 {
                        continue;
                    }
                    let d_h = horizontal_distance(&pts[i], &pts[j]);
                    let d_v = vertical_distance(&pts[i], &pts[j]);
                    seps.add(d_h, d_v);
                    let (Some(ih), Some(iv)) = (BinSpec::locate(&spec.dh_edges, d_h), BinSpec::locate(&spec.dv_edges, d_v))
                    else {
                        continue;
                    };
                    let b = &mut acc[ih * n_dv + iv];
                    b.prod += z[i] * z[j];
                    b.dh += d_h;
                    b.dv += d_v;
                    b.count += 1;
                    used += 1;
                }
            }
            (acc, used, seps)
        })
        .collect();

    let mut total = vec![Acc::default(); n_bins];
    let mut pairs_used = 0;
    let mut separations = Separations::default();
    for (acc, used, seps) in chunks {
        pairs_used += used;
        separations.merge(seps);
        for (t, a) in total.iter_mut().zip(acc) {
            t.prod += a.prod;
            t.dh += a.dh;
            t.dv += a.dv;
            t.count += a.count;
        }
    }
    let var = sigma * sigma;
    let bins = total
        .iter()
        .map(|a| {
            if a.count == 0 {
                return CorrelationBin::default();
            }
            let c = a.count as f64;
            CorrelationBin {
                mean_dh: a.dh / c,
                mean_dv: a.dv / c,
                value: if var > 0.0 { a.prod / (c * var) } else { 0.0 },
                count: a.count,
            }
        })
        .collect();
    Ok(CorrelationTable {
        spec: spec.clone(),
        bins,
        sigma,
        mean: m,
        pairs_used,
        n_samples: n,
        separations: separations.cells(),
    })
}

/// Largest decay rate the fit may reach, 1/m.
pub const MAX_RATE: f64 = 10.0;
const MIN_LOG_RATE: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Restrict to a single exponential in `d_h` (a = 1).
    pub fix_a_one: bool,
    /// Largest acceptable count-weighted RMS residual.
    pub max_residual: f64,
    /// Account for the sample mean removed over a bounded flight area:
    /// fit the expected mean-removed correlation and inflate σ by the
    /// domain-average correlation. Needs the table's separation histogram.
    #[serde(default)]
    pub finite_domain: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { fix_a_one: false, max_residual: 0.3, finite_domain: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationFit<T = f64> {
    pub model: CorrelationModel<T>,
    /// Count-weighted RMS residual over the non-empty bins.
    pub residual: f64,
}

/// Average model correlation over every pair of the sampled domain, from
/// the table's separation histogram.
struct DomainAverage<'a> {
    cells: &'a [SeparationCell],
    n: f64,
    /// Scales visited pairs up to all `n(n − 1)/2` pairs.
    pair_scale: f64,
}

impl<'a> DomainAverage<'a> {
    fn new(table: &'a CorrelationTable, enabled: bool) -> Result<Self> {
        let seen: usize = table.separations.iter().map(|c| c.count).sum();
        if enabled && (table.n_samples < 2 || seen == 0) {
            return Err(RemError::InvalidInput("finite-domain fit needs the table's separation histogram".into()));
        }
        let n = table.n_samples as f64;
        let pair_scale = if seen > 0 { n * (n - 1.0) / 2.0 / seen as f64 } else { 0.0 };
        Ok(Self { cells: &table.separations, n, pair_scale })
    }

    /// `(R̄, (n − 1)/n)`: the mean correlation over all ordered pairs,
    /// diagonal included, and the sample-variance factor.
    fn shift(&self, m: &CorrelationModel<f64>) -> (f64, f64) {
        let off: f64 = self.cells.iter().map(|c| c.count as f64 * m.correlation_at(c.mean_dh, c.mean_dv)).sum();
        let rbar = (self.n + 2.0 * self.pair_scale * off) / (self.n * self.n);
        (rbar.min(1.0 - 1e-9), (self.n - 1.0) / self.n)
    }
}

fn rate(log_rate: f64) -> f64 {
    log_rate.clamp(MIN_LOG_RATE, MAX_RATE.ln()).exp()
}

/// Count-weighted least-squares fit of the correlation model to a table,
/// by multistart Nelder–Mead over `(a, ln p1, ln p2, ln q)`.
pub fn fit_correlation_model<T: Real>(table: &CorrelationTable, opts: FitOptions) -> Result<CorrelationFit<T>> {
    let bins: Vec<&CorrelationBin> = table.non_empty().collect();
    let mut dh_bins: Vec<f64> = bins.iter().map(|b| b.mean_dh).collect();
    dh_bins.sort_by(f64::total_cmp);
    dh_bins.dedup();
    if bins.len() < 6 || dh_bins.len() < 2 {
        return Err(RemError::InsufficientData { needed: 6, got: bins.len() });
    }
    let weight: f64 = bins.iter().map(|b| b.count as f64).sum();

    let unpack = |x: &[f64]| -> (f64, f64, f64, f64) {
        if opts.fix_a_one {
            let p = rate(x[0]);
            (1.0, p, p, rate(x[1]))
        } else {
            (x[0].clamp(0.0, 1.0), rate(x[1]), rate(x[2]), rate(x[3]))
        }
    };
    let domain = DomainAverage::new(table, opts.finite_domain)?;
    let misfit = |m: &CorrelationModel<f64>, corrected: bool| -> f64 {
        let shift = if corrected { Some(domain.shift(m)) } else { None };
        bins.iter()
            .map(|b| {
                let r = m.correlation_at(b.mean_dh, b.mean_dv);
                let expected = shift.map_or(r, |(rbar, kappa)| kappa * (r - rbar) / (1.0 - rbar));
                b.count as f64 * (expected - b.value).powi(2)
            })
            .sum::<f64>()
            / weight
    };
    let objective_with = |x: &[f64], corrected: bool| -> f64 {
        let (a, p1, p2, q) = unpack(x);
        let m = CorrelationModel { a, p1, p2, q, sigma_z: 1.0 };
        // Soft wall keeps `a` from drifting far outside [0, 1] where it is clamped.
        let wall = if opts.fix_a_one { 0.0 } else { (x[0] - x[0].clamp(0.0, 1.0)).powi(2) };
        misfit(&m, corrected) + wall
    };
    let objective = |x: &[f64]| objective_with(x, false);

    let log_rates = [0.1f64.ln(), 0.03f64.ln(), 0.01f64.ln(), 0.003f64.ln(), 0.001f64.ln()];
    let log_q = [0.001f64.ln(), 0.01f64.ln(), 0.1f64.ln()];
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if opts.fix_a_one {
        for &p in &log_rates {
            for &q in &log_q {
                starts.push(vec![p, q]);
            }
        }
    } else {
        for a in [0.25, 0.5, 0.75, 1.0] {
            for (i, &p1) in log_rates.iter().enumerate() {
                for &p2 in &log_rates[i..] {
                    for &q in &log_q {
                        starts.push(vec![a, p1, p2, q]);
                    }
                }
            }
        }
    }
    let step: Vec<f64> = if opts.fix_a_one { vec![0.7, 0.7] } else { vec![0.15, 0.7, 0.7, 0.7] };

    let mut best = starts
        .iter()
        .map(|s| nelder_mead(objective, s, &step, 1e-10, 2_000))
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .expect("non-empty multistart grid");
    // Restarting from the incumbent escapes premature simplex collapse.
    for _ in 0..4 {
        let small: Vec<f64> = step.iter().map(|s| s * 0.1).collect();
        let next = nelder_mead(objective, &best.x, &small, 1e-15, 5_000);
        if next.f < best.f {
            best = next;
        } else {
            break;
        }
    }

    if opts.finite_domain {
        let corrected = |x: &[f64]| objective_with(x, true);
        best = nelder_mead(corrected, &best.x, &step, 1e-12, 5_000);
        for _ in 0..4 {
            let small: Vec<f64> = step.iter().map(|s| s * 0.1).collect();
            let next = nelder_mead(corrected, &best.x, &small, 1e-15, 5_000);
            if next.f < best.f {
                best = next;
            } else {
                break;
            }
        }
    }

    let (mut a, mut p1, mut p2, q) = unpack(&best.x);
    if p1 < p2 {
        std::mem::swap(&mut p1, &mut p2);
        a = 1.0 - a;
    }
    if a == 1.0 {
        p2 = p1;
    }
    let shape = CorrelationModel { a, p1, p2, q, sigma_z: 1.0 };
    let residual = misfit(&shape, opts.finite_domain).sqrt();
    if residual > opts.max_residual {
        return Err(RemError::FitDiverged { residual, threshold: opts.max_residual });
    }
    let mut sigma = table.sigma;
    if opts.finite_domain {
        let (rbar, kappa) = domain.shift(&shape);
        sigma *= (kappa / (1.0 - rbar)).sqrt();
    }
    let model = CorrelationModel {
        a: T::lit(a),
        p1: T::lit(p1),
        p2: T::lit(p2),
        q: T::lit(q),
        sigma_z: T::lit(sigma.max(f64::MIN_POSITIVE)),
    };
    Ok(CorrelationFit { model, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalFrame;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::new(35.72, -78.69, 0.0).unwrap())
    }

    fn sf(points: &[(f64, f64, f64)], z: &[f64]) -> Vec<SfSample> {
        let f = frame();
        points
            .iter()
            .zip(z)
            .enumerate()
            .map(|(k, (&(e, n, h), &z))| SfSample { location: f.to_geo(e, n, h), z, seq: k })
            .collect()
    }

    #[test]
    fn model_consistent_data_has_zero_residual() {
        let cfg = PropagationConfig::new(3.5e9, 10.0);
        let f = frame();
        let gs = f.to_geo(0.0, 0.0, 10.0);
        let ms: Vec<Measurement> = (0..20)
            .map(|k| {
                let loc = f.to_geo(30.0 * k as f64 + 5.0, 40.0, 50.0);
                let rx = propagation::trpl_received_power_db(&cfg, &cfg.link(&gs, &loc).unwrap()).unwrap();
                Measurement { location: loc, rsrp_dbm: rx, seq: k }
            })
            .collect();
        let z = extract_sf(&ms, &cfg, &gs, None).unwrap();
        assert!(z.iter().all(|s| s.z.abs() < 1e-12));
        let shifted: Vec<_> = ms.iter().map(|m| Measurement { rsrp_dbm: m.rsrp_dbm + 5.0, ..*m }).collect();
        let z = extract_sf(&shifted, &cfg, &gs, None).unwrap();
        assert!(z.iter().all(|s| (s.z - 5.0).abs() < 1e-12));

        let bad = vec![Measurement { location: gs, rsrp_dbm: 0.0, seq: 0 }];
        assert_eq!(extract_sf(&bad, &cfg, &gs, None), Err(RemError::DegenerateLink));
    }

    #[test]
    fn calibrated_residuals_subtract_delta() {
        let cfg = PropagationConfig::new(3.5e9, 10.0);
        let f = frame();
        let gs = f.to_geo(0.0, 0.0, 10.0);
        let loc = f.to_geo(50.0, 50.0, 40.0);
        let rx = propagation::trpl_received_power_db(&cfg, &cfg.link(&gs, &loc).unwrap()).unwrap();
        let delta = CalibratedDelta::sector(5.0, (0.0, 360.0), (-90.0, 90.0), 2.0).unwrap();
        let ms = [Measurement { location: loc, rsrp_dbm: rx, seq: 0 }];
        let z = extract_sf(&ms, &cfg, &gs, Some(&delta)).unwrap();
        assert!((z[0].z + 2.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_edge_cases() {
        let pts = [(0.0, 0.0, 10.0), (5.0, 0.0, 10.0), (9.0, 0.0, 10.0)];
        assert_eq!(estimate_sigma(&sf(&pts, &[2.0, 2.0, 2.0])).unwrap(), 0.0);
        let two = estimate_sigma(&sf(&pts[..2], &[-1.0, 1.0])).unwrap();
        assert!((two - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(estimate_sigma(&sf(&pts[..1], &[1.0])), Err(RemError::InsufficientData { .. })));
    }

    #[test]
    fn sigma_of_many_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..10_000).map(|k| (k as f64, 0.0, 10.0)).collect();
        let z: Vec<f64> = (0..10_000).map(|_| { let v: f64 = StandardNormal.sample(&mut rng); 3.0 * v }).collect();
        let s = estimate_sigma(&sf(&pts, &z)).unwrap();
        assert!((s - 3.0).abs() < 0.1, "{s}");
    }

    #[test]
    fn duplicate_location_pairs_are_fully_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        let mut z = Vec::new();
        for k in 0..200 {
            let v: f64 = StandardNormal.sample(&mut rng);
            let p = (1000.0 * k as f64, 0.0, 30.0);
            pts.push(p);
            pts.push(p);
            z.push(v);
            z.push(v);
        }
        let t = empirical_correlation(&sf(&pts, &z), &BinSpec::default()).unwrap();
        let b = t.bin(0, 0);
        assert_eq!(b.count, 200);
        assert!((b.value - 1.0).abs() < 0.15, "{}", b.value);
        assert!(t.bins.iter().skip(1).all(|b| b.is_empty()));
    }

    #[test]
    fn independent_draws_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                pts.push((10.0 * i as f64, 10.0 * j as f64, 20.0 + 10.0 * ((i + j) % 3) as f64));
            }
        }
        let z: Vec<f64> = (0..pts.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = empirical_correlation(&sf(&pts, &z), &BinSpec::default()).unwrap();
        for b in t.non_empty().filter(|b| b.count >= 50) {
            assert!(b.value.abs() < 3.0 / (b.count as f64).sqrt() + 0.02, "{b:?}");
        }
    }

    #[test]
    fn pair_budget_is_respected() {
        let pts: Vec<_> = (0..300).map(|k| (k as f64, 0.0, 10.0)).collect();
        let z: Vec<f64> = (0..300).map(|k| (k as f64 * 0.37).sin()).collect();
        let spec = BinSpec { max_pairs: 1000, dh_edges: vec![0.0, 1e6], dv_edges: vec![0.0, 1.0] };
        let t = empirical_correlation(&sf(&pts, &z), &spec).unwrap();
        assert!(t.pairs_used <= 1000 && t.pairs_used > 900, "{}", t.pairs_used);
    }

    /// Builds a table whose bin values are the model evaluated at the bin means.
    fn analytic_table(m: &CorrelationModel) -> CorrelationTable {
        let spec = BinSpec::default();
        let mut bins = Vec::new();
        for ih in 0..spec.dh_edges.len() - 1 {
            for iv in 0..spec.dv_edges.len() - 1 {
                let dh = 0.5 * (spec.dh_edges[ih] + spec.dh_edges[ih + 1]) + 1.3;
                let dv = 0.5 * (spec.dv_edges[iv] + spec.dv_edges[iv + 1]) - 0.7;
                bins.push(CorrelationBin {
                    mean_dh: dh,
                    mean_dv: dv,
                    value: m.correlation_at(dh, dv),
                    count: 100 + 7 * ih + iv,
                });
            }
        }
        CorrelationTable { spec, bins, sigma: m.sigma_z, mean: 0.0, pairs_used: 0, n_samples: 0, separations: Vec::new() }
    }

    #[test]
    fn recovers_analytic_biexponential() {
        let truth = CorrelationModel { a: 0.7, p1: 0.05, p2: 0.005, q: 0.1, sigma_z: 3.0 };
        let fit = fit_correlation_model::<f64>(&analytic_table(&truth), FitOptions::default()).unwrap();
        let m = fit.model;
        for (got, want) in [(m.a, truth.a), (m.p1, truth.p1), (m.p2, truth.p2), (m.q, truth.q), (m.sigma_z, 3.0)] {
            assert!(((got - want) / want).abs() < 1e-4, "{m:?}");
        }
    }

    #[test]
    fn single_exponential_with_fixed_a() {
        let truth = CorrelationModel::exponential(0.02, 0.05, 2.0);
        let opts = FitOptions { fix_a_one: true, ..Default::default() };
        let m = fit_correlation_model::<f64>(&analytic_table(&truth), opts).unwrap().model;
        assert_eq!(m.a, 1.0);
        assert!(((m.p1 - 0.02) / 0.02).abs() < 1e-4);
        assert!(((m.q - 0.05) / 0.05).abs() < 1e-4);
    }

    #[test]
    fn pure_nugget_decays_within_first_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        for i in 0..25 {
            for j in 0..25 {
                pts.push((8.0 * i as f64, 8.0 * j as f64, 20.0 + 10.0 * ((i * j) % 4) as f64));
            }
        }
        let z: Vec<f64> = (0..pts.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let table = empirical_correlation(&sf(&pts, &z), &BinSpec::default()).unwrap();
        let fit = fit_correlation_model::<f64>(&table, FitOptions::default()).unwrap();
        let first = table.non_empty().map(|b| b.mean_dh).fold(f64::INFINITY, f64::min);
        assert!(fit.model.correlation_at(first, 0.0) < 0.1, "{:?}", fit.model);
        fit.model.validate().unwrap();
    }

    #[test]
    fn too_few_bins() {
        let pts = [(0.0, 0.0, 10.0), (5.0, 0.0, 10.0), (9.0, 0.0, 10.0)];
        let t = empirical_correlation(&sf(&pts, &[1.0, -1.0, 0.5]), &BinSpec::default()).unwrap();
        assert!(matches!(fit_correlation_model::<f64>(&t, FitOptions::default()), Err(RemError::InsufficientData { .. })));
    }

    #[test]
    fn fit_divergence_is_reported() {
        let truth = CorrelationModel { a: 0.7, p1: 0.05, p2: 0.005, q: 0.1, sigma_z: 3.0 };
        let mut t = analytic_table(&truth);
        for (k, b) in t.bins.iter_mut().enumerate() {
            b.value = if k % 2 == 0 { 3.0 } else { -3.0 };
        }
        assert!(matches!(fit_correlation_model::<f64>(&t, FitOptions::default()), Err(RemError::FitDiverged { .. })));
    }

    #[test]
    fn closed_form_values() {
        let m = CorrelationModel::exponential(0.02, 0.0, 2.0);
        let f = frame();
        let a = f.to_geo(0.0, 0.0, 30.0);
        assert_eq!(m.correlation(&a, &a), 1.0);
        let b = f.to_geo(50.0, 0.0, 30.0);
        assert!((m.correlation(&a, &b) - (-1.0f64).exp()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn model_identities(
            a in 0.0f64..=1.0, p1 in 0.0f64..0.2, p2 in 0.0f64..0.02, q in 0.0f64..0.3, s in 0.1f64..6.0,
            e1 in -300.0f64..300.0, n1 in -300.0f64..300.0, h1 in 10.0f64..120.0,
            e2 in -300.0f64..300.0, n2 in -300.0f64..300.0, h2 in 10.0f64..120.0,
        ) {
            let m = CorrelationModel { a, p1, p2, q, sigma_z: s };
            let f = frame();
            let (li, lj) = (f.to_geo(e1, n1, h1), f.to_geo(e2, n2, h2));
            let r = m.correlation(&li, &lj);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((r - m.correlation(&lj, &li)).abs() < 1e-12);
            prop_assert!((m.semivariogram(&li, &lj) + m.covariance(&li, &lj) - s * s).abs() < 1e-9);
            prop_assert_eq!(m.semivariogram(&li, &li), 0.0);
            // Direct re-evaluation of the closed form.
            let dh = horizontal_distance(&li, &lj);
            let dv = (h1 - h2).abs();
            let direct = (-q * dv).exp() * (a * (-p1 * dh).exp() + (1.0 - a) * (-p2 * dh).exp());
            prop_assert!((r - direct).abs() < 1e-12);
        }
    }
}
