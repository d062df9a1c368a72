//! Sparse-sampling Monte-Carlo evaluation.
//!
//! Each iteration draws `M` test locations without replacement, turns
//! their measured power into shadow-fading residuals, reconstructs the
//! residual at the remaining locations and scores the reconstructed power
//! against the measured power there. Iterations are independent and each
//! owns an RNG stream keyed on `(seed, iteration)`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rem_core::calibration::{delta_gain, estimate_a_uav, estimate_effective_pattern, DEFAULT_BIN_DEG, DEFAULT_MIN_SUPPORT};
use rem_core::completion::build_grid_for;
use rem_core::geo::horizontal_distance;
use rem_core::kriging::{predict_many, tg_predict, transform_samples, DEFAULT_JITTER};
use rem_core::shadow::{empirical_correlation, extract_sf, fit_correlation_model, predicted_power, BinSpec, FitOptions};
use rem_core::{
    gpr, CalibratedDelta, CorrelationModel, GeoPoint, GridSpec, KrigingConfig, McConfig, McPipeline, Measurement,
    NormalScore, PropagationConfig, ReferenceModel, RemError, SfSample, Variant,
};
use rem_synth::PropagationSpec;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "TRPL_only")]
    TrplOnly,
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "SK")]
    Sk,
    #[serde(rename = "TG_OK")]
    TgOk,
    #[serde(rename = "TG_SK")]
    TgSk,
    #[serde(rename = "GPR")]
    Gpr,
    #[serde(rename = "MC_GPR")]
    McGpr,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Method::TrplOnly, Method::Ok, Method::Sk, Method::TgOk, Method::TgSk, Method::Gpr, Method::McGpr];

    pub fn name(self) -> &'static str {
        match self {
            Method::TrplOnly => "TRPL_only",
            Method::Ok => "OK",
            Method::Sk => "SK",
            Method::TgOk => "TG_OK",
            Method::TgSk => "TG_SK",
            Method::Gpr => "GPR",
            Method::McGpr => "MC_GPR",
        }
    }

    fn kriging_variant(self) -> Option<Variant> {
        match self {
            Method::Ok => Some(Variant::Ok),
            Method::Sk => Some(Variant::Sk),
            Method::TgOk => Some(Variant::TgOk),
            Method::TgSk => Some(Variant::TgSk),
            _ => None,
        }
    }

    fn needs_correlation(self) -> bool {
        self != Method::TrplOnly
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Validation(format!("unknown method `{s}`")))
    }
}

/// Whether the deterministic part includes the in-field ΔG correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Baseline,
    Calibrated,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Calibrated => "calibrated",
        })
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "calibrated" => Ok(Mode::Calibrated),
            _ => Err(HarnessError::Validation(format!("unknown mode `{s}`"))),
        }
    }
}

/// Ground station and link parameters shared by every campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub gs: GeoPoint,
    pub propagation: PropagationSpec,
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<Environment> {
        self.gs.validate()?;
        Ok(Environment { gs: self.gs, cfg: self.propagation.build()? })
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub gs: GeoPoint,
    pub cfg: PropagationConfig,
}

fn default_radius() -> f64 {
    200.0
}

fn default_iterations() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub bins: BinSpec,
    pub fix_a_one: bool,
    pub finite_domain: bool,
    pub max_fit_residual: f64,
    pub reference: ReferenceModel,
    pub grid_spacing_m: f64,
    pub mc: McConfig,
    pub calibration_bin_deg: f64,
    pub min_support: usize,
    pub jitter: f64,
    /// When non-empty, only held-out locations inside one of these discs
    /// are predicted and scored.
    pub score_regions: Vec<ScoreRegion>,
}

/// Horizontal disc around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRegion {
    pub center: GeoPoint,
    pub radius_m: f64,
}

impl ScoreRegion {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        horizontal_distance(&self.center, p) <= self.radius_m
    }
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            bins: BinSpec::default(),
            fix_a_one: false,
            finite_domain: false,
            max_fit_residual: FitOptions::default().max_residual,
            reference: ReferenceModel::Trpl,
            grid_spacing_m: rem_core::completion::DEFAULT_SPACING_M,
            mc: McConfig::default(),
            calibration_bin_deg: DEFAULT_BIN_DEG,
            min_support: DEFAULT_MIN_SUPPORT,
            jitter: DEFAULT_JITTER,
            score_regions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub method: Method,
    #[serde(default)]
    pub mode: Mode,
    pub m_samples: usize,
    #[serde(default = "default_radius")]
    pub radius_m: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train_campaign: Option<PathBuf>,
    #[serde(default)]
    pub test_campaign: Option<PathBuf>,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub options: EvalOptions,
}

impl EvalConfig {
    pub fn new(method: Method, m_samples: usize, environment: EnvironmentSpec) -> Self {
        Self {
            method,
            mode: Mode::Baseline,
            m_samples,
            radius_m: default_radius(),
            iterations: default_iterations(),
            seed: 0,
            train_campaign: None,
            test_campaign: None,
            environment,
            options: EvalOptions::default(),
        }
    }

    pub fn validate(&self, test_len: usize) -> Result<()> {
        if self.m_samples < 1 || self.m_samples >= test_len {
            return Err(HarnessError::Validation(format!(
                "m_samples must be in [1, {}) for a test campaign of {test_len}, got {}",
                test_len, self.m_samples
            )));
        }
        if !(self.radius_m > 0.0) || !self.radius_m.is_finite() {
            return Err(HarnessError::Validation(format!("radius_m must be positive, got {}", self.radius_m)));
        }
        if self.iterations == 0 {
            return Err(HarnessError::Validation("iterations must be at least 1".into()));
        }
        if !(self.options.grid_spacing_m > 0.0) {
            return Err(HarnessError::Validation("grid_spacing_m must be positive".into()));
        }
        self.options.mc.validate()?;
        if let (Some(a), Some(b)) = (&self.train_campaign, &self.test_campaign) {
            if a == b {
                return Err(HarnessError::Validation(format!(
                    "train and test campaign are the same file: {}",
                    a.display()
                )));
            }
        }
        Ok(())
    }
}

/// ΔG from a training campaign: per-bin effective UAV gain minus the
/// configured UAV pattern.
pub fn calibrate(env: &Environment, train: &[Measurement], bin_deg: f64, min_support: usize) -> Result<CalibratedDelta> {
    let est = estimate_a_uav(train, &env.gs, env.cfg.tx_power_dbm);
    let eff = estimate_effective_pattern(&est.samples, &env.cfg.gs_pattern, env.cfg.wavelength(), bin_deg, min_support)?;
    Ok(delta_gain(&eff, &env.cfg.uav_pattern, min_support))
}

/// Everything the evaluator learns from the training campaign.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub mode: Mode,
    pub delta: Option<CalibratedDelta>,
    pub corr: Option<CorrelationModel>,
    pub normal_score: Option<NormalScore>,
    /// Correlation of the normal scores.
    pub corr_u: Option<CorrelationModel>,
    /// `(σ_Y, σ_GP)`.
    pub gpr: Option<(f64, f64)>,
    pub train_size: usize,
}

impl TrainedModel {
    pub fn fit(cfg: &EvalConfig, env: &Environment, train: &[Measurement]) -> Result<Self> {
        let o = &cfg.options;
        let delta = match cfg.mode {
            Mode::Calibrated => Some(calibrate(env, train, o.calibration_bin_deg, o.min_support)?),
            Mode::Baseline => None,
        };
        let mut model = TrainedModel {
            mode: cfg.mode,
            delta,
            corr: None,
            normal_score: None,
            corr_u: None,
            gpr: None,
            train_size: train.len(),
        };
        if !cfg.method.needs_correlation() {
            return Ok(model);
        }
        let fit_opts = FitOptions { fix_a_one: o.fix_a_one, max_residual: o.max_fit_residual, finite_domain: o.finite_domain };
        let sf = rem_core::shadow::extract_sf_with(train, &env.cfg, &env.gs, model.delta.as_ref(), o.reference)?;
        let table = empirical_correlation(&sf, &o.bins)?;
        model.corr = Some(fit_correlation_model::<f64>(&table, fit_opts)?.model);
        if matches!(cfg.method, Method::TgOk | Method::TgSk) {
            let ns = rem_core::kriging::normal_score(&sf)?;
            let u = transform_samples(&sf, &ns);
            let table_u = empirical_correlation(&u, &o.bins)?;
            model.corr_u = Some(fit_correlation_model::<f64>(&table_u, fit_opts)?.model);
            model.normal_score = Some(ns);
        }
        if matches!(cfg.method, Method::Gpr | Method::McGpr) {
            model.gpr = Some(gpr::hyperparameters_from_table(&table)?);
        }
        Ok(model)
    }
}

/// Why the evaluator reads a measured power value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// One of the `M` sparse inputs of an iteration.
    Input,
    /// Held-out ground truth, read only to score a prediction.
    Score,
}

/// Read access to a test campaign. Locations are free to read; measured
/// values go through [`CampaignSource::rsrp`] so that reads can be audited.
pub trait CampaignSource: Sync {
    fn len(&self) -> usize;
    fn location(&self, i: usize) -> GeoPoint;
    fn seq(&self, i: usize) -> usize;
    fn rsrp(&self, i: usize, access: Access) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CampaignSource for [Measurement] {
    fn len(&self) -> usize {
        <[Measurement]>::len(self)
    }

    fn location(&self, i: usize) -> GeoPoint {
        self[i].location
    }

    fn seq(&self, i: usize) -> usize {
        self[i].seq
    }

    fn rsrp(&self, i: usize, _: Access) -> f64 {
        self[i].rsrp_dbm
    }
}

/// Counts every value read made through it.
pub struct AuditedSource<'a, S: CampaignSource + ?Sized> {
    inner: &'a S,
    inputs: AtomicUsize,
    scores: AtomicUsize,
    per_index: Vec<AtomicUsize>,
}

impl<'a, S: CampaignSource + ?Sized> AuditedSource<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        let per_index = (0..inner.len()).map(|_| AtomicUsize::new(0)).collect();
        Self { inner, inputs: AtomicUsize::new(0), scores: AtomicUsize::new(0), per_index }
    }

    pub fn input_reads(&self) -> usize {
        self.inputs.load(Ordering::Relaxed)
    }

    pub fn score_reads(&self) -> usize {
        self.scores.load(Ordering::Relaxed)
    }

    pub fn reads_of(&self, i: usize) -> usize {
        self.per_index[i].load(Ordering::Relaxed)
    }
}

impl<S: CampaignSource + ?Sized> CampaignSource for AuditedSource<'_, S> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn location(&self, i: usize) -> GeoPoint {
        self.inner.location(i)
    }

    fn seq(&self, i: usize) -> usize {
        self.inner.seq(i)
    }

    fn rsrp(&self, i: usize, access: Access) -> f64 {
        match access {
            Access::Input => &self.inputs,
            Access::Score => &self.scores,
        }
        .fetch_add(1, Ordering::Relaxed);
        self.per_index[i].fetch_add(1, Ordering::Relaxed);
        self.inner.rsrp(i, access)
    }
}

pub const ELEVATION_BIN_DEG: f64 = 10.0;
const N_ELEVATION_BINS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counters {
    /// Targets with no input inside the selection radius.
    pub fallbacks: usize,
    pub mse_clamped: usize,
    pub jittered: usize,
    pub variance_clamped: usize,
    /// Matrix-completion bisections that stopped at the iteration cap.
    pub bisection_capped: usize,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.fallbacks += o.fallbacks;
        self.mse_clamped += o.mse_clamped;
        self.jittered += o.jittered;
        self.variance_clamped += o.variance_clamped;
        self.bisection_capped += o.bisection_capped;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationBin {
    pub center_deg: f64,
    /// Scored predictions over all iterations.
    pub samples: usize,
    /// Median over iterations of the in-bin RMSE; `None` if the bin never
    /// held a target.
    pub median_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSummary {
    pub corr: Option<CorrelationModel>,
    pub corr_u: Option<CorrelationModel>,
    pub sigma_y: Option<f64>,
    pub sigma_gp: Option<f64>,
    pub calibrated_bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: EvalConfig,
    pub train_size: usize,
    pub test_size: usize,
    pub median_rmse: f64,
    pub mean_rmse: f64,
    /// RMSE of every iteration, in iteration order.
    pub rmse: Vec<f64>,
    pub elevation: Vec<ElevationBin>,
    pub counters: Counters,
    pub fitted: FittedSummary,
    pub warnings: Vec<String>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

struct Iteration {
    rmse: f64,
    bin_sq: [f64; N_ELEVATION_BINS],
    bin_n: [usize; N_ELEVATION_BINS],
    counters: Counters,
}

/// Per-location quantities that need no measured values.
struct Prepared {
    /// Test indices in canonical order (by `seq`, then position), so that the
    /// draw does not depend on the row order of the file.
    order: Vec<usize>,
    det: Vec<f64>,
    elevation_bin: Vec<usize>,
    scored: Vec<bool>,
    grid: Option<GridSpec>,
}

fn prepare<S: CampaignSource + ?Sized>(
    cfg: &EvalConfig,
    env: &Environment,
    trained: &TrainedModel,
    test: &S,
) -> Result<Prepared> {
    let n = test.len();
    let locs: Vec<GeoPoint> = (0..n).map(|i| test.location(i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        test.seq(a)
            .cmp(&test.seq(b))
            .then(locs[a].lat.total_cmp(&locs[b].lat))
            .then(locs[a].lon.total_cmp(&locs[b].lon))
            .then(locs[a].alt.total_cmp(&locs[b].alt))
    });
    let mut det = Vec::with_capacity(n);
    let mut elevation_bin = Vec::with_capacity(n);
    for p in &locs {
        det.push(predicted_power(&env.cfg, &env.gs, p, trained.delta.as_ref(), cfg.options.reference)?);
        let el = env.cfg.link(&env.gs, p)?.theta_t;
        elevation_bin.push(((el / ELEVATION_BIN_DEG).floor().max(0.0) as usize).min(N_ELEVATION_BINS - 1));
    }
    let regions = &cfg.options.score_regions;
    let scored: Vec<bool> = locs.iter().map(|p| regions.is_empty() || regions.iter().any(|r| r.contains(p))).collect();
    let n_scored = scored.iter().filter(|&&s| s).count();
    if n_scored == 0 {
        return Err(HarnessError::Validation("no test location falls inside the score regions".into()));
    }
    let grid = match cfg.method {
        Method::McGpr => Some(build_grid_for(&locs, cfg.options.grid_spacing_m)?),
        _ => None,
    };
    Ok(Prepared { order, det, elevation_bin, scored, grid })
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

fn run_iteration<S: CampaignSource + ?Sized>(
    it: usize,
    cfg: &EvalConfig,
    trained: &TrainedModel,
    test: &S,
    prep: &Prepared,
) -> std::result::Result<Iteration, RemError> {
    let n = prep.order.len();
    let mut rng = iteration_rng(cfg.seed, it);
    let mut picked = index::sample(&mut rng, n, cfg.m_samples).into_vec();
    picked.sort_unstable();
    let mut is_input = vec![false; n];
    let samples: Vec<SfSample> = picked
        .iter()
        .map(|&k| {
            is_input[k] = true;
            let i = prep.order[k];
            SfSample { location: test.location(i), z: test.rsrp(i, Access::Input) - prep.det[i], seq: test.seq(i) }
        })
        .collect();
    let targets: Vec<usize> = (0..n).filter(|&k| !is_input[k]).map(|k| prep.order[k]).filter(|&i| prep.scored[i]).collect();
    if targets.is_empty() {
        return Err(RemError::InsufficientData { needed: 1, got: 0 });
    }
    let target_locs: Vec<GeoPoint> = targets.iter().map(|&i| test.location(i)).collect();

    let mut counters = Counters::default();
    let z_hat: Vec<f64> = match cfg.method {
        Method::TrplOnly => vec![0.0; targets.len()],
        Method::Ok | Method::Sk => {
            let corr = trained.corr.as_ref().expect("fitted");
            let mut kcfg = KrigingConfig::new(cfg.radius_m, cfg.method.kriging_variant().expect("kriging"));
            kcfg.jitter = cfg.options.jitter;
            predict_many(&samples, corr, &target_locs, &kcfg)?
                .into_iter()
                .map(|p| {
                    counters.fallbacks += p.fallback as usize;
                    counters.mse_clamped += p.mse_clamped as usize;
                    counters.jittered += p.jittered as usize;
                    p.z_hat
                })
                .collect()
        }
        Method::TgOk | Method::TgSk => {
            let ns = trained.normal_score.as_ref().expect("fitted");
            let corr_u = trained.corr_u.as_ref().expect("fitted");
            let mut kcfg = KrigingConfig::new(cfg.radius_m, cfg.method.kriging_variant().expect("kriging"));
            kcfg.jitter = cfg.options.jitter;
            let mut out = Vec::with_capacity(targets.len());
            for t in &target_locs {
                match tg_predict(&samples, ns, corr_u, t, &kcfg) {
                    Ok(p) => {
                        counters.mse_clamped += p.mse_clamped as usize;
                        counters.jittered += p.jittered as usize;
                        out.push(p.z_hat);
                    }
                    Err(RemError::NoNeighbors) => {
                        counters.fallbacks += 1;
                        out.push(0.0);
                    }
                    Err(e) => return Err(e),
                }
            }
            out
        }
        Method::Gpr | Method::McGpr => {
            let corr = trained.corr.as_ref().expect("fitted");
            let (sy, sgp) = trained.gpr.expect("fitted");
            let model = gpr::gpr_fit(&samples, corr, sy, sgp)?;
            if cfg.method == Method::Gpr {
                target_locs
                    .iter()
                    .map(|t| {
                        let p = model.predict(t);
                        counters.variance_clamped += p.clamped as usize;
                        p.z_hat
                    })
                    .collect()
            } else {
                let mc = McPipeline::build(&model, prep.grid.as_ref().expect("grid"), &cfg.options.mc)?;
                counters.bisection_capped += mc.outcome.hit_max_iters as usize;
                target_locs.iter().map(|t| mc.predict(t)).collect()
            }
        }
    };

    let mut sq = 0.0;
    let mut bin_sq = [0.0; N_ELEVATION_BINS];
    let mut bin_n = [0; N_ELEVATION_BINS];
    for (&i, z) in targets.iter().zip(&z_hat) {
        let e = prep.det[i] + z - test.rsrp(i, Access::Score);
        sq += e * e;
        let b = prep.elevation_bin[i];
        bin_sq[b] += e * e;
        bin_n[b] += 1;
    }
    Ok(Iteration { rmse: (sq / targets.len() as f64).sqrt(), bin_sq, bin_n, counters })
}

fn separation_warnings(train: &[Measurement], test: &[GeoPoint]) -> Vec<String> {
    let bounds = |pts: &mut dyn Iterator<Item = GeoPoint>| {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in pts {
            b[0] = b[0].min(p.lat);
            b[1] = b[1].max(p.lat);
            b[2] = b[2].min(p.lon);
            b[3] = b[3].max(p.lon);
            b[4] = b[4].min(p.alt);
            b[5] = b[5].max(p.alt);
        }
        b
    };
    if train.is_empty() || test.is_empty() {
        return Vec::new();
    }
    let a = bounds(&mut train.iter().map(|m| m.location));
    let b = bounds(&mut test.iter().copied());
    let overlap = |lo: usize| a[lo] <= b[lo + 1] && b[lo] <= a[lo + 1];
    if overlap(0) && overlap(2) && overlap(4) {
        vec![format!(
            "train and test campaigns overlap horizontally and in altitude (train {:.1}-{:.1} m, test {:.1}-{:.1} m)",
            a[4], a[5], b[4], b[5]
        )]
    } else {
        Vec::new()
    }
}

/// Runs the evaluation with a model already fitted on the training campaign.
pub fn monte_carlo_eval_trained<S: CampaignSource + ?Sized>(
    cfg: &EvalConfig,
    env: &Environment,
    trained: &TrainedModel,
    test: &S,
) -> Result<(Vec<f64>, Vec<ElevationBin>, Counters)> {
    cfg.validate(test.len())?;
    let prep = prepare(cfg, env, trained, test)?;
    let results: Vec<Iteration> = (0..cfg.iterations)
        .into_par_iter()
        .map(|it| run_iteration(it, cfg, trained, test, &prep).map_err(|source| HarnessError::Iteration { iteration: it, source }))
        .collect::<Result<_>>()?;

    let rmse: Vec<f64> = results.iter().map(|r| r.rmse).collect();
    let mut counters = Counters::default();
    for r in &results {
        counters.add(&r.counters);
    }
    let elevation = (0..N_ELEVATION_BINS)
        .map(|b| {
            let per: Vec<f64> =
                results.iter().filter(|r| r.bin_n[b] > 0).map(|r| (r.bin_sq[b] / r.bin_n[b] as f64).sqrt()).collect();
            ElevationBin {
                center_deg: (b as f64 + 0.5) * ELEVATION_BIN_DEG,
                samples: results.iter().map(|r| r.bin_n[b]).sum(),
                median_rmse: if per.is_empty() { None } else { Some(median(&per)) },
            }
        })
        .collect();
    Ok((rmse, elevation, counters))
}

/// Fits on `train`, evaluates on `test`.
pub fn monte_carlo_eval<S: CampaignSource + ?Sized>(
    cfg: &EvalConfig,
    train: &[Measurement],
    test: &S,
) -> Result<EvaluationReport> {
    let env = cfg.environment.build()?;
    cfg.validate(test.len())?;
    let warnings = check_split(train, test)?;
    let trained = TrainedModel::fit(cfg, &env, train)?;
    let mut report = report_for(cfg, &env, &trained, test)?;
    report.warnings.extend(warnings);
    Ok(report)
}

/// Refuses a test campaign identical to the training one and warns when
/// the two are neither horizontally nor vertically separated.
pub(crate) fn check_split<S: CampaignSource + ?Sized>(train: &[Measurement], test: &S) -> Result<Vec<String>> {
    let test_locs: Vec<GeoPoint> = (0..test.len()).map(|i| test.location(i)).collect();
    if !train.is_empty() && train.len() == test_locs.len() && train.iter().zip(&test_locs).all(|(m, p)| m.location == *p) {
        return Err(HarnessError::Validation("train and test campaigns are the same campaign".into()));
    }
    Ok(separation_warnings(train, &test_locs))
}

pub(crate) fn report_for<S: CampaignSource + ?Sized>(
    cfg: &EvalConfig,
    env: &Environment,
    trained: &TrainedModel,
    test: &S,
) -> Result<EvaluationReport> {
    let (rmse, elevation, counters) = monte_carlo_eval_trained(cfg, env, trained, test)?;
    let mut warnings = Vec::new();
    if counters.fallbacks > 0 {
        warnings.push(format!("{} predictions fell back to the prior (no input within {} m)", counters.fallbacks, cfg.radius_m));
    }
    Ok(EvaluationReport {
        config: cfg.clone(),
        train_size: trained.train_size,
        test_size: test.len(),
        median_rmse: median(&rmse),
        mean_rmse: rmse.iter().sum::<f64>() / rmse.len() as f64,
        rmse,
        elevation,
        counters,
        fitted: FittedSummary {
            corr: trained.corr,
            corr_u: trained.corr_u,
            sigma_y: trained.gpr.map(|g| g.0),
            sigma_gp: trained.gpr.map(|g| g.1),
            calibrated_bins: trained
                .delta
                .as_ref()
                .map(|d| (0..d.bins().len()).filter(|&k| d.is_supported(k)).count()),
        },
        warnings,
    })
}

/// Residuals of a campaign against the configured deterministic model.
pub fn residuals(env: &Environment, measurements: &[Measurement], delta: Option<&CalibratedDelta>) -> Result<Vec<SfSample>> {
    Ok(extract_sf(measurements, &env.cfg, &env.gs, delta)?)
}
