//! Ordinary, simple and trans-Gaussian Kriging of shadow fading with
//! radius-limited neighbor selection.

mod transform;

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{RemError, Result};
use crate::geo::{horizontal_distance, GeoPoint};
use crate::scalar::Real;
use crate::shadow::{CorrelationModel, SfSample};

pub use transform::{normal_score, tg_predict, transform_samples, NormalScore, MIN_TRANSFORM_SAMPLES};

/// Diagonal regularizer added on retry after a singular solve, dB².
pub const DEFAULT_JITTER: f64 = 1e-6;

/// Reciprocal-condition floor below which a factorization counts as singular.
const RCOND_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "SK")]
    Sk,
    #[serde(rename = "TG_OK")]
    TgOk,
    #[serde(rename = "TG_SK")]
    TgSk,
}

impl Variant {
    /// Whether the inner predictor is the unbiased (sum-to-one) one.
    pub fn is_ordinary(self) -> bool {
        matches!(self, Variant::Ok | Variant::TgOk)
    }

    pub fn is_trans_gaussian(self) -> bool {
        matches!(self, Variant::TgOk | Variant::TgSk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingConfig<T = f64> {
    pub radius_m: T,
    pub variant: Variant,
    /// Prior mean for simple Kriging, dB.
    pub mean_z: T,
    pub jitter: T,
}

impl<T: Real> KrigingConfig<T> {
    pub fn new(radius_m: T, variant: Variant) -> Self {
        Self { radius_m, variant, mean_z: T::zero(), jitter: T::lit(DEFAULT_JITTER) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > T::zero()) || !(self.jitter >= T::zero()) || !self.mean_z.is_finite() {
            return Err(RemError::InvalidInput("radius must be positive and jitter non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigingPrediction<T = f64> {
    pub z_hat: T,
    pub mse: T,
    pub neighbors_used: usize,
    /// Lagrange multiplier of the unbiasedness constraint (ordinary variants).
    pub lagrange_mu: Option<T>,
    /// Weights in the order of `neighbors`.
    pub weights: Vec<T>,
    pub neighbors: Vec<usize>,
    /// No sample was within the radius; `z_hat` is the prior.
    pub fallback: bool,
    /// The raw MSE was negative and has been clamped to zero.
    pub mse_clamped: bool,
    /// The first solve was singular and the jittered retry was used.
    pub jittered: bool,
}

impl<T: Real> KrigingPrediction<T> {
    fn prior(z_hat: T, variance: T) -> Self {
        Self {
            z_hat,
            mse: variance,
            neighbors_used: 0,
            lagrange_mu: None,
            weights: Vec::new(),
            neighbors: Vec::new(),
            fallback: true,
            mse_clamped: false,
            jittered: false,
        }
    }
}

/// Indices of samples within horizontal distance `radius_m` of `target`
/// (closed disc), nearest first, ties by `seq`.
pub fn select_neighbors<T: Real>(samples: &[SfSample<T>], target: &GeoPoint<T>, radius_m: T) -> Result<Vec<usize>> {
    let mut hits: Vec<(T, usize, usize)> = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let d = horizontal_distance(&s.location, target);
            (d <= radius_m).then_some((d, s.seq, i))
        })
        .collect();
    if hits.is_empty() {
        return Err(RemError::NoNeighbors);
    }
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    Ok(hits.into_iter().map(|h| h.2).collect())
}

fn clamp_mse<T: Real>(raw: T) -> (T, bool) {
    if raw < T::zero() {
        (T::zero(), raw < T::lit(-1e-9))
    } else {
        (raw, false)
    }
}

fn rcond<T: Real>(diag: impl Iterator<Item = T>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in diag {
        let a = d.as_f64().abs();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if hi > 0.0 && lo.is_finite() {
        lo / hi
    } else {
        0.0
    }
}

/// Factorized ordinary Kriging system over a fixed neighbor set.
#[derive(Debug, Clone)]
pub struct OkSystem<T: Real = f64> {
    points: Vec<GeoPoint<T>>,
    values: Vec<T>,
    model: CorrelationModel<T>,
    lu: LU<T, Dyn, Dyn>,
    jittered: bool,
}

impl<T: Real> OkSystem<T> {
    /// Factorizes the bordered semivariogram matrix; on a singular first
    /// attempt retries once with `jitter` on the semivariogram diagonal.
    pub fn new(points: Vec<GeoPoint<T>>, values: Vec<T>, model: CorrelationModel<T>, jitter: T) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(RemError::NoNeighbors);
        }
        let build = |j: T| {
            let mut a = DMatrix::<T>::zeros(n + 1, n + 1);
            for i in 0..n {
                for k in i + 1..n {
                    let g = model.semivariogram(&points[i], &points[k]);
                    a[(i, k)] = g;
                    a[(k, i)] = g;
                }
                a[(i, i)] = j;
                a[(i, n)] = T::one();
                a[(n, i)] = T::one();
            }
            a.lu()
        };
        let ok = |lu: &LU<T, Dyn, Dyn>| lu.is_invertible() && rcond(lu.u().diagonal().iter().copied()) > RCOND_FLOOR;
        let lu = build(T::zero());
        if ok(&lu) {
            return Ok(Self { points, values, model, lu, jittered: false });
        }
        if jitter > T::zero() {
            let lu = build(jitter);
            if ok(&lu) {
                return Ok(Self { points, values, model, lu, jittered: true });
            }
        }
        Err(RemError::SingularSystem)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn predict(&self, target: &GeoPoint<T>) -> KrigingPrediction<T> {
        let n = self.points.len();
        let gamma0: Vec<T> = self.points.iter().map(|p| self.model.semivariogram(p, target)).collect();
        let mut rhs = DVector::<T>::zeros(n + 1);
        for (r, g) in rhs.iter_mut().zip(&gamma0) {
            *r = *g;
        }
        rhs[n] = T::one();
        let sol = self.lu.solve(&rhs).expect("factorization checked invertible");
        let weights: Vec<T> = sol.iter().take(n).copied().collect();
        let mu = sol[n];
        let z_hat = weights.iter().zip(&self.values).fold(T::zero(), |acc, (w, z)| acc + *w * *z);
        let raw = weights.iter().zip(&gamma0).fold(mu, |acc, (w, g)| acc + *w * *g);
        let (mse, mse_clamped) = clamp_mse(raw);
        KrigingPrediction {
            z_hat,
            mse,
            neighbors_used: n,
            lagrange_mu: Some(mu),
            weights,
            neighbors: Vec::new(),
            fallback: false,
            mse_clamped,
            jittered: self.jittered,
        }
    }
}

/// Factorized simple Kriging system over a fixed neighbor set.
#[derive(Debug, Clone)]
pub struct SkSystem<T: Real = f64> {
    points: Vec<GeoPoint<T>>,
    values: Vec<T>,
    model: CorrelationModel<T>,
    mean: T,
    chol: Cholesky<T, Dyn>,
    jittered: bool,
}

impl<T: Real> SkSystem<T> {
    pub fn new(points: Vec<GeoPoint<T>>, values: Vec<T>, model: CorrelationModel<T>, mean: T, jitter: T) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(RemError::NoNeighbors);
        }
        let chol = factor_covariance(&points, &model, T::zero())
            .map(|c| (c, false))
            .or_else(|| (jitter > T::zero()).then(|| factor_covariance(&points, &model, jitter)).flatten().map(|c| (c, true)));
        let (chol, jittered) = chol.ok_or(RemError::SingularSystem)?;
        Ok(Self { points, values, model, mean, chol, jittered })
    }

    pub fn predict(&self, target: &GeoPoint<T>) -> KrigingPrediction<T> {
        let c0 = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| self.model.covariance(p, target)));
        let w = self.chol.solve(&c0);
        let z_hat = w.iter().zip(&self.values).fold(self.mean, |acc, (w, z)| acc + *w * (*z - self.mean));
        let (mse, mse_clamped) = clamp_mse(self.model.variance() - w.dot(&c0));
        KrigingPrediction {
            z_hat,
            mse,
            neighbors_used: self.points.len(),
            lagrange_mu: None,
            weights: w.iter().copied().collect(),
            neighbors: Vec::new(),
            fallback: false,
            mse_clamped,
            jittered: self.jittered,
        }
    }
}

/// Cholesky factor of `σ²R + jitter·I`, or `None` when numerically singular.
pub(crate) fn factor_covariance<T: Real>(points: &[GeoPoint<T>], model: &CorrelationModel<T>, jitter: T) -> Option<Cholesky<T, Dyn>> {
    let n = points.len();
    let var = model.variance();
    let mut c = DMatrix::<T>::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = var + jitter;
        for k in i + 1..n {
            let v = model.covariance(&points[i], &points[k]);
            c[(i, k)] = v;
            c[(k, i)] = v;
        }
    }
    let scale = (var + jitter).as_f64();
    let chol = Cholesky::new(c)?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.as_f64() * d.as_f64()));
    (scale > 0.0 && min_pivot / scale > RCOND_FLOOR).then_some(chol)
}

fn gather<T: Real>(samples: &[SfSample<T>], idx: &[usize]) -> (Vec<GeoPoint<T>>, Vec<T>) {
    idx.iter().map(|&i| (samples[i].location, samples[i].z)).unzip()
}

/// Ordinary Kriging at `target` from the samples within `cfg.radius_m`.
pub fn ok_predict<T: Real>(
    samples: &[SfSample<T>],
    model: &CorrelationModel<T>,
    target: &GeoPoint<T>,
    cfg: &KrigingConfig<T>,
) -> Result<KrigingPrediction<T>> {
    let idx = select_neighbors(samples, target, cfg.radius_m)?;
    let (pts, vals) = gather(samples, &idx);
    let mut p = OkSystem::new(pts, vals, *model, cfg.jitter)?.predict(target);
    p.neighbors = idx;
    Ok(p)
}

/// Simple Kriging with known mean `cfg.mean_z`.
pub fn sk_predict<T: Real>(
    samples: &[SfSample<T>],
    model: &CorrelationModel<T>,
    target: &GeoPoint<T>,
    cfg: &KrigingConfig<T>,
) -> Result<KrigingPrediction<T>> {
    let idx = select_neighbors(samples, target, cfg.radius_m)?;
    let (pts, vals) = gather(samples, &idx);
    let mut p = SkSystem::new(pts, vals, *model, cfg.mean_z, cfg.jitter)?.predict(target);
    p.neighbors = idx;
    Ok(p)
}

enum System<T: Real> {
    Ok(OkSystem<T>),
    Sk(SkSystem<T>),
}

/// Predicts at many targets with the ordinary or simple variant, reusing
/// one factorization per distinct neighbor set. Targets without neighbors
/// fall back to the prior (0 for ordinary, `mean_z` for simple Kriging)
/// and are flagged.
pub fn predict_many<T: Real>(
    samples: &[SfSample<T>],
    model: &CorrelationModel<T>,
    targets: &[GeoPoint<T>],
    cfg: &KrigingConfig<T>,
) -> Result<Vec<KrigingPrediction<T>>> {
    cfg.validate()?;
    let mut cache: HashMap<Vec<usize>, System<T>> = HashMap::new();
    targets
        .iter()
        .map(|t| {
            let idx = match select_neighbors(samples, t, cfg.radius_m) {
                Ok(idx) => idx,
                Err(RemError::NoNeighbors) => {
                    let prior = if cfg.variant.is_ordinary() { T::zero() } else { cfg.mean_z };
                    return Ok(KrigingPrediction::prior(prior, model.variance()));
                }
                Err(e) => return Err(e),
            };
            if !cache.contains_key(&idx) {
                let (pts, vals) = gather(samples, &idx);
                let sys = if cfg.variant.is_ordinary() {
                    System::Ok(OkSystem::new(pts, vals, *model, cfg.jitter)?)
                } else {
                    System::Sk(SkSystem::new(pts, vals, *model, cfg.mean_z, cfg.jitter)?)
                };
                cache.insert(idx.clone(), sys);
            }
            let mut p = match &cache[&idx] {
                System::Ok(s) => s.predict(t),
                System::Sk(s) => s.predict(t),
            };
            p.neighbors = idx;
            Ok(p)
        })
        .collect()
}
