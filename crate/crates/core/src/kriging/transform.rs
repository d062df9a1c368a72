//! Normal-score transform and trans-Gaussian Kriging.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{select_neighbors, KrigingConfig, KrigingPrediction, OkSystem, SkSystem};
use crate::error::{RemError, Result};
use crate::geo::GeoPoint;
use crate::interp::Pchip;
use crate::scalar::Real;
use crate::shadow::{sample_sd, CorrelationModel, SfSample};

/// Fewest samples from which a normal-score transform is built.
pub const MIN_TRANSFORM_SAMPLES: usize = 20;

/// Step on the normal-score axis for the central-difference `φ'`.
const SLOPE_STEP: f64 = 1e-3;

/// Half-width on the score axis of the node window used for `φ''`.
const CURVATURE_WINDOW: f64 = 1.0;

/// Monotone map `f` from shadow fading to standard-normal scores and its
/// inverse `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalScore<T = f64> {
    forward: Pchip<T>,
    inverse: Pchip<T>,
}

/// Builds the transform from the empirical distribution of `sf`, using
/// Hazen plotting positions `(k - 0.5)/n`. Tied values share the mean score.
pub fn normal_score<T: Real>(sf: &[SfSample<T>]) -> Result<NormalScore<T>> {
    let n = sf.len();
    if n < MIN_TRANSFORM_SAMPLES {
        return Err(RemError::InsufficientData { needed: MIN_TRANSFORM_SAMPLES, got: n });
    }
    let mut z: Vec<f64> = sf.iter().map(|s| s.z.as_f64()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(RemError::InvalidInput("non-finite shadow fading value".into()));
    }
    z.sort_by(f64::total_cmp);
    let std_normal = Normal::standard();
    let mut zs: Vec<T> = Vec::with_capacity(n);
    let mut us: Vec<T> = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && z[end] == z[k] {
            end += 1;
        }
        let u = (k..end).map(|r| std_normal.inverse_cdf((r as f64 + 0.5) / n as f64)).sum::<f64>() / (end - k) as f64;
        zs.push(T::lit(z[k]));
        us.push(T::lit(u));
        k = end;
    }
    if zs.len() < 2 {
        return Err(RemError::InsufficientData { needed: 2, got: zs.len() });
    }
    Ok(NormalScore { forward: Pchip::new(zs.clone(), us.clone())?, inverse: Pchip::new(us, zs)? })
}

impl<T: Real> NormalScore<T> {
    /// `f(z)`: shadow fading to normal score.
    pub fn forward(&self, z: T) -> T {
        self.forward.eval(z)
    }

    /// `φ(u)`: normal score back to shadow fading.
    pub fn inverse(&self, u: T) -> T {
        self.inverse.eval(u)
    }

    pub fn inverse_derivative(&self, u: T) -> T {
        let h = T::lit(SLOPE_STEP);
        (self.inverse(u + h) - self.inverse(u - h)) / (h + h)
    }

    /// `φ''(u)` from a least-squares parabola through the nodes within
    /// `CURVATURE_WINDOW` of `u` (widened until it holds five nodes).
    ///
    /// Differencing the interpolant itself would measure the spacing noise
    /// of the order statistics rather than the shape of the distribution.
    pub fn inverse_curvature(&self, u: T) -> T {
        let (us, zs) = self.inverse.nodes();
        let u0 = u.as_f64();
        let mut half = CURVATURE_WINDOW;
        let pick = |half: f64| -> Vec<(f64, f64)> {
            us.iter()
                .zip(zs)
                .map(|(a, b)| (a.as_f64() - u0, b.as_f64()))
                .filter(|(d, _)| d.abs() <= half)
                .collect()
        };
        let mut pts = pick(half);
        while pts.len() < 5 && pts.len() < us.len() {
            half *= 2.0;
            pts = pick(half);
        }
        if pts.len() < 3 {
            return T::zero();
        }
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for (d, z) in pts {
            let row = nalgebra::Vector3::new(1.0, d, d * d);
            ata += row * row.transpose();
            atb += row * z;
        }
        ata.lu().solve(&atb).map_or(T::zero(), |c| T::lit(2.0 * c[2]))
    }

    /// `(u, z)` node pairs of the inverse map.
    pub fn nodes(&self) -> (&[T], &[T]) {
        self.inverse.nodes()
    }
}

/// Maps each sample's `z` through `f`.
pub fn transform_samples<T: Real>(sf: &[SfSample<T>], ns: &NormalScore<T>) -> Vec<SfSample<T>> {
    sf.iter().map(|s| SfSample { z: ns.forward(s.z), ..*s }).collect()
}

/// Trans-Gaussian Kriging: Kriging of normal scores followed by the
/// second-order bias-corrected back-transform.
///
/// `model_u` supplies the correlation shape in the score domain; its
/// variance is replaced by the sample variance of the transformed
/// neighbors, whose mean is the expansion point `m_U`. `cfg.variant`
/// selects the ordinary or simple inner predictor. The reported MSE is the
/// score-domain MSE mapped through `φ'(Û)²`.
pub fn tg_predict<T: Real>(
    samples: &[SfSample<T>],
    ns: &NormalScore<T>,
    model_u: &CorrelationModel<T>,
    target: &GeoPoint<T>,
    cfg: &KrigingConfig<T>,
) -> Result<KrigingPrediction<T>> {
    let idx = select_neighbors(samples, target, cfg.radius_m)?;
    let pts: Vec<GeoPoint<T>> = idx.iter().map(|&i| samples[i].location).collect();
    let u: Vec<T> = idx.iter().map(|&i| ns.forward(samples[i].z)).collect();
    let m_u = u.iter().fold(T::zero(), |a, v| a + *v) / T::from_count(u.len());
    let sigma_u = sample_sd(u.iter().copied()).ok().filter(|s| *s > T::zero()).unwrap_or(model_u.sigma_z);
    let model = model_u.with_sigma(sigma_u);
    let curvature = ns.inverse_curvature(m_u);

    let mut p = if cfg.variant.is_ordinary() {
        let p = OkSystem::new(pts, u, model, cfg.jitter)?.predict(target);
        let mu = p.lagrange_mu.unwrap_or_else(T::zero);
        let z = ns.inverse(p.z_hat) + curvature * (p.mse / T::lit(2.0) - mu);
        KrigingPrediction { z_hat: z, ..p }
    } else {
        let p = SkSystem::new(pts, u, model, m_u, cfg.jitter)?.predict(target);
        let c0: Vec<T> = idx.iter().map(|&i| model.covariance(&samples[i].location, target)).collect();
        let wc = p.weights.iter().zip(&c0).fold(T::zero(), |a, (w, c)| a + *w * *c);
        let z = ns.inverse(p.z_hat) + curvature / T::lit(2.0) * (p.mse - wc);
        KrigingPrediction { z_hat: z, ..p }
    };
    let slope = ns.inverse_derivative(ns.forward(p.z_hat));
    p.mse = p.mse * slope * slope;
    p.neighbors = idx;
    Ok(p)
}
