//! Gaussian process regression of shadow fading with an explicit nugget.

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{RemError, Result};
use crate::geo::GeoPoint;
use crate::kriging::factor_covariance;
use crate::scalar::Real;
use crate::shadow::{empirical_correlation, BinSpec, CorrelationModel, CorrelationTable, SfSample};

/// Fitted GP: covariance `σ_Y²·R + σ_GP²·I` factorized once over the
/// training set.
#[derive(Debug, Clone)]
pub struct GprModel<T: Real = f64> {
    sigma_y: T,
    sigma_gp: T,
    corr: CorrelationModel<T>,
    training: Vec<SfSample<T>>,
    chol: Cholesky<T, Dyn>,
    alpha: DVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprPrediction<T = f64> {
    pub z_hat: T,
    pub variance: T,
    /// The raw variance was negative and has been clamped to zero.
    pub clamped: bool,
}

/// Factorizes the training covariance. `corr` supplies the correlation
/// shape; its `sigma_z` is replaced by `sigma_y`.
pub fn gpr_fit<T: Real>(samples: &[SfSample<T>], corr: &CorrelationModel<T>, sigma_y: T, sigma_gp: T) -> Result<GprModel<T>> {
    if samples.is_empty() {
        return Err(RemError::InsufficientData { needed: 1, got: 0 });
    }
    if !(sigma_y > T::zero()) || !(sigma_gp >= T::zero()) || !sigma_y.is_finite() || !sigma_gp.is_finite() {
        return Err(RemError::InvalidInput("sigma_y must be positive and sigma_gp non-negative".into()));
    }
    let corr = corr.with_sigma(sigma_y);
    corr.validate()?;
    if sigma_gp == T::zero() {
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                if samples[i].location.coincides(&samples[j].location) {
                    return Err(RemError::DuplicateLocations { first: samples[i].seq, second: samples[j].seq });
                }
            }
        }
    }
    let points: Vec<GeoPoint<T>> = samples.iter().map(|s| s.location).collect();
    let chol = factor_covariance(&points, &corr, sigma_gp * sigma_gp).ok_or(RemError::SingularSystem)?;
    let alpha = chol.solve(&DVector::from_iterator(samples.len(), samples.iter().map(|s| s.z)));
    Ok(GprModel { sigma_y, sigma_gp, corr, training: samples.to_vec(), chol, alpha })
}

impl<T: Real> GprModel<T> {
    pub fn sigma_y(&self) -> T {
        self.sigma_y
    }

    pub fn sigma_gp(&self) -> T {
        self.sigma_gp
    }

    /// Correlation model with `sigma_z = sigma_y`.
    pub fn correlation(&self) -> &CorrelationModel<T> {
        &self.corr
    }

    pub fn training(&self) -> &[SfSample<T>] {
        &self.training
    }

    fn cross_covariance(&self, target: &GeoPoint<T>) -> DVector<T> {
        DVector::from_iterator(self.training.len(), self.training.iter().map(|s| self.corr.covariance(&s.location, target)))
    }

    /// Posterior mean only; O(n) per target.
    pub fn predict_mean(&self, target: &GeoPoint<T>) -> T {
        self.cross_covariance(target).dot(&self.alpha)
    }

    /// Posterior mean and predictive variance `σ_Y² + σ_GP² − Σ w_i C_Y(l₀, l_i)`.
    pub fn predict(&self, target: &GeoPoint<T>) -> GprPrediction<T> {
        let c0 = self.cross_covariance(target);
        let w = self.chol.solve(&c0);
        let raw = self.sigma_y * self.sigma_y + self.sigma_gp * self.sigma_gp - w.dot(&c0);
        GprPrediction { z_hat: c0.dot(&self.alpha), variance: raw.max(T::zero()), clamped: raw < T::lit(-1e-9) }
    }

    /// Weights `w` of the linear predictor at `target`, in training order.
    pub fn weights(&self, target: &GeoPoint<T>) -> Vec<T> {
        self.chol.solve(&self.cross_covariance(target)).iter().copied().collect()
    }
}

/// `(ẑ, variance)` at `target`.
pub fn gpr_predict<T: Real>(model: &GprModel<T>, target: &GeoPoint<T>) -> (T, T) {
    let p = model.predict(target);
    (p.z_hat, p.variance)
}

/// Variance split `(σ_Y, σ_GP)` from the empirical correlation of `samples`.
pub fn estimate_hyperparameters<T: Real>(samples: &[SfSample<T>], bins: &BinSpec) -> Result<(T, T)> {
    let table = empirical_correlation(samples, bins)?;
    let (sy, sgp) = hyperparameters_from_table(&table)?;
    Ok((T::lit(sy), T::lit(sgp)))
}

/// Nugget from the correlation of the shortest-lag bins: the three
/// non-empty bins of the first vertical band nearest in `d_h` are
/// extrapolated linearly to lag 0, giving `σ_GP² = σ̂²(1 − R̂₀)` clamped to
/// `[0, 0.9σ̂²]`; `σ_Y² = σ̂² − σ_GP²`.
pub fn hyperparameters_from_table(table: &CorrelationTable) -> Result<(f64, f64)> {
    let var = table.sigma * table.sigma;
    let mut first: Vec<(f64, f64, f64)> = (0..table.n_dh())
        .map(|ih| table.bin(ih, 0))
        .filter(|b| !b.is_empty())
        .map(|b| (b.mean_dh, b.value, b.count as f64))
        .collect();
    first.truncate(3);
    let r0 = match first.len() {
        0 => return Err(RemError::InsufficientData { needed: 1, got: 0 }),
        1 => first[0].1,
        _ => {
            let w: f64 = first.iter().map(|p| p.2).sum();
            let mx = first.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
            let my = first.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
            let sxx: f64 = first.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
            let sxy: f64 = first.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            my - slope * mx
        }
    };
    let nugget = (var * (1.0 - r0)).clamp(0.0, 0.9 * var);
    let sigma_y = (var - nugget).sqrt();
    if !(sigma_y > 0.0) {
        return Err(RemError::InvalidInput("residuals have zero variance".into()));
    }
    Ok((sigma_y, nugget.sqrt()))
}
