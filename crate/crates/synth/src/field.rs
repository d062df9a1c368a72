//! Gaussian random fields with the shadow-fading covariance.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rem_core::{CorrelationModel, GeoPoint, RemError};

use crate::Result;

/// Largest number of distinct points a dense factorization is attempted on.
pub const MAX_FIELD_POINTS: usize = 5000;

/// Relative diagonal lift tried first; raised tenfold until the factorization succeeds.
const LIFT: f64 = 1e-10;
const MAX_LIFT: f64 = 1e-6;

/// One realization over a point set, with the conditional mean available
/// everywhere else.
#[derive(Debug, Clone)]
pub struct CorrelatedField {
    corr: CorrelationModel,
    unique: Vec<GeoPoint>,
    unique_values: Vec<f64>,
    /// Input index to `unique` index.
    index: Vec<usize>,
    /// `C⁻¹ z` over the unique points; empty when `σ = 0`.
    alpha: Vec<f64>,
    lift: f64,
}

impl CorrelatedField {
    /// Draws `z = L n` with `L Lᵀ = σ²R + lift·σ²I` over the distinct points;
    /// coincident inputs share a value.
    pub fn sample(points: &[GeoPoint], corr: &CorrelationModel, rng: &mut ChaCha8Rng) -> Result<Self> {
        corr.validate()?;
        let mut unique: Vec<GeoPoint> = Vec::new();
        let mut index = Vec::with_capacity(points.len());
        let mut seen: std::collections::HashMap<[u64; 3], usize> = std::collections::HashMap::new();
        for p in points {
            let key = [p.lat.to_bits(), p.lon.to_bits(), p.alt.to_bits()];
            let k = *seen.entry(key).or_insert_with(|| {
                unique.push(*p);
                unique.len() - 1
            });
            index.push(k);
        }
        let n = unique.len();
        let var = corr.variance();
        if var == 0.0 || n == 0 {
            return Ok(Self { corr: *corr, unique_values: vec![0.0; n], unique, index, alpha: Vec::new(), lift: 0.0 });
        }
        if n > MAX_FIELD_POINTS {
            return Err(RemError::TooManyPoints { got: n, max: MAX_FIELD_POINTS }.into());
        }
        let cov = Mat::<f64>::from_fn(n, n, |i, j| if i == j { var } else { corr.covariance(&unique[i], &unique[j]) });
        let mut lift = LIFT;
        let llt = loop {
            let lifted = Mat::<f64>::from_fn(n, n, |i, j| cov[(i, j)] + if i == j { lift * var } else { 0.0 });
            match lifted.llt(Side::Lower) {
                Ok(l) => break l,
                Err(_) if lift < MAX_LIFT => lift *= 10.0,
                Err(_) => return Err(RemError::SingularSystem.into()),
            }
        };
        let normals: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let l = llt.L();
        let unique_values: Vec<f64> = (0..n).map(|i| (0..=i).map(|j| l[(i, j)] * normals[j]).sum()).collect();
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| unique_values[i]);
        let sol = llt.solve(&rhs);
        let alpha = (0..n).map(|i| sol[(i, 0)]).collect();
        Ok(Self { corr: *corr, unique, unique_values, index, alpha, lift })
    }

    /// Values at the input points, in input order.
    pub fn values(&self) -> Vec<f64> {
        self.index.iter().map(|&k| self.unique_values[k]).collect()
    }

    /// Diagonal lift (relative to `σ²`) that the factorization needed.
    pub fn lift(&self) -> f64 {
        self.lift
    }

    /// The realized value at a realized point; elsewhere the conditional
    /// mean given the realization.
    pub fn at(&self, p: &GeoPoint) -> f64 {
        if let Some(k) = self.unique.iter().position(|u| u.coincides(p)) {
            return self.unique_values[k];
        }
        self.unique.iter().zip(&self.alpha).map(|(u, a)| self.corr.covariance(u, p) * a).sum()
    }
}

/// One realization of the zero-mean field with covariance `σ_z²·R` at `points`.
pub fn sample_correlated_field(points: &[GeoPoint], corr: &CorrelationModel, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(CorrelatedField::sample(points, corr, &mut rng)?.values())
}
