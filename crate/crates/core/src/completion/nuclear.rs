//! Nuclear-norm ball projection and the constrained bisection over its radius.

use nalgebra::DMatrix;

use super::{McConfig, ShadowGrid};
use crate::scalar::Real;

/// Thin SVD of a matrix, reused for projections onto nuclear-norm balls of
/// different radii.
#[derive(Debug, Clone)]
pub struct SvdProjector<T: Real = f64> {
    u: DMatrix<T>,
    s: Vec<T>,
    v_t: DMatrix<T>,
    nuclear_norm: T,
}

impl<T: Real> SvdProjector<T> {
    /// Decomposes in `f64` with faer; nalgebra's SVD mis-factors a sizeable
    /// fraction of rank-deficient inputs, which smooth grids often are.
    pub fn new(m: &DMatrix<T>) -> Self {
        let (nr, nc) = m.shape();
        let k = nr.min(nc);
        if k == 0 {
            return Self { u: DMatrix::zeros(nr, 0), s: Vec::new(), v_t: DMatrix::zeros(0, nc), nuclear_norm: T::zero() };
        }
        let a = faer::Mat::<f64>::from_fn(nr, nc, |i, j| m[(i, j)].as_f64());
        let svd = a.thin_svd().expect("SVD of a finite matrix");
        let (u, sv, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let s: Vec<T> = (0..k).map(|i| T::lit(sv[i])).collect();
        let nuclear_norm = s.iter().fold(T::zero(), |a, v| a + *v);
        Self {
            u: DMatrix::from_fn(nr, k, |i, j| T::lit(u[(i, j)])),
            s,
            v_t: DMatrix::from_fn(k, nc, |i, j| T::lit(v[(j, i)])),
            nuclear_norm,
        }
    }

    pub fn nuclear_norm(&self) -> T {
        self.nuclear_norm
    }

    pub fn singular_values(&self) -> &[T] {
        &self.s
    }

    /// Soft-thresholded singular values with `Σ s_k' = min(lambda, ‖m‖_*)`.
    pub fn shrunk(&self, lambda: T) -> Vec<T> {
        let t = water_level(&self.s, lambda);
        self.s.iter().map(|s| (*s - t).max(T::zero())).collect()
    }

    pub fn project(&self, lambda: T) -> DMatrix<T> {
        let s = self.shrunk(lambda);
        let mut us = self.u.clone();
        for (k, sk) in s.iter().enumerate() {
            us.column_mut(k).scale_mut(*sk);
        }
        us * &self.v_t
    }
}

/// Threshold `t ≥ 0` with `Σ max(s_k − t, 0) = min(lambda, Σ s_k)`.
pub fn water_level<T: Real>(s: &[T], lambda: T) -> T {
    let total = s.iter().fold(T::zero(), |a, v| a + *v);
    if lambda >= total {
        return T::zero();
    }
    let lambda = lambda.max(T::zero());
    let mut sorted: Vec<T> = s.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut prefix = T::zero();
    let mut t = sorted.first().copied().unwrap_or_else(T::zero);
    for (k, sk) in sorted.iter().enumerate() {
        prefix += *sk;
        let cand = (prefix - lambda) / T::from_count(k + 1);
        if *sk > cand {
            t = cand;
        } else {
            break;
        }
    }
    t.max(T::zero())
}

/// Projection of `m` onto the nuclear-norm ball of radius `lambda`.
pub fn nuclear_norm_project<T: Real>(m: &DMatrix<T>, lambda: T) -> DMatrix<T> {
    SvdProjector::new(m).project(lambda)
}

pub fn nuclear_norm<T: Real>(m: &DMatrix<T>) -> T {
    SvdProjector::new(m).nuclear_norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutcome<T = f64> {
    /// Last feasible iterate.
    pub z_mc: DMatrix<T>,
    /// Radius at which `z_mc` was produced.
    pub lambda: T,
    pub iterations: usize,
    /// The iteration cap, not the radius gap, ended the search.
    pub hit_max_iters: bool,
}

/// Bisection for the smallest radius whose projection of `Z` stays within
/// `alpha·Σ` of `Z` in every cell.
///
/// `λ = ‖Z‖_*` (no shrinkage) is always feasible, so the returned matrix
/// satisfies the constraint even when the search stops on an infeasible
/// midpoint.
pub fn nuclear_norm_min<T: Real>(grid: &ShadowGrid<T>, cfg: &McConfig<T>) -> McOutcome<T> {
    let z = &grid.z;
    let bound = grid.sigma.map(|s| cfg.alpha * s);
    let proj = SvdProjector::new(z);
    let feasible = |x: &DMatrix<T>| x.iter().zip(z.iter()).zip(bound.iter()).all(|((a, b), c)| (*a - *b).abs() <= *c);

    let (mut lo, mut hi) = (T::zero(), proj.nuclear_norm());
    let mut best = McOutcome { z_mc: z.clone(), lambda: hi, iterations: 0, hit_max_iters: false };
    let mut lambda_old = hi;
    for it in 1..=cfg.max_bisection_iters {
        let lambda = (lo + hi) / T::lit(2.0);
        let x = proj.project(lambda);
        best.iterations = it;
        let ok = feasible(&x);
        if ok {
            hi = lambda;
            best.z_mc = x;
            best.lambda = lambda;
        } else {
            lo = lambda;
        }
        if ok && (lambda - lambda_old).abs() <= cfg.t_lambda {
            return best;
        }
        lambda_old = lambda;
    }
    best.hit_max_iters = true;
    best
}
