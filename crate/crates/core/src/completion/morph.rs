//! Deep-shadow decomposition and signed grayscale dilation.

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Splits `z` into `(z_smooth, z_ds)` where `z_ds` keeps the residual
/// `z − z_mc` only where its magnitude exceeds `t_v`, and
/// `z_smooth = z − z_ds`.
pub fn decompose_deep_shadow<T: Real>(z: &DMatrix<T>, z_mc: &DMatrix<T>, t_v: T) -> (DMatrix<T>, DMatrix<T>) {
    assert_eq!(z.shape(), z_mc.shape(), "matrix shapes differ");
    let ds = z.zip_map(z_mc, |a, b| {
        let d = a - b;
        if d.abs() > t_v {
            d
        } else {
            T::zero()
        }
    });
    (z - &ds, ds)
}

fn max_filter<T: Real>(m: &DMatrix<T>, radius: usize) -> DMatrix<T> {
    let (nr, nc) = m.shape();
    // Separable: rows then columns.
    let rows = DMatrix::from_fn(nr, nc, |i, j| {
        let (lo, hi) = (j.saturating_sub(radius), (j + radius).min(nc - 1));
        (lo..=hi).fold(T::zero(), |a, k| a.max(m[(i, k)]))
    });
    DMatrix::from_fn(nr, nc, |i, j| {
        let (lo, hi) = (i.saturating_sub(radius), (i + radius).min(nr - 1));
        (lo..=hi).fold(T::zero(), |a, k| a.max(rows[(k, j)]))
    })
}

/// Dilates positive and negative parts separately over the
/// `(2r+1)×(2r+1)` square and keeps, per cell, the larger magnitude;
/// equal magnitudes resolve to the negative (shadow) side.
pub fn dilate_deep_shadow<T: Real>(z_ds: &DMatrix<T>, radius: usize) -> DMatrix<T> {
    if z_ds.is_empty() {
        return z_ds.clone();
    }
    let pos = max_filter(&z_ds.map(|v| v.max(T::zero())), radius);
    let neg = max_filter(&z_ds.map(|v| (-v).max(T::zero())), radius);
    pos.zip_map(&neg, |p, n| if p > n { p } else { -n })
}
