//! Matrix-completion-assisted GPR: GPR on a regular grid, nuclear-norm
//! smoothing, deep-shadow extraction and dilation, and bicubic prediction.

mod morph;
mod nuclear;

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RemError, Result};
use crate::geo::{GeoPoint, LocalFrame};
use crate::gpr::GprModel;
use crate::interp::{eval_natural, second_derivatives};
use crate::scalar::Real;
use crate::shadow::SfSample;

pub use morph::{decompose_deep_shadow, dilate_deep_shadow};
pub use nuclear::{nuclear_norm, nuclear_norm_min, nuclear_norm_project, water_level, McOutcome, SvdProjector};

pub const DEFAULT_SPACING_M: f64 = 5.0;

/// Regular grid on the local tangent plane. Row `i` lies `i·spacing`
/// north of the origin, column `j` lies `j·spacing` east.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T = f64> {
    /// South-west corner; its altitude is the altitude of every node.
    pub origin: GeoPoint<T>,
    pub spacing_m: T,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn frame(&self) -> LocalFrame<T> {
        LocalFrame::new(self.origin)
    }

    pub fn node(&self, row: usize, col: usize) -> GeoPoint<T> {
        self.frame().to_geo(T::from_count(col) * self.spacing_m, T::from_count(row) * self.spacing_m, self.origin.alt)
    }

    pub fn nodes(&self) -> Vec<GeoPoint<T>> {
        let f = self.frame();
        (0..self.n_rows)
            .flat_map(|r| (0..self.n_cols).map(move |c| (r, c)))
            .map(|(r, c)| f.to_geo(T::from_count(c) * self.spacing_m, T::from_count(r) * self.spacing_m, self.origin.alt))
            .collect()
    }

    /// `(east, north)` of `p` relative to the origin, meters.
    pub fn local(&self, p: &GeoPoint<T>) -> (T, T) {
        self.frame().to_local(p)
    }
}

/// Grid covering the bounding box of `points` in `spacing_m` steps
/// (inclusive endpoints), at their mean altitude.
pub fn build_grid_for<T: Real>(points: &[GeoPoint<T>], spacing_m: T) -> Result<GridSpec<T>> {
    if points.is_empty() {
        return Err(RemError::InsufficientData { needed: 1, got: 0 });
    }
    if !(spacing_m > T::zero()) {
        return Err(RemError::InvalidInput("grid spacing must be positive".into()));
    }
    let (mut lat0, mut lat1, mut lon0, mut lon1) = (points[0].lat, points[0].lat, points[0].lon, points[0].lon);
    let mut alt = T::zero();
    for p in points {
        lat0 = lat0.min(p.lat);
        lat1 = lat1.max(p.lat);
        lon0 = lon0.min(p.lon);
        lon1 = lon1.max(p.lon);
        alt += p.alt;
    }
    let origin = GeoPoint { lat: lat0, lon: lon0, alt: alt / T::from_count(points.len()) };
    let (east, north) = LocalFrame::new(origin).to_local(&GeoPoint { lat: lat1, lon: lon1, alt: origin.alt });
    if east < spacing_m || north < spacing_m {
        return Err(RemError::DegenerateExtent);
    }
    let count = |extent: T| ((extent / spacing_m).as_f64() - 1e-9).ceil() as usize + 1;
    Ok(GridSpec { origin, spacing_m, n_rows: count(north), n_cols: count(east) })
}

pub fn build_grid<T: Real>(samples: &[SfSample<T>], spacing_m: T) -> Result<GridSpec<T>> {
    let pts: Vec<GeoPoint<T>> = samples.iter().map(|s| s.location).collect();
    build_grid_for(&pts, spacing_m)
}

/// GPR means `z` and standard deviations `sigma` at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowGrid<T = f64> {
    pub spec: GridSpec<T>,
    pub z: DMatrix<T>,
    pub sigma: DMatrix<T>,
}

pub fn gpr_to_grid<T: Real>(model: &GprModel<T>, spec: &GridSpec<T>) -> ShadowGrid<T> {
    let preds: Vec<(T, T)> = spec
        .nodes()
        .par_iter()
        .map(|p| {
            let q = model.predict(p);
            (q.z_hat, q.variance.sqrt())
        })
        .collect();
    let z = DMatrix::from_fn(spec.n_rows, spec.n_cols, |r, c| preds[r * spec.n_cols + c].0);
    let sigma = DMatrix::from_fn(spec.n_rows, spec.n_cols, |r, c| preds[r * spec.n_cols + c].1);
    ShadowGrid { spec: *spec, z, sigma }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig<T = f64> {
    pub alpha: T,
    pub t_v: T,
    pub t_lambda: T,
    pub dilation_radius: usize,
    pub max_bisection_iters: usize,
}

impl<T: Real> Default for McConfig<T> {
    fn default() -> Self {
        Self { alpha: T::one(), t_v: T::one(), t_lambda: T::lit(20.0), dilation_radius: 1, max_bisection_iters: 60 }
    }
}

impl<T: Real> McConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !(self.t_v >= T::zero()) || !(self.t_lambda > T::zero()) {
            return Err(RemError::InvalidInput("alpha and t_lambda must be positive, t_v non-negative".into()));
        }
        Ok(())
    }
}

/// Natural bicubic (tensor-product) spline over a grid matrix, clamped to
/// the edge values outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BicubicSpline<T = f64> {
    xs: Vec<T>,
    ys: Vec<T>,
    values: DMatrix<T>,
    row_curvature: Vec<Vec<T>>,
}

impl<T: Real> BicubicSpline<T> {
    /// `values[(row, col)]` sits at `(x = col·spacing, y = row·spacing)`.
    pub fn new(values: DMatrix<T>, spacing: T) -> Self {
        let xs: Vec<T> = (0..values.ncols()).map(|j| T::from_count(j) * spacing).collect();
        let ys: Vec<T> = (0..values.nrows()).map(|i| T::from_count(i) * spacing).collect();
        let row_curvature = (0..values.nrows())
            .map(|i| {
                let row: Vec<T> = values.row(i).iter().copied().collect();
                second_derivatives(&xs, &row)
            })
            .collect();
        Self { xs, ys, values, row_curvature }
    }

    pub fn eval(&self, x: T, y: T) -> T {
        let column: Vec<T> = (0..self.values.nrows())
            .map(|i| {
                let row: Vec<T> = self.values.row(i).iter().copied().collect();
                eval_natural(&self.xs, &row, &self.row_curvature[i], x)
            })
            .collect();
        let m = second_derivatives(&self.ys, &column);
        eval_natural(&self.ys, &column, &m, y)
    }
}

/// Every intermediate product of the MC-assisted pipeline; immutable and
/// shareable across threads once built.
#[derive(Debug, Clone)]
pub struct McPipeline<T: Real = f64> {
    pub grid: ShadowGrid<T>,
    pub outcome: McOutcome<T>,
    pub z_smooth: DMatrix<T>,
    pub z_ds: DMatrix<T>,
    pub z_ds_dilated: DMatrix<T>,
    /// `z_smooth + z_ds_dilated`, the surface that is interpolated.
    pub combined: DMatrix<T>,
    spline: BicubicSpline<T>,
}

impl<T: Real> McPipeline<T> {
    pub fn build(model: &GprModel<T>, spec: &GridSpec<T>, cfg: &McConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::from_grid(gpr_to_grid(model, spec), cfg))
    }

    pub fn from_grid(grid: ShadowGrid<T>, cfg: &McConfig<T>) -> Self {
        let outcome = nuclear_norm_min(&grid, cfg);
        let (z_smooth, z_ds) = decompose_deep_shadow(&grid.z, &outcome.z_mc, cfg.t_v);
        let z_ds_dilated = dilate_deep_shadow(&z_ds, cfg.dilation_radius);
        let combined = &z_smooth + &z_ds_dilated;
        let spline = BicubicSpline::new(combined.clone(), grid.spec.spacing_m);
        Self { grid, outcome, z_smooth, z_ds, z_ds_dilated, combined, spline }
    }

    pub fn predict(&self, target: &GeoPoint<T>) -> T {
        let (east, north) = self.grid.spec.local(target);
        self.spline.eval(east, north)
    }

    /// Writes `z`, `sigma`, `z_mc`, `z_ds` as `<prefix>_<name>.csv` in `dir`.
    pub fn dump(&self, dir: &std::path::Path, prefix: &str) -> std::io::Result<()> {
        for (name, m) in [("z", &self.grid.z), ("sigma", &self.grid.sigma), ("z_mc", &self.outcome.z_mc), ("z_ds", &self.z_ds)] {
            let f = std::fs::File::create(dir.join(format!("{prefix}_{name}.csv")))?;
            write_matrix_csv(std::io::BufWriter::new(f), m)?;
        }
        Ok(())
    }
}

/// One matrix row per line, south row first.
pub fn write_matrix_csv<T: Real, W: Write>(mut w: W, m: &DMatrix<T>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.as_f64().to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

/// Single-shot MC-assisted prediction; build an [`McPipeline`] to reuse the
/// grid products across targets.
pub fn mc_assisted_predict<T: Real>(model: &GprModel<T>, spec: &GridSpec<T>, cfg: &McConfig<T>, target: &GeoPoint<T>) -> Result<T> {
    Ok(McPipeline::build(model, spec, cfg)?.predict(target))
}
