//! Tabulated antenna gain patterns over (azimuth, elevation).

use std::io::{Read, Write};

use crate::error::{RemError, Result};
use crate::geo::wrap_degrees;
use crate::scalar::Real;

/// Peak directivity of a half-wave dipole, dBi.
pub const DIPOLE_PEAK_DBI: f64 = 2.15;

/// Floor applied to the nulls of analytic presets so every node stays finite.
const PRESET_FLOOR_DBI: f64 = -40.0;

/// Gain table in dBi over an azimuth × elevation grid.
///
/// `gain` is row-major with azimuth as the outer index. Lookups wrap in
/// azimuth and clamp in elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaPattern<T = f64> {
    az_grid: Vec<T>,
    el_grid: Vec<T>,
    gain: Vec<T>,
    pub label: String,
}

fn strictly_ascending<T: Real>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl<T: Real> AntennaPattern<T> {
    pub fn new(az_grid: Vec<T>, el_grid: Vec<T>, gain: Vec<T>, label: impl Into<String>) -> Result<Self> {
        let bad = |m: &str| Err(RemError::PatternFormat(m.to_string()));
        if az_grid.is_empty() || el_grid.is_empty() {
            return bad("empty grid");
        }
        if gain.len() != az_grid.len() * el_grid.len() {
            return bad("gain table size does not match the grid");
        }
        if !strictly_ascending(&az_grid) || !strictly_ascending(&el_grid) {
            return bad("grids must be strictly ascending");
        }
        if az_grid[0] < T::zero() || az_grid[az_grid.len() - 1] >= T::lit(360.0) {
            return bad("azimuth grid must lie in [0, 360)");
        }
        if el_grid[0] < T::lit(-90.0) || el_grid[el_grid.len() - 1] > T::lit(90.0) {
            return bad("elevation grid must lie in [-90, 90]");
        }
        if gain.iter().any(|g| !g.is_finite()) {
            return bad("non-finite gain");
        }
        Ok(Self { az_grid, el_grid, gain, label: label.into() })
    }

    /// 0 dBi in every direction.
    pub fn isotropic() -> Self {
        Self::new(vec![T::zero()], vec![T::lit(-90.0), T::lit(90.0)], vec![T::zero(); 2], "isotropic").unwrap()
    }

    /// Vertical half-wave dipole, omnidirectional in azimuth, sampled every
    /// `step_deg` degrees of elevation.
    pub fn half_wave_dipole(step_deg: f64) -> Self {
        assert!(step_deg > 0.0 && step_deg <= 90.0);
        let n = (180.0 / step_deg).round() as usize;
        let peak = 10f64.powf(DIPOLE_PEAK_DBI / 10.0);
        let mut el = Vec::with_capacity(n + 1);
        let mut gain = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let theta = (-90.0 + 180.0 * k as f64 / n as f64).to_radians();
            let c = theta.cos();
            let shape = if c.abs() < 1e-12 {
                0.0
            } else {
                let f = (std::f64::consts::FRAC_PI_2 * theta.sin()).cos() / c;
                f * f
            };
            let g = if shape > 0.0 { 10.0 * (peak * shape).log10() } else { PRESET_FLOOR_DBI };
            el.push(T::lit(theta.to_degrees()));
            gain.push(T::lit(g.max(PRESET_FLOOR_DBI)));
        }
        Self::new(vec![T::zero()], el, gain, "half-wave dipole").unwrap()
    }

    pub fn az_grid(&self) -> &[T] {
        &self.az_grid
    }

    pub fn el_grid(&self) -> &[T] {
        &self.el_grid
    }

    pub fn gain_table(&self) -> &[T] {
        &self.gain
    }

    fn node(&self, ia: usize, ie: usize) -> T {
        self.gain[ia * self.el_grid.len() + ie]
    }

    /// Bilinear gain in dBi at (`az`, `el`) degrees.
    pub fn gain_at(&self, az: T, el: T) -> T {
        let (ie0, ie1, te) = bracket_clamped(&self.el_grid, el);
        let (ia0, ia1, ta) = self.bracket_az(wrap_degrees(az));
        let one = T::one();
        let g00 = self.node(ia0, ie0);
        let g01 = self.node(ia0, ie1);
        let g10 = self.node(ia1, ie0);
        let g11 = self.node(ia1, ie1);
        (one - ta) * ((one - te) * g00 + te * g01) + ta * ((one - te) * g10 + te * g11)
    }

    /// Linear (power ratio) gain.
    pub fn linear_gain_at(&self, az: T, el: T) -> T {
        self.gain_at(az, el).db_to_linear()
    }

    fn bracket_az(&self, az: T) -> (usize, usize, T) {
        let g = &self.az_grid;
        let n = g.len();
        if n == 1 {
            return (0, 0, T::zero());
        }
        let first = g[0];
        let last = g[n - 1];
        if az >= first && az <= last {
            let (i0, i1, t) = bracket_clamped(g, az);
            return (i0, i1, t);
        }
        // Wrap segment from `last` to `first + 360`.
        let span = first + T::lit(360.0) - last;
        let offset = if az > last { az - last } else { az + T::lit(360.0) - last };
        (n - 1, 0, offset / span)
    }

    /// Reads the `az_deg,el_deg,gain_dbi` CSV format.
    ///
    /// Rows are azimuth-major over a complete grid; missing or out-of-order
    /// nodes are rejected.
    pub fn read_csv<R: Read>(reader: R, label: impl Into<String>) -> Result<Self> {
        let rows = read_grid_rows(reader, &["az_deg", "el_deg", "gain_dbi"])?;
        let (az, el) = grid_axes(&rows)?;
        let gain = rows.iter().map(|r| T::lit(r[2])).collect();
        Self::new(az.into_iter().map(T::lit).collect(), el.into_iter().map(T::lit).collect(), gain, label)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| RemError::PatternFormat(e.to_string());
        w.write_record(["az_deg", "el_deg", "gain_dbi"]).map_err(io)?;
        for (ia, az) in self.az_grid.iter().enumerate() {
            for (ie, el) in self.el_grid.iter().enumerate() {
                w.write_record([az.as_f64().to_string(), el.as_f64().to_string(), self.node(ia, ie).as_f64().to_string()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| RemError::PatternFormat(e.to_string()))
    }
}

/// Index pair and fraction for linear interpolation, clamped to the grid ends.
pub(crate) fn bracket_clamped<T: Real>(grid: &[T], x: T) -> (usize, usize, T) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0, T::zero());
    }
    if x >= grid[n - 1] {
        return (n - 1, n - 1, T::zero());
    }
    let i1 = grid.partition_point(|g| *g <= x);
    let i0 = i1 - 1;
    (i0, i1, (x - grid[i0]) / (grid[i1] - grid[i0]))
}

/// Parses a CSV with the given header into numeric rows.
pub(crate) fn read_grid_rows<R: Read>(reader: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| RemError::PatternFormat(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(RemError::PatternFormat(format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| RemError::PatternFormat(format!("line {line}: {e}")))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| RemError::PatternFormat(format!("line {line}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(RemError::PatternFormat(format!("line {line}: non-finite value")));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Recovers the azimuth and elevation axes of an azimuth-major table and
/// checks that every node is present in order.
pub(crate) fn grid_axes(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if rows.is_empty() {
        return Err(RemError::PatternFormat("no rows".into()));
    }
    let mut az: Vec<f64> = Vec::new();
    for r in rows {
        if az.last() != Some(&r[0]) {
            az.push(r[0]);
        }
    }
    let n_el = rows.len() / az.len();
    if n_el * az.len() != rows.len() {
        return Err(RemError::PatternFormat("grid has gaps".into()));
    }
    let el: Vec<f64> = rows[..n_el].iter().map(|r| r[1]).collect();
    for (k, r) in rows.iter().enumerate() {
        let (ia, ie) = (k / n_el, k % n_el);
        if r[0] != az[ia] || r[1] != el[ie] {
            return Err(RemError::PatternFormat(format!("line {}: grid has gaps or is not azimuth-major", k + 2)));
        }
    }
    Ok((az, el))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> AntennaPattern {
        // az 0 and 90, el 0 and 30.
        AntennaPattern::new(vec![0.0, 90.0], vec![0.0, 30.0], vec![1.0, 3.0, 5.0, 7.0], "t").unwrap()
    }

    #[test]
    fn isotropic_is_zero_everywhere() {
        let p = AntennaPattern::<f64>::isotropic();
        for (az, el) in [(0.0, 0.0), (123.0, -45.0), (359.9, 89.0), (-20.0, 90.0)] {
            assert_eq!(p.gain_at(az, el), 0.0);
        }
    }

    #[test]
    fn exact_at_nodes() {
        let p = two_by_two();
        assert_eq!(p.gain_at(0.0, 0.0), 1.0);
        assert_eq!(p.gain_at(0.0, 30.0), 3.0);
        assert_eq!(p.gain_at(90.0, 0.0), 5.0);
        assert_eq!(p.gain_at(90.0, 30.0), 7.0);
    }

    #[test]
    fn bilinear_midpoints() {
        let p = AntennaPattern::<f64>::new(vec![0.0, 10.0], vec![0.0], vec![4.0, 6.0], "t").unwrap();
        assert!((p.gain_at(5.0, 0.0) - 5.0).abs() < 1e-12);
        let q = two_by_two();
        assert!((q.gain_at(45.0, 15.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn azimuth_wraps() {
        let p = AntennaPattern::<f64>::new(vec![0.0, 180.0, 270.0], vec![0.0], vec![0.0, 2.0, 4.0], "t").unwrap();
        // Between 270 (4 dB) and 360 (0 dB).
        assert!((p.gain_at(315.0, 0.0) - 2.0).abs() < 1e-12);
        assert!((p.gain_at(-45.0, 0.0) - 2.0).abs() < 1e-12);
        assert!((p.gain_at(675.0, 0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn elevation_clamps() {
        let p = two_by_two();
        assert_eq!(p.gain_at(0.0, -60.0), 1.0);
        assert_eq!(p.gain_at(0.0, 80.0), 3.0);
    }

    #[test]
    fn dipole_peak_and_shape() {
        let p = AntennaPattern::<f64>::half_wave_dipole(1.0);
        assert!((p.gain_at(0.0, 0.0) - DIPOLE_PEAK_DBI).abs() < 1e-9);
        assert!(p.gain_at(0.0, 60.0) < p.gain_at(0.0, 30.0));
        assert!((p.gain_at(0.0, 40.0) - p.gain_at(77.0, -40.0)).abs() < 1e-9);
        assert_eq!(p.gain_at(0.0, 90.0), PRESET_FLOOR_DBI);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(AntennaPattern::new(vec![10.0, 5.0], vec![0.0], vec![0.0, 0.0], "t").is_err());
        assert!(AntennaPattern::new(vec![0.0], vec![0.0, 1.0], vec![0.0], "t").is_err());
        assert!(AntennaPattern::new(vec![0.0, 360.0], vec![0.0], vec![0.0, 0.0], "t").is_err());
        assert!(AntennaPattern::new(vec![0.0], vec![0.0], vec![f64::NAN], "t").is_err());
    }

    #[test]
    fn csv_round_trip_and_gap_rejection() {
        let p = two_by_two();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = AntennaPattern::<f64>::read_csv(buf.as_slice(), "t").unwrap();
        assert_eq!(p, q);

        let gappy = "az_deg,el_deg,gain_dbi\n0,0,1\n0,30,3\n90,0,5\n";
        assert!(AntennaPattern::<f64>::read_csv(gappy.as_bytes(), "g").is_err());
        let shuffled = "az_deg,el_deg,gain_dbi\n0,0,1\n0,30,3\n90,30,5\n90,0,7\n";
        assert!(AntennaPattern::<f64>::read_csv(shuffled.as_bytes(), "g").is_err());
        let header = "az,el,g\n0,0,1\n";
        assert!(AntennaPattern::<f64>::read_csv(header.as_bytes(), "g").is_err());
    }
}
