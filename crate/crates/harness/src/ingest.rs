//! Measurement CSV ingestion.
//!
//! Files carry a header naming at least `seq,lat_deg,lon_deg,alt_m,rsrp_dbm`;
//! the columns may come in any order and extra columns are ignored.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rem_core::{GeoPoint, Measurement};

use crate::error::{HarnessError, Result};

pub const COLUMNS: [&str; 5] = ["seq", "lat_deg", "lon_deg", "alt_m", "rsrp_dbm"];

pub fn ingest_measurements(path: impl AsRef<Path>) -> Result<Vec<Measurement>> {
    read_measurements(File::open(path)?)
}

pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<Measurement>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(HarnessError::Parse { line: 1, message: "missing header".into() });
    }
    let mut col = [0usize; 5];
    for (k, name) in COLUMNS.iter().enumerate() {
        col[k] = header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_error(1, format!("header lacks column `{name}`")))?;
    }

    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(parse_error(e.position().map_or(line, |p| p.line()), e.to_string())),
        }
        let line = record.position().map_or(line, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let field = |k: usize| -> Result<&str> {
            record.get(col[k]).ok_or_else(|| parse_error(line, format!("missing `{}`", COLUMNS[k])))
        };
        let number = |k: usize| -> Result<f64> {
            let s = field(k)?;
            let v: f64 = s.parse().map_err(|_| parse_error(line, format!("`{}` is not a number: {s:?}", COLUMNS[k])))?;
            if !v.is_finite() {
                return Err(parse_error(line, format!("`{}` is not finite", COLUMNS[k])));
            }
            Ok(v)
        };
        let seq_text = field(0)?;
        let seq: usize = seq_text.parse().map_err(|_| parse_error(line, format!("`seq` is not a count: {seq_text:?}")))?;
        let (lat, lon, alt, rsrp) = (number(1)?, number(2)?, number(3)?, number(4)?);
        if !(-90.0..=90.0).contains(&lat) {
            return Err(HarnessError::Range { line, message: format!("latitude {lat} outside [-90, 90]") });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(HarnessError::Range { line, message: format!("longitude {lon} outside [-180, 180]") });
        }
        out.push(Measurement { location: GeoPoint { lat, lon, alt }, rsrp_dbm: rsrp, seq });
    }
    Ok(out)
}

fn parse_error(line: u64, message: String) -> HarnessError {
    HarnessError::Parse { line, message }
}

pub fn write_measurements<W: Write>(writer: W, measurements: &[Measurement]) -> Result<()> {
    Ok(rem_synth::write_measurements_csv(writer, measurements)?)
}
