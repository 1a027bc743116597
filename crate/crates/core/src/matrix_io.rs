//! Flow matrices on disk: one `from,to,rate` CSV of non-zero entries per
//! hour or period, plus a JSON manifest.
//!
//! Rates are written with Rust's shortest round-trip float formatting, so
//! reading a directory back reproduces the matrices bit for bit.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{ClampWarning, FlowMatrix, HourlyFlows, PeriodFlows};
use crate::period::{WeekRange, HOURS_PER_WEEK, PERIODS_PER_WEEK};

pub const MANIFEST_FILE: &str = "matrices.json";
pub const WEEKLY_FILE: &str = "weekly.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub locations: usize,
    pub week: WeekRange,
    pub clamp_warnings: Vec<ClampWarning>,
    pub skipped_pre_service: usize,
    pub self_trips: usize,
    pub hourly_files: Vec<String>,
    pub period_files: Vec<String>,
    pub weekly_file: String,
}

pub fn hourly_file(hour: usize) -> String {
    format!("hourly/hour_{hour:03}.csv")
}

pub fn period_file(period: usize) -> String {
    format!("periods/period_{period:02}.csv")
}

pub fn write_matrix<W: Write>(m: &FlowMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["from", "to", "rate"])?;
    for (i, j, v) in m.nonzero() {
        w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(reader: R, n: usize, label: &str) -> Result<FlowMatrix> {
    let bad = |reason: String| Error::MatrixFile {
        path: label.to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(["from", "to", "rate"]) {
        return Err(bad("header must be `from,to,rate`".into()));
    }
    let mut m = FlowMatrix::zeros(n);
    for row in rdr.deserialize() {
        let (i, j, v): (usize, usize, f64) = row?;
        if i >= n || j >= n {
            return Err(bad(format!("entry ({i}, {j}) outside {n} locations")));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(bad(format!("invalid rate {v} at ({i}, {j})")));
        }
        m.set(i, j, v);
    }
    Ok(m)
}

fn write_file(dir: &Path, rel: &str, m: &FlowMatrix) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(m, &mut w)?;
    w.flush()?;
    Ok(())
}

fn read_file(dir: &Path, rel: &str, n: usize) -> Result<FlowMatrix> {
    let path = dir.join(rel);
    let file = File::open(&path)?;
    read_matrix(BufReader::new(file), n, &path.display().to_string())
}

/// Writes hourly, period and weekly matrices plus the manifest into `dir`.
pub fn write_matrix_dir(
    dir: &Path,
    week: WeekRange,
    hourly: &HourlyFlows,
    periods: &PeriodFlows,
    weekly: &FlowMatrix,
) -> Result<MatrixManifest> {
    fs::create_dir_all(dir)?;
    let mut manifest = MatrixManifest {
        locations: hourly.dim(),
        week,
        clamp_warnings: hourly.clamp_warnings.clone(),
        skipped_pre_service: hourly.skipped_pre_service,
        self_trips: hourly.self_trips,
        hourly_files: Vec::with_capacity(HOURS_PER_WEEK),
        period_files: Vec::with_capacity(PERIODS_PER_WEEK),
        weekly_file: WEEKLY_FILE.to_string(),
    };
    for (h, m) in hourly.matrices.iter().enumerate() {
        let rel = hourly_file(h);
        write_file(dir, &rel, m)?;
        manifest.hourly_files.push(rel);
    }
    for (p, m) in periods.matrices.iter().enumerate() {
        let rel = period_file(p);
        write_file(dir, &rel, m)?;
        manifest.period_files.push(rel);
    }
    write_file(dir, WEEKLY_FILE, weekly)?;
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

/// Everything `write_matrix_dir` produced, read back.
#[derive(Debug, Clone)]
pub struct MatrixSet {
    pub manifest: MatrixManifest,
    pub hourly: HourlyFlows,
    pub periods: PeriodFlows,
    pub weekly: FlowMatrix,
}

pub fn read_matrix_dir(dir: &Path) -> Result<MatrixSet> {
    let manifest: MatrixManifest =
        serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    let n = manifest.locations;
    if manifest.hourly_files.len() != HOURS_PER_WEEK {
        return Err(Error::MatrixCount {
            expected: HOURS_PER_WEEK,
            got: manifest.hourly_files.len(),
        });
    }
    if manifest.period_files.len() != PERIODS_PER_WEEK {
        return Err(Error::MatrixCount {
            expected: PERIODS_PER_WEEK,
            got: manifest.period_files.len(),
        });
    }
    let hourly = manifest
        .hourly_files
        .iter()
        .map(|rel| read_file(dir, rel, n))
        .collect::<Result<Vec<_>>>()?;
    let periods = manifest
        .period_files
        .iter()
        .map(|rel| read_file(dir, rel, n))
        .collect::<Result<Vec<_>>>()?;
    let weekly = read_file(dir, &manifest.weekly_file, n)?;
    Ok(MatrixSet {
        hourly: HourlyFlows {
            matrices: hourly,
            clamp_warnings: manifest.clamp_warnings.clone(),
            skipped_pre_service: manifest.skipped_pre_service,
            self_trips: manifest.self_trips,
        },
        periods: PeriodFlows { matrices: periods },
        weekly,
        manifest,
    })
}
