//! IMU data model and the CSV interchange formats.
//!
//! * IMU log: `t,ax,ay,az,wx,wy,wz` (s, m/s^2, rad/s)
//! * positions: `t,px,py,pz` (s, m)
//! * zero-velocity labels: `t,zv` with `zv` in {0, 1}

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum allowed inter-sample gap, in nominal periods.
pub const MAX_GAP_PERIODS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force in the sensor frame, m/s^2.
    pub accel: Vector3<f64>,
    /// Angular rate in the sensor frame, rad/s.
    pub gyro: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, accel: Vector3<f64>, gyro: Vector3<f64>) -> Self {
        Self { t, accel, gyro }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.accel.iter().all(|v| v.is_finite())
            && self.gyro.iter().all(|v| v.is_finite())
    }

    /// The six channels in `ax, ay, az, wx, wy, wz` order.
    pub fn channels(&self) -> [f64; 6] {
        [
            self.accel.x,
            self.accel.y,
            self.accel.z,
            self.gyro.x,
            self.gyro.y,
            self.gyro.z,
        ]
    }
}

/// A validated, time-ordered run of IMU samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSequence {
    samples: Vec<ImuSample>,
    nominal_rate: f64,
}

impl ImuSequence {
    pub fn new(samples: Vec<ImuSample>, nominal_rate: f64) -> Result<Self> {
        if !(nominal_rate > 0.0 && nominal_rate.is_finite()) {
            return Err(Error::invalid(format!("nominal rate {nominal_rate} must be positive")));
        }
        let max_gap = MAX_GAP_PERIODS / nominal_rate;
        for (i, s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("IMU sample {i}")));
            }
            if i > 0 {
                let dt = s.t - samples[i - 1].t;
                if !(dt > 0.0) {
                    return Err(Error::invalid(format!(
                        "timestamps not strictly increasing at sample {i} (t = {})",
                        s.t
                    )));
                }
                if dt > max_gap {
                    return Err(Error::invalid(format!(
                        "gap of {dt} s at sample {i} exceeds {MAX_GAP_PERIODS} nominal periods"
                    )));
                }
            }
        }
        Ok(Self { samples, nominal_rate })
    }

    /// Builds a sequence, estimating the nominal rate from the median sample spacing.
    pub fn with_inferred_rate(samples: Vec<ImuSample>) -> Result<Self> {
        let rate = infer_rate(samples.iter().map(|s| s.t))?;
        Self::new(samples, rate)
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Sub-sequence `range` of the samples (rate preserved).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            samples: self.samples[range].to_vec(),
            nominal_rate: self.nominal_rate,
        }
    }

    pub fn into_samples(self) -> Vec<ImuSample> {
        self.samples
    }

    pub fn from_csv(path: &Path, nominal_rate: Option<f64>) -> Result<Self> {
        let rows = read_numeric_csv(path, &["t", "ax", "ay", "az", "wx", "wy", "wz"])?;
        let samples: Vec<ImuSample> = rows
            .iter()
            .map(|r| {
                ImuSample::new(
                    r[0],
                    Vector3::new(r[1], r[2], r[3]),
                    Vector3::new(r[4], r[5], r[6]),
                )
            })
            .collect();
        match nominal_rate {
            Some(rate) => Self::new(samples, rate),
            None => Self::with_inferred_rate(samples),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path)?;
        out.line("t,ax,ay,az,wx,wy,wz")?;
        for s in &self.samples {
            let [ax, ay, az, wx, wy, wz] = s.channels();
            out.line(&format!("{},{},{},{},{},{},{}", s.t, ax, ay, az, wx, wy, wz))?;
        }
        out.finish()
    }
}

/// Median-spacing rate estimate.
pub fn infer_rate(times: impl Iterator<Item = f64>) -> Result<f64> {
    let t: Vec<f64> = times.collect();
    if t.len() < 2 {
        return Err(Error::invalid("need at least two samples to infer a sample rate"));
    }
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(f64::total_cmp);
    let median = dts[dts.len() / 2];
    if !(median > 0.0) {
        return Err(Error::invalid("timestamps not strictly increasing"));
    }
    Ok(1.0 / median)
}

/// A timestamped position, e.g. a ground-truth fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPosition {
    pub t: f64,
    pub p: Vector3<f64>,
}

impl TimedPosition {
    pub fn new(t: f64, p: Vector3<f64>) -> Self {
        Self { t, p }
    }
}

pub fn read_positions_csv(path: &Path) -> Result<Vec<TimedPosition>> {
    let rows = read_numeric_csv(path, &["t", "px", "py", "pz"])?;
    Ok(rows
        .iter()
        .map(|r| TimedPosition::new(r[0], Vector3::new(r[1], r[2], r[3])))
        .collect())
}

pub fn write_positions_csv(path: &Path, points: &[TimedPosition]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.line("t,px,py,pz")?;
    for tp in points {
        out.line(&format!("{},{},{},{}", tp.t, tp.p.x, tp.p.y, tp.p.z))?;
    }
    out.finish()
}

pub fn read_labels_csv(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let rows = read_numeric_csv(path, &["t", "zv"])?;
    let mut times = Vec::with_capacity(rows.len());
    let mut flags = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let flag = match r[1] {
            0.0 => false,
            1.0 => true,
            v => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    msg: format!("zv must be 0 or 1, got {v}"),
                })
            }
        };
        times.push(r[0]);
        flags.push(flag);
    }
    Ok((times, flags))
}

pub fn write_labels_csv(path: &Path, times: &[f64], flags: &[bool]) -> Result<()> {
    if times.len() != flags.len() {
        return Err(Error::invalid("label and time counts differ"));
    }
    let mut out = CsvOut::create(path)?;
    out.line("t,zv")?;
    for (t, f) in times.iter().zip(flags) {
        out.line(&format!("{},{}", t, u8::from(*f)))?;
    }
    out.finish()
}

/// Reads a headed numeric CSV, requiring the named columns (extra columns are ignored).
///
/// Returned rows hold the required columns in the requested order.
pub(crate) fn read_numeric_csv(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| parse_err(1, format!("missing column `{c}` (expected {})", columns.join(","))))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = index
            .iter()
            .zip(columns)
            .map(|(&i, name)| {
                let field = record.get(i).unwrap_or("");
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(line, format!("column `{name}`: cannot parse `{field}` as a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub(crate) struct CsvOut {
    path: std::path::PathBuf,
    writer: std::io::BufWriter<File>,
}

impl CsvOut {
    pub(crate) fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: std::io::BufWriter::new(file),
        })
    }

    pub(crate) fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.writer, "{s}").map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64) -> ImuSample {
        ImuSample::new(t, Vector3::new(0.0, 0.0, 9.8), Vector3::zeros())
    }

    #[test]
    fn rejects_non_monotonic_timestamps() {
        let s = vec![sample(0.0), sample(0.01), sample(0.005)];
        assert!(ImuSequence::new(s, 200.0).is_err());
        let dup = vec![sample(0.0), sample(0.0)];
        assert!(ImuSequence::new(dup, 200.0).is_err());
    }

    #[test]
    fn rejects_large_gaps_and_nan() {
        let s = vec![sample(0.0), sample(0.005), sample(0.025)];
        assert!(ImuSequence::new(s, 200.0).is_err());
        let mut bad = sample(0.005);
        bad.gyro.x = f64::NAN;
        assert!(ImuSequence::new(vec![sample(0.0), bad], 200.0).is_err());
    }

    #[test]
    fn csv_round_trip_and_rate_inference() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        let samples: Vec<_> = (0..10).map(|k| sample(k as f64 * 0.005)).collect();
        ImuSequence::new(samples.clone(), 200.0).unwrap().write_csv(&path).unwrap();
        let back = ImuSequence::from_csv(&path, None).unwrap();
        assert!((back.nominal_rate() - 200.0).abs() < 1e-6);
        assert_eq!(back.samples(), &samples[..]);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        std::fs::write(&path, "t,ax,ay,az,wx,wy,wz\n0,0,0,9.8,0,0,0\n0.005,0,zz,9.8,0,0,0\n").unwrap();
        match ImuSequence::from_csv(&path, Some(200.0)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "t,ax,ay\n0,0,0\n").unwrap();
        assert!(matches!(ImuSequence::from_csv(&path, Some(200.0)), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn labels_must_be_binary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zv.csv");
        std::fs::write(&path, "t,zv\n0,1\n0.005,2\n").unwrap();
        assert!(matches!(read_labels_csv(&path), Err(Error::Parse { line: 3, .. })));
    }
}
