//! Fixed-threshold zero-velocity detectors.
//!
//! All detectors declare a sample stationary when their statistic falls
//! strictly below the threshold. Windowed statistics at step `k` cover samples
//! `k ..= k + N - 1`; the final `N - 1` steps, which have no full window,
//! repeat the last computable decision.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{CsvOut, ImuSample, ImuSequence, TimedPosition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Shoe,
    Ared,
    /// Foot speed from externally tracked positions.
    Speed,
}

impl DetectorKind {
    /// Tie-break order used when two detectors score equally (SHOE first).
    pub const PRIORITY: [DetectorKind; 3] = [DetectorKind::Shoe, DetectorKind::Ared, DetectorKind::Speed];

    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Shoe => "shoe",
            DetectorKind::Ared => "ared",
            DetectorKind::Speed => "speed",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shoe" => Ok(DetectorKind::Shoe),
            "ared" => Ok(DetectorKind::Ared),
            "speed" | "vicon" => Ok(DetectorKind::Speed),
            other => Err(Error::invalid(format!("unknown detector `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorDecision {
    pub statistic: f64,
    pub stationary: bool,
}

fn default_window() -> usize {
    5
}

/// Parameters of the stance-hypothesis (SHOE) test.
///
/// Thresholds are only comparable between runs that share the same variance
/// pair and window length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShoeParams {
    #[serde(default = "default_window")]
    pub window: usize,
    /// Accelerometer variance, (m/s^2)^2.
    pub accel_var: f64,
    /// Gyroscope variance, (rad/s)^2.
    pub gyro_var: f64,
    pub threshold: f64,
    pub gravity: f64,
}

impl Default for ShoeParams {
    fn default() -> Self {
        Self {
            window: 5,
            accel_var: 1e-4,
            gyro_var: 1e-6,
            threshold: 1e7,
            gravity: crate::eskf::DEFAULT_GRAVITY,
        }
    }
}

impl ShoeParams {
    pub fn with_threshold(self, threshold: f64) -> Self {
        Self { threshold, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("SHOE window must be at least one sample"));
        }
        if !(self.accel_var > 0.0 && self.gyro_var > 0.0) {
            return Err(Error::invalid("SHOE variances must be positive"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("SHOE threshold must be positive"));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::invalid("gravity must be positive"));
        }
        Ok(())
    }
}

/// Parameters of the angular-rate energy detector (ARED).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AredParams {
    #[serde(default = "default_window")]
    pub window: usize,
    /// Threshold on the mean squared angular rate, (rad/s)^2.
    pub threshold: f64,
}

impl Default for AredParams {
    fn default() -> Self {
        Self { window: 5, threshold: 0.55 }
    }
}

/// Windowed IMU detector with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ImuDetector {
    Shoe(ShoeParams),
    Ared(AredParams),
}

impl ImuDetector {
    pub fn window(&self) -> usize {
        match self {
            ImuDetector::Shoe(p) => p.window,
            ImuDetector::Ared(p) => p.window,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            ImuDetector::Shoe(p) => p.threshold,
            ImuDetector::Ared(p) => p.threshold,
        }
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        match *self {
            ImuDetector::Shoe(p) => ImuDetector::Shoe(ShoeParams { threshold, ..p }),
            ImuDetector::Ared(p) => ImuDetector::Ared(AredParams { threshold, ..p }),
        }
    }

    pub fn statistic(&self, window: &[ImuSample]) -> Result<f64> {
        match self {
            ImuDetector::Shoe(p) => shoe_statistic(window, p),
            ImuDetector::Ared(_) => ared_statistic(window),
        }
    }
}

/// SHOE test statistic over one window of exactly `params.window` samples.
pub fn shoe_statistic(window: &[ImuSample], params: &ShoeParams) -> Result<f64> {
    if window.len() != params.window || window.is_empty() {
        return Err(Error::invalid(format!(
            "SHOE window holds {} samples, expected {}",
            window.len(),
            params.window
        )));
    }
    let n = window.len() as f64;
    let mean_accel = window.iter().fold(Vector3::zeros(), |acc, s| acc + s.accel) / n;
    let mean_norm = mean_accel.norm();
    if mean_norm < 1e-9 {
        return Err(Error::invalid("mean acceleration vanishes; gravity direction undefined"));
    }
    let gravity_dir = mean_accel * (params.gravity / mean_norm);
    let sum: f64 = window
        .iter()
        .map(|s| (s.accel - gravity_dir).norm_squared() / params.accel_var + s.gyro.norm_squared() / params.gyro_var)
        .sum();
    Ok(sum / n)
}

/// Mean squared angular-rate norm over the window.
pub fn ared_statistic(window: &[ImuSample]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::invalid("ARED window is empty"));
    }
    let sum: f64 = window.iter().map(|s| s.gyro.norm_squared()).sum();
    Ok(sum / window.len() as f64)
}

/// Per-step statistics of `detector` over `seq`, trailing steps padded with the last value.
pub fn statistics(seq: &ImuSequence, detector: &ImuDetector) -> Result<Vec<f64>> {
    let n = detector.window();
    let samples = seq.samples();
    if n == 0 {
        return Err(Error::invalid("detector window must be at least one sample"));
    }
    if samples.len() < n {
        return Err(Error::invalid(format!(
            "sequence of {} samples is shorter than the detector window {n}",
            samples.len()
        )));
    }
    let mut stats = samples
        .windows(n)
        .map(|w| detector.statistic(w))
        .collect::<Result<Vec<f64>>>()?;
    let last = *stats.last().expect("at least one full window");
    stats.resize(samples.len(), last);
    Ok(stats)
}

/// Thresholds a statistic trace: stationary iff `statistic < threshold`.
pub fn threshold_flags(stats: &[f64], threshold: f64) -> Vec<bool> {
    stats.iter().map(|&s| s < threshold).collect()
}

/// Per-step decisions of a windowed IMU detector.
pub fn detect_sequence(seq: &ImuSequence, detector: &ImuDetector) -> Result<Vec<DetectorDecision>> {
    if let ImuDetector::Shoe(p) = detector {
        p.validate()?;
    }
    let threshold = detector.threshold();
    Ok(statistics(seq, detector)?
        .into_iter()
        .map(|statistic| DetectorDecision {
            statistic,
            stationary: statistic < threshold,
        })
        .collect())
}

/// Foot-speed detector over tracked positions (backward differences).
///
/// The first sample copies the decision of the second.
pub fn speed_detect(positions: &[TimedPosition], speed_threshold: f64) -> Result<Vec<bool>> {
    Ok(speed_statistics(positions)?
        .into_iter()
        .map(|v| v < speed_threshold)
        .collect())
}

/// Backward-difference speeds, with the first entry copying the second.
pub fn speed_statistics(positions: &[TimedPosition]) -> Result<Vec<f64>> {
    if positions.len() < 2 {
        return Err(Error::invalid("speed detection needs at least two positions"));
    }
    let mut speeds = Vec::with_capacity(positions.len());
    speeds.push(0.0);
    for (k, w) in positions.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return Err(Error::invalid(format!(
                "position timestamps not strictly increasing at index {}",
                k + 1
            )));
        }
        speeds.push(((w[1].p - w[0].p) / dt).norm());
    }
    speeds[0] = speeds[1];
    Ok(speeds)
}

/// Writes a `t,statistic,flag` trace.
pub fn write_statistic_trace(path: &Path, times: &[f64], decisions: &[DetectorDecision]) -> Result<()> {
    if times.len() != decisions.len() {
        return Err(Error::invalid("trace time and decision counts differ"));
    }
    let mut out = CsvOut::create(path)?;
    out.line("t,statistic,flag")?;
    for (t, d) in times.iter().zip(decisions) {
        out.line(&format!("{},{},{}", t, d.statistic, u8::from(d.stationary)))?;
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eskf::DEFAULT_GRAVITY as G;

    fn s(accel: [f64; 3], gyro: [f64; 3]) -> ImuSample {
        ImuSample::new(0.0, Vector3::from(accel), Vector3::from(gyro))
    }

    #[test]
    fn perfect_stance_scores_zero() {
        let w = vec![s([0.0, 0.0, G], [0.0; 3]); 5];
        assert_eq!(shoe_statistic(&w, &ShoeParams::default()).unwrap(), 0.0);
        assert_eq!(ared_statistic(&w).unwrap(), 0.0);
    }

    #[test]
    fn single_sample_shoe_term() {
        let p = ShoeParams {
            window: 1,
            accel_var: 1.0,
            gyro_var: 1.0,
            threshold: 1.0,
            gravity: G,
        };
        let w = [s([0.0, 0.0, G], [1.0, 0.0, 0.0])];
        assert!((shoe_statistic(&w, &p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ared_mean_of_squared_norms() {
        let w = [s([0.0; 3], [1.0, 0.0, 0.0]), s([0.0; 3], [0.0, 1.0, 0.0])];
        assert_eq!(ared_statistic(&w).unwrap(), 1.0);
    }

    #[test]
    fn shoe_requires_gravity_direction() {
        let p = ShoeParams { window: 2, ..ShoeParams::default() };
        let w = [s([1.0, 0.0, 0.0], [0.0; 3]), s([-1.0, 0.0, 0.0], [0.0; 3])];
        assert!(shoe_statistic(&w, &p).is_err());
        assert!(shoe_statistic(&w[..1], &p).is_err());
    }

    #[test]
    fn speed_detector_cases() {
        let still: Vec<_> = (0..5).map(|k| TimedPosition::new(k as f64 * 0.005, Vector3::zeros())).collect();
        assert!(speed_detect(&still, 1e-6).unwrap().iter().all(|&f| f));

        let moving = [
            TimedPosition::new(0.0, Vector3::zeros()),
            TimedPosition::new(0.005, Vector3::new(0.001, 0.0, 0.0)),
        ];
        assert_eq!(speed_detect(&moving, 0.1).unwrap(), vec![false, false]);

        let dup = [TimedPosition::new(0.0, Vector3::zeros()), TimedPosition::new(0.0, Vector3::zeros())];
        assert!(speed_detect(&dup, 0.1).is_err());
    }

    #[test]
    fn speed_detector_matches_closed_form_crossings() {
        // p(t) = A sin(wt); speed |A w cos(wt)|, threshold at half the peak.
        let (amp, w, dt) = (0.2, 2.0 * std::f64::consts::PI, 0.005);
        let pos: Vec<_> = (0..400)
            .map(|k| {
                let t = k as f64 * dt;
                TimedPosition::new(t, Vector3::new(amp * (w * t).sin(), 0.0, 0.0))
            })
            .collect();
        let gamma = 0.5 * amp * w;
        let flags = speed_detect(&pos, gamma).unwrap();
        let analytic: Vec<bool> = (0..400)
            .map(|k| (amp * w * (w * k as f64 * dt).cos()).abs() < gamma)
            .collect();
        for k in 1..400 {
            if flags[k] != analytic[k] {
                let nearby = (k.saturating_sub(1)..=(k + 1).min(399)).any(|j| analytic[j] == flags[k]);
                assert!(nearby, "mismatch at {k} beyond one sample");
            }
        }
    }

    #[test]
    fn sequence_detection_shape_and_trailing_copy() {
        let samples: Vec<_> = (0..20)
            .map(|k| {
                let gyro = if k < 10 { [0.0; 3] } else { [0.0, 0.0, 10.0] };
                ImuSample::new(k as f64 * 0.005, Vector3::new(0.0, 0.0, G), Vector3::from(gyro))
            })
            .collect();
        let seq = ImuSequence::new(samples, 200.0).unwrap();
        let det = ImuDetector::Shoe(ShoeParams::default());
        let out = detect_sequence(&seq, &det).unwrap();
        assert_eq!(out.len(), 20);
        assert!(out[..6].iter().all(|d| d.stationary));
        assert!(out[6..].iter().all(|d| !d.stationary));
        assert_eq!(out[19], out[15]);

        let stats = statistics(&seq, &det).unwrap();
        let flags = threshold_flags(&stats, det.threshold());
        assert_eq!(flags, out.iter().map(|d| d.stationary).collect::<Vec<_>>());

        let short = seq.slice(0..3);
        assert!(detect_sequence(&short, &det).is_err());
    }

    #[test]
    fn trace_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let d = [DetectorDecision { statistic: 2.5, stationary: true }];
        write_statistic_trace(&path, &[0.0], &d).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "t,statistic,flag\n0,2.5,1\n");
    }
}
