//! Per-trial threshold optimization and zero-velocity label generation.
//!
//! A candidate threshold is scored by running the full filter with the
//! detector's flags and measuring ARMSE against the trial's ground-truth
//! positions. Divergent runs score `+inf` instead of aborting the sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{check_schema, SCHEMA_VERSION};
use crate::detectors::{self, AredParams, DetectorKind, ImuDetector, ShoeParams};
use crate::error::{Error, Result};
use crate::eskf::{interpolate_position, run_filter, FilterConfig};
use crate::imu::TimedPosition;
use crate::metrics::armse;
use crate::trial::TrialRecord;

/// Logarithmic threshold search: a coarse grid over `[lo, hi]` followed by
/// one refinement grid between the neighbours of the coarse argmin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchGrid {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_refine")]
    pub refine_points: usize,
}

fn default_points() -> usize {
    50
}

fn default_refine() -> usize {
    10
}

impl SearchGrid {
    /// `points` log-spaced values spanning four decades centred (geometrically) on `centre`.
    pub fn four_decades(centre: f64) -> Self {
        Self {
            lo: centre / 100.0,
            hi: centre * 100.0,
            points: default_points(),
            refine_points: default_refine(),
        }
    }

    pub fn default_for(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::Shoe => Self::four_decades(1e7),
            // (rad/s)^2
            DetectorKind::Ared => Self::four_decades(0.1),
            // m/s
            DetectorKind::Speed => Self::four_decades(0.1),
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) {
            return Err(Error::invalid(format!(
                "search grid [{}, {}] must be positive and ordered",
                self.lo, self.hi
            )));
        }
        if self.points < 3 {
            return Err(Error::invalid("search grid needs at least three points"));
        }
        Ok(log_grid(self.lo, self.hi, self.points))
    }
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Detector parameters plus the search grid of each detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub schema_version: u32,
    pub shoe: ShoeParams,
    pub ared: AredParams,
    pub shoe_grid: SearchGrid,
    pub ared_grid: SearchGrid,
    pub speed_grid: SearchGrid,
    pub filter: FilterConfig,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            shoe: ShoeParams::default(),
            ared: AredParams::default(),
            shoe_grid: SearchGrid::default_for(DetectorKind::Shoe),
            ared_grid: SearchGrid::default_for(DetectorKind::Ared),
            speed_grid: SearchGrid::default_for(DetectorKind::Speed),
            filter: FilterConfig::default(),
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "label config")?;
        self.shoe.validate()?;
        self.filter.validate()
    }

    pub fn grid(&self, kind: DetectorKind) -> &SearchGrid {
        match kind {
            DetectorKind::Shoe => &self.shoe_grid,
            DetectorKind::Ared => &self.ared_grid,
            DetectorKind::Speed => &self.speed_grid,
        }
    }
}

/// Per-sample detector statistic of `kind` over the trial.
///
/// The speed detector reads ground-truth positions, interpolated to IMU times
/// when they are not sampled one-to-one.
pub fn detector_statistics(trial: &TrialRecord, kind: DetectorKind, cfg: &LabelConfig) -> Result<Vec<f64>> {
    match kind {
        DetectorKind::Shoe => detectors::statistics(&trial.imu, &ImuDetector::Shoe(cfg.shoe)),
        DetectorKind::Ared => detectors::statistics(&trial.imu, &ImuDetector::Ared(cfg.ared)),
        DetectorKind::Speed => detectors::speed_statistics(&positions_at_imu_times(trial)?),
    }
}

fn positions_at_imu_times(trial: &TrialRecord) -> Result<Vec<TimedPosition>> {
    let gt = trial.require_positions()?;
    let times = trial.imu.times();
    if gt.len() == times.len() && gt.iter().zip(&times).all(|(g, &t)| g.t == t) {
        return Ok(gt.to_vec());
    }
    let gt_times: Vec<f64> = gt.iter().map(|g| g.t).collect();
    times
        .iter()
        .map(|&t| {
            interpolate_position(&gt_times, |i| gt[i].p, t)
                .map(|p| TimedPosition::new(t, p))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "IMU time {t} outside the ground-truth span; the speed detector needs positions throughout"
                    ))
                })
        })
        .collect()
}

/// Filter ARMSE for one flag set, `+inf` if the run diverges.
pub fn score_flags(trial: &TrialRecord, flags: &[bool], cfg: &FilterConfig) -> Result<f64> {
    let gt = trial.require_positions()?;
    match run_filter(&trial.imu, flags, cfg) {
        Ok(traj) => Ok(armse(&traj, gt)?),
        Err(Error::Diverged(_) | Error::NonFinite(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub threshold: f64,
    pub armse: f64,
}

/// Grid argmin of ARMSE over thresholds applied to a fixed statistic trace.
///
/// Ties go to the smaller threshold. Thresholds producing the same flags as a
/// previously scored one reuse its score.
pub fn optimize_on_statistics(
    trial: &TrialRecord,
    stats: &[f64],
    grid: &[f64],
    cfg: &FilterConfig,
) -> Result<ThresholdScore> {
    if grid.len() < 3 {
        return Err(Error::invalid("threshold grid needs at least three points"));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("threshold grid must be finite and sorted ascending"));
    }
    let mut best: Option<ThresholdScore> = None;
    let mut divergent = Vec::new();
    let mut last: Option<(Vec<bool>, f64)> = None;
    for &gamma in grid {
        let flags = detectors::threshold_flags(stats, gamma);
        let score = match &last {
            Some((f, s)) if *f == flags => *s,
            _ => score_flags(trial, &flags, cfg)?,
        };
        if !score.is_finite() {
            divergent.push(gamma);
        } else if best.as_ref().is_none_or(|b| score < b.armse) {
            best = Some(ThresholdScore { threshold: gamma, armse: score });
        }
        last = Some((flags, score));
    }
    best.ok_or_else(|| Error::Diverged(format!("filter diverged for every threshold: {divergent:?}")))
}

/// Grid argmin of the filter ARMSE over `grid` for one detector.
pub fn optimize_threshold(
    trial: &TrialRecord,
    kind: DetectorKind,
    grid: &[f64],
    cfg: &LabelConfig,
) -> Result<ThresholdScore> {
    let stats = detector_statistics(trial, kind, cfg)?;
    optimize_on_statistics(trial, &stats, grid, &cfg.filter)
}

/// Coarse log grid plus one refinement pass around the coarse argmin.
pub fn line_search(trial: &TrialRecord, kind: DetectorKind, grid: &SearchGrid, cfg: &LabelConfig) -> Result<ThresholdScore> {
    let stats = detector_statistics(trial, kind, cfg)?;
    let coarse = grid.values()?;
    let best = optimize_on_statistics(trial, &stats, &coarse, &cfg.filter)?;
    if grid.refine_points < 3 {
        return Ok(best);
    }
    let i = coarse
        .iter()
        .position(|&g| g == best.threshold)
        .expect("argmin comes from the grid");
    let lo = coarse[i.saturating_sub(1)];
    let hi = coarse[(i + 1).min(coarse.len() - 1)];
    let fine = optimize_on_statistics(trial, &stats, &log_grid(lo, hi, grid.refine_points), &cfg.filter)?;
    let better = fine.armse < best.armse || (fine.armse == best.armse && fine.threshold < best.threshold);
    Ok(if better { fine } else { best })
}

/// Outcome of labelling one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelResult {
    pub winning_detector: DetectorKind,
    pub threshold: f64,
    pub armse: f64,
    pub labels: Vec<bool>,
    /// Optimized score of every detector tried, in priority order.
    pub scores: Vec<(DetectorKind, ThresholdScore)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorReport {
    pub detector: DetectorKind,
    pub threshold: f64,
    pub armse: f64,
}

/// JSON form of a [`LabelResult`] without the per-sample labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelReport {
    pub schema_version: u32,
    pub winning_detector: DetectorKind,
    pub threshold: f64,
    pub armse: f64,
    pub stationary_fraction: f64,
    pub detectors: Vec<DetectorReport>,
}

impl LabelResult {
    pub fn report(&self) -> LabelReport {
        let n = self.labels.len().max(1) as f64;
        LabelReport {
            schema_version: SCHEMA_VERSION,
            winning_detector: self.winning_detector,
            threshold: self.threshold,
            armse: self.armse,
            stationary_fraction: self.labels.iter().filter(|&&z| z).count() as f64 / n,
            detectors: self
                .scores
                .iter()
                .map(|(k, s)| DetectorReport {
                    detector: *k,
                    threshold: s.threshold,
                    armse: s.armse,
                })
                .collect(),
        }
    }

    /// Writes `report.json` and `labels.csv` into `dir`.
    pub fn save(&self, dir: &Path, times: &[f64]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        crate::config::write_json(&dir.join("report.json"), &self.report())?;
        crate::imu::write_labels_csv(&dir.join("labels.csv"), times, &self.labels)
    }
}

/// Optimizes every detector in `set` and keeps the one with the lowest ARMSE.
///
/// Equal scores are resolved by [`DetectorKind::PRIORITY`]. The labels are
/// exactly the winner's flags at its optimized threshold.
pub fn label_trial(trial: &TrialRecord, set: &[DetectorKind], cfg: &LabelConfig) -> Result<LabelResult> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::invalid("no detectors to label with"));
    }
    trial.require_positions()?;
    let mut scores = Vec::new();
    for kind in DetectorKind::PRIORITY.into_iter().filter(|k| set.contains(k)) {
        let score = line_search(trial, kind, cfg.grid(kind), cfg)?;
        log::info!("{kind}: threshold {:.4e}, ARMSE {:.4} m", score.threshold, score.armse);
        scores.push((kind, score));
    }
    let (winner, best) = scores
        .iter()
        .fold(None::<&(DetectorKind, ThresholdScore)>, |acc, s| match acc {
            Some(a) if a.1.armse <= s.1.armse => Some(a),
            _ => Some(s),
        })
        .expect("at least one detector")
        .clone();
    let stats = detector_statistics(trial, winner, cfg)?;
    Ok(LabelResult {
        winning_detector: winner,
        threshold: best.threshold,
        armse: best.armse,
        labels: detectors::threshold_flags(&stats, best.threshold),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, GaitProfile};

    fn walk() -> TrialRecord {
        simulate(&GaitProfile::walk(), 12.0).unwrap()
    }

    #[test]
    fn log_grid_endpoints_and_spacing() {
        let g = log_grid(1e5, 1e9, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 1e5);
        assert_eq!(g[49], 1e9);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_grid_returns_its_value() {
        let trial = walk();
        let cfg = LabelConfig::default();
        let s = optimize_threshold(&trial, DetectorKind::Shoe, &[3e6; 3], &cfg).unwrap();
        assert_eq!(s.threshold, 3e6);
    }

    #[test]
    fn grid_preconditions() {
        let trial = walk();
        let cfg = LabelConfig::default();
        assert!(optimize_threshold(&trial, DetectorKind::Shoe, &[1.0, 2.0], &cfg).is_err());
        assert!(optimize_threshold(&trial, DetectorKind::Shoe, &[3.0, 2.0, 4.0], &cfg).is_err());
        let mut bare = trial.clone();
        bare.gt_positions = None;
        assert!(optimize_threshold(&bare, DetectorKind::Shoe, &[1.0, 2.0, 3.0], &cfg).is_err());
    }

    #[test]
    fn argmin_is_no_worse_than_any_grid_point() {
        let trial = walk();
        let cfg = LabelConfig::default();
        let grid = log_grid(1e5, 1e9, 9);
        let best = optimize_threshold(&trial, DetectorKind::Shoe, &grid, &cfg).unwrap();
        let stats = detector_statistics(&trial, DetectorKind::Shoe, &cfg).unwrap();
        for &g in &grid {
            let s = score_flags(&trial, &detectors::threshold_flags(&stats, g), &cfg.filter).unwrap();
            assert!(best.armse <= s);
        }
    }

    #[test]
    fn all_divergent_runs_are_an_error() {
        let trial = walk();
        let cfg = LabelConfig::default();
        let stats = vec![f64::NAN; trial.imu.len()];
        // NaN statistics never flag, but the run stays finite; force divergence instead
        let mut bad = trial.clone();
        let mut samples = bad.imu.clone().into_samples();
        samples[10].accel.x = 1e200;
        bad.imu = crate::imu::ImuSequence::new(samples, 200.0).unwrap();
        let err = optimize_on_statistics(&bad, &stats, &[1.0, 2.0, 3.0], &cfg.filter).unwrap_err();
        assert!(matches!(err, Error::Diverged(_)), "{err}");
    }

    #[test]
    fn single_detector_set_wins_by_construction() {
        let trial = walk();
        let cfg = LabelConfig {
            shoe_grid: SearchGrid {
                points: 9,
                refine_points: 0,
                ..SearchGrid::default_for(DetectorKind::Shoe)
            },
            ..LabelConfig::default()
        };
        let r = label_trial(&trial, &[DetectorKind::Shoe], &cfg).unwrap();
        assert_eq!(r.winning_detector, DetectorKind::Shoe);
        assert_eq!(r.labels.len(), trial.imu.len());
        let stats = detector_statistics(&trial, DetectorKind::Shoe, &cfg).unwrap();
        assert_eq!(r.labels, detectors::threshold_flags(&stats, r.threshold));
        assert!(r.armse >= 0.0);
    }

    #[test]
    fn tie_goes_to_shoe() {
        // ARED with a huge threshold and SHOE with a huge threshold both flag everything.
        let trial = walk();
        let grid = SearchGrid {
            lo: 1e30,
            hi: 1e31,
            points: 3,
            refine_points: 0,
        };
        let cfg = LabelConfig {
            shoe_grid: grid,
            ared_grid: grid,
            ..LabelConfig::default()
        };
        let r = label_trial(&trial, &[DetectorKind::Ared, DetectorKind::Shoe], &cfg).unwrap();
        assert_eq!(r.scores[0].1.armse, r.scores[1].1.armse);
        assert_eq!(r.winning_detector, DetectorKind::Shoe);
    }

    #[test]
    fn report_round_trips_through_json() {
        let r = LabelResult {
            winning_detector: DetectorKind::Ared,
            threshold: 0.3,
            armse: 0.01,
            labels: vec![true, false, true, true],
            scores: vec![(DetectorKind::Ared, ThresholdScore { threshold: 0.3, armse: 0.01 })],
        };
        let json = serde_json::to_string(&r.report()).unwrap();
        let back: LabelReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r.report());
        assert_eq!(back.stationary_fraction, 0.75);
    }
}
