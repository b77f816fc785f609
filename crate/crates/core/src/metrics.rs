//! Trajectory and classification metrics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eskf::Trajectory;
use crate::imu::TimedPosition;

/// Root-mean-square 3-D position error over the ground-truth points, with the
/// estimate linearly interpolated to each ground-truth timestamp.
pub fn armse(est: &Trajectory, gt: &[TimedPosition]) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::invalid("no ground-truth points to evaluate against"));
    }
    let mut sum = 0.0;
    for g in gt {
        let p = est.position_at(g.t).ok_or_else(|| {
            Error::invalid(format!("ground-truth time {} outside the estimated trajectory span", g.t))
        })?;
        sum += (p - g.p).norm_squared();
    }
    Ok((sum / gt.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopClosure {
    pub err_3d: f64,
    pub err_vertical: f64,
}

/// End-to-start distance of a trajectory whose true start and end coincide.
pub fn loop_closure(est: &Trajectory) -> Result<LoopClosure> {
    let (first, last) = match (est.states.first(), est.states.last()) {
        (Some(a), Some(b)) => (a.position, b.position),
        _ => return Err(Error::invalid("empty trajectory")),
    };
    Ok(closure_of(last - first))
}

/// Loop-closure error relative to the true start-to-end displacement.
///
/// Equals [`loop_closure`] whenever the ground truth returns to its start.
pub fn loop_closure_relative(est: &Trajectory, gt: &[TimedPosition]) -> Result<LoopClosure> {
    let (first, last) = match (est.states.first(), est.states.last()) {
        (Some(a), Some(b)) => (a.position, b.position),
        _ => return Err(Error::invalid("empty trajectory")),
    };
    let (g0, g1) = match (gt.first(), gt.last()) {
        (Some(a), Some(b)) => (a.p, b.p),
        _ => return Err(Error::invalid("no ground-truth points")),
    };
    Ok(closure_of((last - first) - (g1 - g0)))
}

fn closure_of(d: Vector3<f64>) -> LoopClosure {
    LoopClosure {
        err_3d: d.norm(),
        err_vertical: d.z.abs(),
    }
}

/// Height error at the time the walker was furthest from the start.
pub fn furthest_point_vertical(est: &Trajectory, known_height: f64, t_furthest: f64) -> Result<f64> {
    let p = est
        .position_at(t_furthest)
        .ok_or_else(|| Error::invalid(format!("time {t_furthest} outside the trajectory span")))?;
    Ok((p.z - known_height).abs())
}

/// Ground-truth point furthest (3-D) from the first one.
pub fn furthest_point(gt: &[TimedPosition]) -> Option<TimedPosition> {
    let start = gt.first()?.p;
    gt.iter()
        .copied()
        .max_by(|a, b| (a.p - start).norm().total_cmp(&(b.p - start).norm()))
}

pub fn path_length(gt: &[TimedPosition]) -> f64 {
    gt.windows(2).map(|w| (w[1].p - w[0].p).norm()).sum()
}

/// Evaluation summary of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub armse: f64,
    pub loop_closure_3d: f64,
    pub loop_closure_vertical: f64,
    pub furthest_point_vertical: f64,
    pub path_length: f64,
}

pub fn evaluate(est: &Trajectory, gt: &[TimedPosition]) -> Result<EvaluationReport> {
    let closure = loop_closure_relative(est, gt)?;
    let far = furthest_point(gt).ok_or_else(|| Error::invalid("no ground-truth points"))?;
    Ok(EvaluationReport {
        schema_version: crate::config::SCHEMA_VERSION,
        armse: armse(est, gt)?,
        loop_closure_3d: closure.err_3d,
        loop_closure_vertical: closure.err_vertical,
        furthest_point_vertical: furthest_point_vertical(est, far.p.z, far.t)?,
        path_length: path_length(gt),
    })
}

/// Binary classification scores with "stationary" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

pub fn flag_scores(predicted: &[bool], truth: &[bool]) -> Result<FlagScores> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid("flag sequences must be non-empty and of equal length"));
    }
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        correct += usize::from(p == t);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FlagScores {
        precision,
        recall,
        f1,
        accuracy: correct as f64 / truth.len() as f64,
    })
}
