//! Training-data augmentation and IMU retargeting.
//!
//! Retargeting turns a recording from one sensor into something resembling a
//! lower-rate, noisier sensor: first-order low-pass, linear resampling onto
//! the target grid, then white Gaussian noise.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::config::{check_schema, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::imu::{ImuSample, ImuSequence, TimedPosition};
use crate::quat::Quaternion;
use crate::trial::TrialRecord;

/// Largest tolerated relative deviation of a sample spacing from the nominal period.
pub const MAX_JITTER: f64 = 0.01;

/// Left-multiplies every accelerometer and gyroscope vector by `r`.
pub fn rotate_sample(window: &[ImuSample], r: &Matrix3<f64>) -> Vec<ImuSample> {
    window
        .iter()
        .map(|s| ImuSample::new(s.t, r * s.accel, r * s.gyro))
        .collect()
}

/// Multiplies all six channels by `s`.
pub fn scale_sample(window: &[ImuSample], s: f64) -> Result<Vec<ImuSample>> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("scale factor {s} must be positive")));
    }
    Ok(window
        .iter()
        .map(|x| ImuSample::new(x.t, x.accel * s, x.gyro * s))
        .collect())
}

/// Rotation drawn uniformly over SO(3).
pub fn uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let q = Quaternion::new(v[0], v[1], v[2], v[3]);
        if q.norm() > 1e-6 {
            return q.normalized().to_rotation_matrix();
        }
    }
}

/// Rotation about a uniformly random axis by an angle uniform in `[0, max_angle]`.
pub fn small_rotation<R: Rng + ?Sized>(rng: &mut R, max_angle: f64) -> Matrix3<f64> {
    let axis = loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-6 {
            break v / n;
        }
    };
    let angle = if max_angle > 0.0 {
        rng.sample(Uniform::new_inclusive(0.0, max_angle).expect("valid range"))
    } else {
        0.0
    };
    crate::quat::rotation_matrix_exp(&(axis * angle))
}

fn check_uniform(seq: &ImuSequence) -> Result<()> {
    let period = 1.0 / seq.nominal_rate();
    for (k, w) in seq.samples().windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if ((dt - period) / period).abs() > MAX_JITTER {
            return Err(Error::invalid(format!(
                "sample spacing {dt} s at sample {} deviates more than 1% from the nominal period {period} s",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Causal single-pole low-pass, discretized with the pre-warped bilinear transform.
///
/// Each channel starts in steady state at its first value.
pub fn lowpass_first_order(seq: &ImuSequence, cutoff: f64) -> Result<ImuSequence> {
    let fs = seq.nominal_rate();
    if !(cutoff > 0.0 && cutoff < fs / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff} Hz must lie in (0, {}) for a {fs} Hz sequence",
            fs / 2.0
        )));
    }
    check_uniform(seq)?;
    let k = (PI * cutoff / fs).tan();
    let b = k / (1.0 + k);
    let a1 = (k - 1.0) / (k + 1.0);

    let samples = seq.samples();
    let Some(first) = samples.first() else {
        return Ok(seq.clone());
    };
    let mut x_prev = first.channels();
    let mut y_prev = x_prev;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let x = s.channels();
        let y: [f64; 6] = std::array::from_fn(|i| b * (x[i] + x_prev[i]) - a1 * y_prev[i]);
        out.push(ImuSample::new(
            s.t,
            Vector3::new(y[0], y[1], y[2]),
            Vector3::new(y[3], y[4], y[5]),
        ));
        x_prev = x;
        y_prev = y;
    }
    ImuSequence::new(out, fs)
}

/// Linearly interpolates `seq` onto `t0 + k / rate` for every grid time within its span.
pub fn resample_linear(seq: &ImuSequence, rate: f64) -> Result<ImuSequence> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("target rate {rate} must be positive")));
    }
    let samples = seq.samples();
    if samples.len() < 2 {
        return Err(Error::invalid("resampling needs at least two samples"));
    }
    let t0 = samples[0].t;
    let span = samples[samples.len() - 1].t - t0;
    // tolerate rounding in the recorded timestamps
    let n = (span * rate + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 / rate;
        while j + 2 < samples.len() && samples[j + 1].t <= t {
            j += 1;
        }
        let (a, b) = (&samples[j], &samples[j + 1]);
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(ImuSample::new(
            t,
            a.accel + (b.accel - a.accel) * f,
            a.gyro + (b.gyro - a.gyro) * f,
        ));
    }
    ImuSequence::new(out, rate)
}

/// How to turn a recording into one resembling a different sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetargetSpec {
    pub schema_version: u32,
    pub source_rate: f64,
    pub target_rate: f64,
    /// Low-pass cutoff, Hz.
    pub cutoff: f64,
    /// Accelerometer noise std added per output sample, m/s^2.
    pub accel_noise: f64,
    /// Gyroscope noise std added per output sample, rad/s.
    pub gyro_noise: f64,
    pub seed: u64,
}

impl Default for RetargetSpec {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            source_rate: 200.0,
            target_rate: 125.0,
            cutoff: 40.0,
            accel_noise: 1e-2,
            gyro_noise: 1.74e-3,
            seed: 0,
        }
    }
}

impl RetargetSpec {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "retarget spec")?;
        if !(self.source_rate > 0.0 && self.target_rate > 0.0) {
            return Err(Error::invalid("rates must be positive"));
        }
        if !(self.target_rate < self.source_rate) {
            return Err(Error::invalid(format!(
                "target rate {} Hz must be below the source rate {} Hz",
                self.target_rate, self.source_rate
            )));
        }
        if !(self.cutoff > 0.0 && self.cutoff < self.target_rate / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {} Hz must lie below the target Nyquist frequency {} Hz",
                self.cutoff,
                self.target_rate / 2.0
            )));
        }
        if !(self.accel_noise >= 0.0 && self.gyro_noise >= 0.0) {
            return Err(Error::invalid("noise levels must be non-negative"));
        }
        Ok(())
    }
}

/// Low-pass, resample onto the target grid, then add seeded white noise.
pub fn retarget(seq: &ImuSequence, spec: &RetargetSpec) -> Result<ImuSequence> {
    spec.validate()?;
    let rate = seq.nominal_rate();
    if ((rate - spec.source_rate) / spec.source_rate).abs() > MAX_JITTER {
        return Err(Error::invalid(format!(
            "sequence rate {rate} Hz does not match the spec source rate {} Hz",
            spec.source_rate
        )));
    }
    let filtered = lowpass_first_order(seq, spec.cutoff)?;
    let resampled = resample_linear(&filtered, spec.target_rate)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let an = Normal::new(0.0, spec.accel_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let gn = Normal::new(0.0, spec.gyro_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let noisy = resampled
        .into_samples()
        .into_iter()
        .map(|s| {
            let da = Vector3::from_fn(|_, _| an.sample(&mut rng));
            let dg = Vector3::from_fn(|_, _| gn.sample(&mut rng));
            ImuSample::new(s.t, s.accel + da, s.gyro + dg)
        })
        .collect();
    ImuSequence::new(noisy, spec.target_rate)
}

/// Retargets a trial's IMU and carries its ground truth onto the new sample times.
///
/// Positions are interpolated linearly; a new sample is stationary only when
/// both bracketing source samples are.
pub fn retarget_trial(trial: &TrialRecord, spec: &RetargetSpec) -> Result<TrialRecord> {
    let imu = retarget(&trial.imu, spec)?;
    let src = trial.imu.times();
    let new_times = imu.times();
    let bracket = |t: f64| {
        let hi = src.partition_point(|&x| x < t).min(src.len() - 1);
        let lo = if src[hi] > t { hi.saturating_sub(1) } else { hi };
        (lo, hi)
    };
    let gt_positions = match &trial.gt_positions {
        Some(gt) => {
            let times: Vec<f64> = gt.iter().map(|p| p.t).collect();
            Some(
                new_times
                    .iter()
                    .map(|&t| {
                        crate::eskf::interpolate_position(&times, |i| gt[i].p, t)
                            .map(|p| TimedPosition::new(t, p))
                            .ok_or_else(|| Error::invalid(format!("no ground-truth position at t = {t}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    let gt_zv = trial.gt_zv.as_ref().map(|zv| {
        new_times
            .iter()
            .map(|&t| {
                let (lo, hi) = bracket(t);
                zv[lo] && zv[hi]
            })
            .collect()
    });
    let out = TrialRecord {
        imu,
        gt_positions,
        gt_zv,
        motion: trial.motion,
    };
    out.validate()?;
    Ok(out)
}
