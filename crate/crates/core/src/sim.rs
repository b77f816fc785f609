//! Deterministic synthetic gait generator.
//!
//! The foot alternates between stance (exactly still) and swing. A swing
//! moves the foot along the chord between footfalls with a septic progress
//! profile, adds a C3 clearance bump vertically, pitches the foot with a
//! zero-mean C3 profile and turns the heading smoothly. IMU outputs are the
//! analytic specific force and body rate of that motion, optionally with
//! white Gaussian noise.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{check_schema, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::eskf::DEFAULT_GRAVITY;
use crate::imu::{ImuSample, ImuSequence, TimedPosition};
use crate::trial::{MotionClass, TrialRecord};

/// Foot speed below which a sample counts as stationary.
pub const STATIONARY_SPEED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Walk,
    Run,
    StairUp,
    StairDown,
    Stationary,
}

impl Motion {
    pub fn class(&self) -> Option<MotionClass> {
        match self {
            Motion::Walk => Some(MotionClass::Walk),
            Motion::Run => Some(MotionClass::Run),
            Motion::StairUp | Motion::StairDown => Some(MotionClass::Stair),
            Motion::Stationary => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathShape {
    /// Every stride keeps the initial heading.
    #[default]
    Straight,
    /// Heading turns by a constant amount per stride so the path closes on itself.
    Loop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitProfile {
    pub schema_version: u32,
    pub motion: Motion,
    /// Horizontal footfall-to-footfall distance, m.
    pub stride_length: f64,
    /// Stance plus swing duration, s.
    pub stride_period: f64,
    /// Fraction of each stride the foot is stationary.
    pub stance_fraction: f64,
    /// Height gained per stride (negative descends), m.
    pub step_rise: f64,
    /// Peak foot clearance during swing, m.
    pub swing_height: f64,
    /// Peak foot pitch during swing, rad.
    pub pitch_amplitude: f64,
    pub imu_rate: f64,
    /// Accelerometer white noise std per sample, m/s^2.
    pub accel_noise: f64,
    /// Gyroscope white noise std per sample, rad/s.
    pub gyro_noise: f64,
    pub seed: u64,
    /// Standing time before the first stride, s.
    pub initial_rest: f64,
    pub path: PathShape,
    pub gravity: f64,
}

impl GaitProfile {
    fn base(motion: Motion) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            motion,
            stride_length: 0.7,
            stride_period: 1.1,
            stance_fraction: 0.45,
            step_rise: 0.0,
            swing_height: 0.08,
            pitch_amplitude: 0.3,
            imu_rate: 200.0,
            accel_noise: 0.0,
            gyro_noise: 0.0,
            seed: 0,
            initial_rest: 1.0,
            path: PathShape::Straight,
            gravity: DEFAULT_GRAVITY,
        }
    }

    pub fn walk() -> Self {
        Self::base(Motion::Walk)
    }

    pub fn run() -> Self {
        Self {
            stride_length: 1.2,
            stride_period: 0.7,
            stance_fraction: 0.30,
            swing_height: 0.15,
            pitch_amplitude: 0.6,
            ..Self::base(Motion::Run)
        }
    }

    /// One 17.1 cm step per stride.
    pub fn stair_up() -> Self {
        Self {
            stride_length: 0.28,
            stride_period: 1.2,
            stance_fraction: 0.5,
            step_rise: 0.171,
            swing_height: 0.06,
            pitch_amplitude: 0.2,
            ..Self::base(Motion::StairUp)
        }
    }

    pub fn stair_down() -> Self {
        Self {
            step_rise: -0.171,
            motion: Motion::StairDown,
            ..Self::stair_up()
        }
    }

    pub fn stationary() -> Self {
        Self::base(Motion::Stationary)
    }

    pub fn preset(motion: Motion) -> Self {
        match motion {
            Motion::Walk => Self::walk(),
            Motion::Run => Self::run(),
            Motion::StairUp => Self::stair_up(),
            Motion::StairDown => Self::stair_down(),
            Motion::Stationary => Self::stationary(),
        }
    }

    pub fn with_noise(self, accel_noise: f64, gyro_noise: f64, seed: u64) -> Self {
        Self {
            accel_noise,
            gyro_noise,
            seed,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "gait profile")?;
        if !(self.stance_fraction > 0.1 && self.stance_fraction < 0.9) {
            return Err(Error::invalid(format!(
                "stance fraction {} outside (0.1, 0.9)",
                self.stance_fraction
            )));
        }
        if !(self.imu_rate > 0.0 && self.stride_period > 0.0 && self.gravity > 0.0) {
            return Err(Error::invalid("rates, stride period and gravity must be positive"));
        }
        if self.accel_noise < 0.0 || self.gyro_noise < 0.0 || self.initial_rest < 0.0 {
            return Err(Error::invalid("noise levels and rest time must be non-negative"));
        }
        Ok(())
    }

    fn swing_duration(&self) -> f64 {
        (1.0 - self.stance_fraction) * self.stride_period
    }

    fn stance_duration(&self) -> f64 {
        self.stance_fraction * self.stride_period
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            imu_rate: self.imu_rate,
            accel_noise: self.accel_noise,
            gyro_noise: self.gyro_noise,
            seed: self.seed,
            initial_rest: self.initial_rest,
            gravity: self.gravity,
        }
    }
}

/// Sampling and noise settings shared by every segment of a composed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub imu_rate: f64,
    pub accel_noise: f64,
    pub gyro_noise: f64,
    pub seed: u64,
    pub initial_rest: f64,
    pub gravity: f64,
}

/// `strides` consecutive strides of one gait, turning by `turn` radians in total.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub profile: GaitProfile,
    pub strides: usize,
    pub turn: f64,
}

impl Segment {
    pub fn new(profile: GaitProfile, strides: usize, turn: f64) -> Self {
        Self { profile, strides, turn }
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Rest {
        end: f64,
        position: Vector3<f64>,
        yaw: f64,
    },
    Swing {
        start: f64,
        end: f64,
        from: Vector3<f64>,
        to: Vector3<f64>,
        yaw0: f64,
        turn: f64,
        height: f64,
        pitch: f64,
    },
}

impl Phase {
    fn end(&self) -> f64 {
        match self {
            Phase::Rest { end, .. } | Phase::Swing { end, .. } => *end,
        }
    }
}

/// Analytic foot kinematics at one instant.
#[derive(Debug, Clone, Copy)]
pub struct FootKinematics {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Sensor-to-navigation rotation.
    pub attitude: Matrix3<f64>,
    /// Body-frame angular rate.
    pub body_rate: Vector3<f64>,
}

// Septic progress s(u) = 35u^4 - 84u^5 + 70u^6 - 20u^7: velocity, acceleration
// and jerk all vanish at both ends, so stance-to-swing transitions are C^3.
fn progress(u: f64) -> (f64, f64, f64) {
    let (a, b) = (u, 1.0 - u);
    (
        u.powi(4) * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u))),
        140.0 * a.powi(3) * b.powi(3),
        420.0 * a * a * b * b * (1.0 - 2.0 * u),
    )
}

// Clearance bump b(u) = 256 u^4 (1-u)^4, peak 1 at u = 1/2.
fn bump(u: f64) -> (f64, f64, f64) {
    let (a, b) = (u, 1.0 - u);
    let m = 1.0 - 2.0 * u;
    (
        256.0 * a.powi(4) * b.powi(4),
        1024.0 * a.powi(3) * b.powi(3) * m,
        1024.0 * a * a * b * b * (3.0 * m * m - 2.0 * a * b),
    )
}

// Pitch wave u^4 (1-u)^4 P(u), P quintic, scaled to unit peak. P is chosen so the
// wave has zero mean and its rate has zero zeroth and first moments against both
// the progress and bump accelerations; the half-step attitude lag of a
// first-order strapdown integrator then leaves no O(dt) position error.
fn pitch_wave(u: f64) -> (f64, f64, f64) {
    // ascending coefficients of the quintic P
    const P: [f64; 6] = [-21.0 / 1292.0, 70.0 / 323.0, -20.0 / 19.0, 45.0 / 19.0, -2.5, 1.0];
    // |u^4 (1-u)^4 P(u)| at u = 0.41770152910742533
    const PEAK: f64 = 5.925_254_778_997_929e-7;
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for &c in P.iter().rev() {
        ddp = ddp * u + dp * 2.0;
        dp = dp * u + p;
        p = p * u + c;
    }
    let q = u * (1.0 - u);
    let dq = 1.0 - 2.0 * u;
    let e = q.powi(4);
    let de = 4.0 * q.powi(3) * dq;
    let dde = 12.0 * q * q * dq * dq - 8.0 * q.powi(3);
    let w = e * p;
    let dw = de * p + e * dp;
    let ddw = dde * p + 2.0 * de * dp + e * ddp;
    (w / PEAK, dw / PEAK, ddw / PEAK)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Piecewise analytic foot motion.
#[derive(Debug, Clone)]
pub struct FootPath {
    phases: Vec<Phase>,
}

impl FootPath {
    pub fn build(segments: &[Segment], initial_rest: f64, total_duration: Option<f64>) -> Result<Self> {
        let mut phases = Vec::new();
        let mut t = 0.0;
        let mut position = Vector3::zeros();
        let mut yaw = 0.0_f64;
        if initial_rest > 0.0 {
            t = initial_rest;
            phases.push(Phase::Rest { end: t, position, yaw });
        }
        for seg in segments {
            seg.profile.validate()?;
            if seg.profile.motion == Motion::Stationary || seg.strides == 0 {
                let end = t + seg.strides as f64 * seg.profile.stride_period;
                if end > t {
                    phases.push(Phase::Rest { end, position, yaw });
                    t = end;
                }
                continue;
            }
            let turn = seg.turn / seg.strides as f64;
            for _ in 0..seg.strides {
                let heading = yaw + 0.5 * turn;
                let to = position
                    + Vector3::new(
                        seg.profile.stride_length * heading.cos(),
                        seg.profile.stride_length * heading.sin(),
                        seg.profile.step_rise,
                    );
                let swing_end = t + seg.profile.swing_duration();
                phases.push(Phase::Swing {
                    start: t,
                    end: swing_end,
                    from: position,
                    to,
                    yaw0: yaw,
                    turn,
                    height: seg.profile.swing_height,
                    pitch: seg.profile.pitch_amplitude,
                });
                position = to;
                yaw += turn;
                t = swing_end + seg.profile.stance_duration();
                phases.push(Phase::Rest { end: t, position, yaw });
            }
        }
        if let Some(total) = total_duration {
            if total > t {
                phases.push(Phase::Rest { end: total, position, yaw });
            }
        }
        if phases.is_empty() {
            return Err(Error::invalid("simulated trial has zero duration"));
        }
        Ok(Self { phases })
    }

    pub fn duration(&self) -> f64 {
        self.phases.last().map_or(0.0, Phase::end)
    }

    pub fn at(&self, t: f64) -> FootKinematics {
        let idx = self.phases.partition_point(|p| p.end() < t).min(self.phases.len() - 1);
        match self.phases[idx] {
            Phase::Rest { position, yaw, .. } => FootKinematics {
                position,
                velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
                attitude: rot_z(yaw),
                body_rate: Vector3::zeros(),
            },
            Phase::Swing {
                start,
                end,
                from,
                to,
                yaw0,
                turn,
                height,
                pitch,
            } => {
                let dur = end - start;
                let u = ((t - start) / dur).clamp(0.0, 1.0);
                let (s, ds, dds) = progress(u);
                let (b, db, ddb) = bump(u);
                let (w, dw, _) = pitch_wave(u);
                let chord = to - from;
                let up = Vector3::z();
                let position = from + chord * s + up * (height * b);
                let velocity = (chord * ds + up * (height * db)) / dur;
                let acceleration = (chord * dds + up * (height * ddb)) / (dur * dur);
                let yaw = yaw0 + turn * s;
                let yaw_rate = turn * ds / dur;
                let theta = pitch * w;
                let theta_rate = pitch * dw / dur;
                let ry = rot_y(theta);
                let body_rate = ry.transpose() * Vector3::new(0.0, 0.0, yaw_rate) + Vector3::new(0.0, theta_rate, 0.0);
                FootKinematics {
                    position,
                    velocity,
                    acceleration,
                    attitude: rot_z(yaw) * ry,
                    body_rate,
                }
            }
        }
    }
}

/// Samples a foot path into a trial with exact ground truth.
pub fn sample_path(path: &FootPath, cfg: &SimConfig, motion: Option<MotionClass>) -> Result<TrialRecord> {
    if !(cfg.imu_rate > 0.0) {
        return Err(Error::invalid("IMU rate must be positive"));
    }
    let n = (path.duration() * cfg.imu_rate).round() as usize;
    if n < 2 {
        return Err(Error::invalid("simulated trial shorter than two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let accel_noise = Normal::new(0.0, cfg.accel_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let gyro_noise = Normal::new(0.0, cfg.gyro_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let gravity = Vector3::new(0.0, 0.0, cfg.gravity);

    let mut samples = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    let mut zv = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / cfg.imu_rate;
        let kin = path.at(t);
        if kin.body_rate.norm() / cfg.imu_rate > PI {
            return Err(Error::invalid(format!(
                "infeasible kinematics: body rate {:.2} rad/s at t = {t:.3} exceeds pi per sample",
                kin.body_rate.norm()
            )));
        }
        let mut accel = kin.attitude.transpose() * (kin.acceleration + gravity);
        let mut gyro = kin.body_rate;
        if cfg.accel_noise > 0.0 {
            accel += Vector3::from_fn(|_, _| accel_noise.sample(&mut rng));
        }
        if cfg.gyro_noise > 0.0 {
            gyro += Vector3::from_fn(|_, _| gyro_noise.sample(&mut rng));
        }
        samples.push(ImuSample::new(t, accel, gyro));
        gt.push(TimedPosition::new(t, kin.position));
        zv.push(kin.velocity.norm() < STATIONARY_SPEED);
    }
    Ok(TrialRecord {
        imu: ImuSequence::new(samples, cfg.imu_rate)?,
        gt_positions: Some(gt),
        gt_zv: Some(zv),
        motion,
    })
}

/// Simulates `duration` seconds of a single gait, starting with the profile's rest period.
pub fn simulate(profile: &GaitProfile, duration: f64) -> Result<TrialRecord> {
    profile.validate()?;
    if !(duration >= 2.0 * profile.stride_period) {
        return Err(Error::invalid(format!(
            "duration {duration} s shorter than two stride periods"
        )));
    }
    let strides = if profile.motion == Motion::Stationary {
        0
    } else {
        ((duration - profile.initial_rest) / profile.stride_period).floor().max(0.0) as usize
    };
    let turn = match profile.path {
        PathShape::Straight => 0.0,
        PathShape::Loop => 2.0 * PI,
    };
    let segments = [Segment::new(profile.clone(), strides, turn)];
    let path = FootPath::build(&segments, profile.initial_rest, Some(duration))?;
    sample_path(&path, &profile.sim_config(), profile.motion.class())
}

/// Simulates consecutive gait segments; sampling and noise come from `cfg`.
pub fn simulate_segments(segments: &[Segment], cfg: &SimConfig, final_rest: f64) -> Result<TrialRecord> {
    let mut path = FootPath::build(segments, cfg.initial_rest, None)?;
    if final_rest > 0.0 {
        let end = path.duration() + final_rest;
        if let Some(last) = path.phases.last().copied() {
            let k = path.at(last.end());
            let yaw = k.attitude[(1, 0)].atan2(k.attitude[(0, 0)]);
            path.phases.push(Phase::Rest {
                end,
                position: k.position,
                yaw,
            });
        }
    }
    let classes: Vec<_> = segments.iter().filter_map(|s| s.profile.motion.class()).collect();
    let motion = match classes.first() {
        Some(first) if classes.iter().all(|c| c == first) => Some(*first),
        _ => None,
    };
    sample_path(&path, cfg, motion)
}

/// A stairwell climb: `flights` flights up, then the same number down.
///
/// Each flight has `steps` strides of `step_rise` and is followed by a
/// two-stride landing that turns the walker around.
pub fn stairwell(flights: usize, steps: usize, cfg: &SimConfig) -> Result<TrialRecord> {
    let landing = GaitProfile {
        stride_length: 0.45,
        ..GaitProfile::walk()
    };
    let mut segments = Vec::new();
    for (profile, turn_sign) in [(GaitProfile::stair_up(), 1.0), (GaitProfile::stair_down(), -1.0)] {
        for _ in 0..flights {
            segments.push(Segment::new(profile.clone(), steps, 0.0));
            segments.push(Segment::new(landing.clone(), 2, turn_sign * PI));
        }
    }
    simulate_segments(&segments, cfg, 1.0)
}
