//! Strapdown propagation and the zero-velocity error-state Kalman filter.
//!
//! Nominal state: position, velocity and attitude in a local level frame with
//! z up and gravity `(0, 0, -g)`. Error state (9-D): `[dp, dv, dtheta]`, where
//! the attitude error is a body-side small rotation, `R_true = R exp([dtheta]x)`.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{read_numeric_csv, CsvOut, ImuSample, ImuSequence, TimedPosition};
use crate::quat::{quat_increment, skew, Quaternion};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Vector9 = SVector<f64, 9>;

/// Largest accepted propagation step.
pub const MAX_DT: f64 = 0.1;
/// Default gravity magnitude, m/s^2.
pub const DEFAULT_GRAVITY: f64 = 9.8065;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Sensor-to-navigation attitude.
    pub attitude: Quaternion,
}

impl Default for NavState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Quaternion::identity(),
        }
    }
}

impl NavState {
    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite())
            && self.attitude.is_finite()
    }
}

/// Covariance of the 9-D error state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCovariance(pub Matrix9);

impl ErrorCovariance {
    pub fn from_diagonal(diag: &[f64; 9]) -> Self {
        Self(Matrix9::from_diagonal(&Vector9::from_column_slice(diag)))
    }

    pub fn matrix(&self) -> &Matrix9 {
        &self.0
    }

    pub fn velocity_block(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(3, 3).into_owned()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (self.0 - self.0.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = 0.5 * (self.0 + self.0.transpose());
        sym.symmetric_eigenvalues().min()
    }

    /// Symmetric within 1e-10 and no eigenvalue below -1e-9.
    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
            && self.max_asymmetry() <= 1e-10
            && self.min_eigenvalue() >= -1e-9
    }

    fn symmetrized(m: Matrix9) -> Self {
        Self(0.5 * (m + m.transpose()))
    }
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

fn default_levelling() -> usize {
    100
}

/// Noise and initialization parameters of the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Accelerometer white noise density, m/s^2/sqrt(Hz).
    pub accel_noise_density: f64,
    /// Gyroscope white noise density, rad/s/sqrt(Hz).
    pub gyro_noise_density: f64,
    /// Standard deviation of the zero-velocity pseudo-measurement, m/s.
    pub zupt_std: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Initial error covariance diagonal `[dp; dv; dtheta]`.
    pub initial_covariance: [f64; 9],
    /// Samples averaged for the initial roll/pitch levelling.
    #[serde(default = "default_levelling")]
    pub levelling_window: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            accel_noise_density: 0.02,
            gyro_noise_density: 0.002,
            zupt_std: 0.01,
            gravity: DEFAULT_GRAVITY,
            initial_covariance: [1e-8, 1e-8, 1e-8, 1e-6, 1e-6, 1e-6, 1e-4, 1e-4, 1e-4],
            levelling_window: 100,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("accel_noise_density", self.accel_noise_density),
            ("gyro_noise_density", self.gyro_noise_density),
            ("zupt_std", self.zupt_std),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if self.initial_covariance.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("initial covariance entries must be strictly positive"));
        }
        if self.levelling_window == 0 {
            return Err(Error::invalid("levelling window must be at least one sample"));
        }
        Ok(())
    }

    pub fn initial_covariance(&self) -> ErrorCovariance {
        ErrorCovariance::from_diagonal(&self.initial_covariance)
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.gravity)
    }
}

/// Nominal-state motion model: Euler step of position and velocity, exact attitude increment.
pub fn propagate_nominal(state: &NavState, sample: &ImuSample, dt: f64, gravity: &Vector3<f64>) -> Result<NavState> {
    let rot = state.attitude.to_rotation_matrix();
    Ok(NavState {
        position: state.position + state.velocity * dt,
        velocity: state.velocity + (rot * sample.accel + gravity) * dt,
        attitude: quat_increment(&state.attitude, &sample.gyro, dt)?,
    })
}

/// Error-state transition matrix for one step.
pub fn error_transition(state: &NavState, sample: &ImuSample, dt: f64) -> Matrix9 {
    let rot = state.attitude.to_rotation_matrix();
    let step_rot = crate::quat::rotation_matrix_exp(&(sample.gyro * dt));
    let mut f = Matrix9::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    f.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-rot * skew(&sample.accel) * dt));
    f.fixed_view_mut::<3, 3>(6, 6).copy_from(&step_rot.transpose());
    f
}

/// Discretized process noise for one step.
pub fn process_noise(cfg: &FilterConfig, dt: f64) -> Matrix9 {
    let mut q = Matrix9::zeros();
    let qv = cfg.accel_noise_density.powi(2) * dt;
    let qa = cfg.gyro_noise_density.powi(2) * dt;
    for i in 0..3 {
        q[(3 + i, 3 + i)] = qv;
        q[(6 + i, 6 + i)] = qa;
    }
    q
}

/// One prediction step of the nominal state and its error covariance.
pub fn propagate(
    state: &NavState,
    cov: &ErrorCovariance,
    sample: &ImuSample,
    dt: f64,
    cfg: &FilterConfig,
) -> Result<(NavState, ErrorCovariance)> {
    if !sample.is_finite() {
        return Err(Error::NonFinite(format!("IMU sample at t = {}", sample.t)));
    }
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::BadTimeStep { dt, max: MAX_DT });
    }
    let next = propagate_nominal(state, sample, dt, &cfg.gravity_vector())?;
    let f = error_transition(state, sample, dt);
    let p = f * cov.0 * f.transpose() + process_noise(cfg, dt);
    Ok((next, ErrorCovariance::symmetrized(p)))
}

/// Zero-velocity pseudo-measurement update (`z = 0`, `H = [0 I 0]`, `R = zupt_std^2 I`).
///
/// The estimated error is folded back into the nominal state and the
/// covariance is updated in Joseph form.
pub fn zupt_update(state: &NavState, cov: &ErrorCovariance, cfg: &FilterConfig) -> Result<(NavState, ErrorCovariance)> {
    let mut h = SMatrix::<f64, 3, 9>::zeros();
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    let r = Matrix3::identity() * cfg.zupt_std.powi(2);
    let p = cov.0;
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Diverged("singular innovation covariance in zero-velocity update".into()))?;
    let gain = p * h.transpose() * s_inv;
    let innovation = -state.velocity;
    let dx = gain * innovation;

    let ikh = Matrix9::identity() - gain * h;
    let p_post = ikh * p * ikh.transpose() + gain * r * gain.transpose();

    let dtheta = Vector3::new(dx[6], dx[7], dx[8]);
    let corrected = NavState {
        position: state.position + Vector3::new(dx[0], dx[1], dx[2]),
        velocity: state.velocity + Vector3::new(dx[3], dx[4], dx[5]),
        attitude: (state.attitude * Quaternion::from_rotation_vector(&dtheta)).normalized(),
    };
    Ok((corrected, ErrorCovariance::symmetrized(p_post)))
}

/// Roll/pitch from the mean specific force, yaw fixed at zero.
pub fn level_attitude(samples: &[ImuSample]) -> Result<Quaternion> {
    if samples.is_empty() {
        return Err(Error::invalid("levelling needs at least one sample"));
    }
    let mean = samples.iter().fold(Vector3::zeros(), |acc, s| acc + s.accel) / samples.len() as f64;
    if mean.norm() < 1e-9 {
        return Err(Error::invalid("mean specific force is zero; cannot level"));
    }
    let roll = mean.y.atan2(mean.z);
    let pitch = (-mean.x).atan2((mean.y * mean.y + mean.z * mean.z).sqrt());
    Ok(Quaternion::from_euler(roll, pitch, 0.0))
}

/// Estimated states for every input sample, with the zero-velocity flags that were applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NavState>,
    pub zv: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn positions(&self) -> Vec<TimedPosition> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(t, s)| TimedPosition::new(*t, s.position))
            .collect()
    }

    pub fn final_position(&self) -> Option<Vector3<f64>> {
        self.states.last().map(|s| s.position)
    }

    /// Linearly interpolated position; `None` outside the time span.
    pub fn position_at(&self, t: f64) -> Option<Vector3<f64>> {
        interpolate_position(&self.times, |i| self.states[i].position, t)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path)?;
        out.line("t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,zv")?;
        for ((t, s), zv) in self.times.iter().zip(&self.states).zip(&self.zv) {
            let (p, v, q) = (s.position, s.velocity, s.attitude);
            out.line(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                t,
                p.x,
                p.y,
                p.z,
                v.x,
                v.y,
                v.z,
                q.w,
                q.x,
                q.y,
                q.z,
                u8::from(*zv)
            ))?;
        }
        out.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let cols = ["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "zv"];
        let rows = read_numeric_csv(path, &cols)?;
        let mut traj = Trajectory {
            times: Vec::with_capacity(rows.len()),
            states: Vec::with_capacity(rows.len()),
            zv: Vec::with_capacity(rows.len()),
        };
        for r in rows {
            traj.times.push(r[0]);
            traj.states.push(NavState {
                position: Vector3::new(r[1], r[2], r[3]),
                velocity: Vector3::new(r[4], r[5], r[6]),
                attitude: Quaternion::new(r[7], r[8], r[9], r[10]),
            });
            traj.zv.push(r[11] != 0.0);
        }
        Ok(traj)
    }
}

/// Linear interpolation over sorted `times`; `None` when `t` is outside the span.
pub(crate) fn interpolate_position(
    times: &[f64],
    position: impl Fn(usize) -> Vector3<f64>,
    t: f64,
) -> Option<Vector3<f64>> {
    let n = times.len();
    if n == 0 || t < times[0] || t > times[n - 1] {
        return None;
    }
    let hi = times.partition_point(|&x| x < t);
    if hi == 0 || times[hi] == t {
        return Some(position(hi));
    }
    let lo = hi - 1;
    let w = (t - times[lo]) / (times[hi] - times[lo]);
    Some(position(lo) * (1.0 - w) + position(hi) * w)
}

/// Runs the filter over `seq`, applying a zero-velocity update at every flagged sample.
pub fn run_filter(seq: &ImuSequence, flags: &[bool], cfg: &FilterConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let samples = seq.samples();
    if samples.len() < 2 {
        return Err(Error::invalid("the filter needs at least two IMU samples"));
    }
    if flags.len() != samples.len() {
        return Err(Error::invalid(format!(
            "{} stationary flags for {} samples",
            flags.len(),
            samples.len()
        )));
    }
    let window = cfg.levelling_window.min(samples.len());
    let mut state = NavState {
        attitude: level_attitude(&samples[..window])?,
        ..NavState::default()
    };
    let mut cov = cfg.initial_covariance();
    if flags[0] {
        (state, cov) = zupt_update(&state, &cov, cfg)?;
    }

    let mut traj = Trajectory {
        times: Vec::with_capacity(samples.len()),
        states: Vec::with_capacity(samples.len()),
        zv: flags.to_vec(),
    };
    traj.times.push(samples[0].t);
    traj.states.push(state);

    for k in 1..samples.len() {
        let dt = samples[k].t - samples[k - 1].t;
        (state, cov) = propagate(&state, &cov, &samples[k], dt, cfg)?;
        if flags[k] {
            (state, cov) = zupt_update(&state, &cov, cfg)?;
        }
        if !state.is_finite() {
            return Err(Error::Diverged(format!("non-finite state at t = {}", samples[k].t)));
        }
        traj.times.push(samples[k].t);
        traj.states.push(state);
    }
    Ok(traj)
}
