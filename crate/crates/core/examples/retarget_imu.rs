//! Turn a 200 Hz recording into a noisier 125 Hz one.

use zvins::augment::{retarget_trial, RetargetSpec};
use zvins::sim::{simulate, GaitProfile};

fn main() -> zvins::Result<()> {
    let trial = simulate(&GaitProfile::walk(), 20.0)?;
    let spec = RetargetSpec::default();
    let out = retarget_trial(&trial, &spec)?;

    println!("{} samples at {} Hz -> {} samples at {} Hz", trial.imu.len(), trial.imu.nominal_rate(), out.imu.len(), out.imu.nominal_rate());
    println!("low-pass {} Hz, noise {} m/s^2 and {} rad/s", spec.cutoff, spec.accel_noise, spec.gyro_noise);
    for s in &out.imu.samples()[..3] {
        println!("  t={:.3}  a=[{:.3}, {:.3}, {:.3}]", s.t, s.accel.x, s.accel.y, s.accel.z);
    }
    let zv = out.require_zv()?;
    println!("stationary fraction {:.3}", zv.iter().filter(|&&z| z).count() as f64 / zv.len() as f64);
    Ok(())
}
