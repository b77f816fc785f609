//! Two flights up and back down a stairwell; reports how well the height of
//! the top landing is recovered.

use zvins::detectors::{detect_sequence, ImuDetector, ShoeParams};
use zvins::eskf::{run_filter, FilterConfig};
use zvins::metrics::evaluate;
use zvins::sim::{stairwell, SimConfig};

fn main() -> zvins::Result<()> {
    let cfg = SimConfig {
        imu_rate: 200.0,
        accel_noise: 0.02,
        gyro_noise: 0.002,
        seed: 11,
        initial_rest: 1.0,
        gravity: 9.8065,
    };
    let trial = stairwell(2, 12, &cfg)?;
    let gt = trial.require_positions()?;
    let top = gt.iter().map(|p| p.p.z).fold(f64::MIN, f64::max);

    let shoe = ShoeParams::default().with_threshold(1e4);
    let flags: Vec<bool> = detect_sequence(&trial.imu, &ImuDetector::Shoe(shoe))?
        .into_iter()
        .map(|d| d.stationary)
        .collect();
    let traj = run_filter(&trial.imu, &flags, &FilterConfig::default())?;
    let report = evaluate(&traj, gt)?;
    println!("top landing {top:.3} m above the start, {:.1} m walked", report.path_length);
    println!("ARMSE {:.4} m", report.armse);
    println!("vertical error at the furthest point {:.4} m", report.furthest_point_vertical);
    println!("vertical loop closure {:.4} m", report.loop_closure_vertical);
    Ok(())
}
