//! Simulate a closed 60 s walk and run the filter with perfect stance labels.
//!
//!     cargo run --release --example quickstart_filter

use zvins::eskf::{run_filter, FilterConfig};
use zvins::metrics::{armse, loop_closure, path_length};
use zvins::sim::{simulate, GaitProfile, PathShape};

fn main() -> zvins::Result<()> {
    let profile = GaitProfile {
        path: PathShape::Loop,
        ..GaitProfile::walk()
    };
    let trial = simulate(&profile, 60.0)?;
    let gt = trial.require_positions()?;
    let flags = trial.require_zv()?;

    let traj = run_filter(&trial.imu, flags, &FilterConfig::default())?;
    let end = traj.final_position().expect("non-empty trajectory");

    println!("{} IMU samples at {} Hz", trial.imu.len(), trial.imu.nominal_rate());
    println!("path length   {:.2} m", path_length(gt));
    println!("final point   [{:.4}, {:.4}, {:.4}]", end.x, end.y, end.z);
    println!("loop closure  {:.2e} m", loop_closure(&traj)?.err_3d);
    println!("ARMSE         {:.2e} m", armse(&traj, gt)?);
    Ok(())
}
