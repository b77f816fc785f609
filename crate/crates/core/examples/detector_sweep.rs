//! Sweep the SHOE and ARED thresholds over a noisy walk and print the
//! resulting position error for each.

use zvins::detectors::{detect_sequence, AredParams, ImuDetector, ShoeParams};
use zvins::eskf::{run_filter, FilterConfig};
use zvins::metrics::{armse, flag_scores};
use zvins::sim::{simulate, GaitProfile};
use zvins::threshold_opt::log_grid;

fn main() -> zvins::Result<()> {
    let trial = simulate(&GaitProfile::walk().with_noise(0.02, 0.002, 7), 40.0)?;
    let gt = trial.require_positions()?;
    let truth = trial.require_zv()?;

    let detectors = [
        ("shoe", ImuDetector::Shoe(ShoeParams::default()), log_grid(1e2, 1e8, 7)),
        ("ared", ImuDetector::Ared(AredParams::default()), log_grid(1e-4, 1e2, 7)),
    ];
    for (name, base, grid) in detectors {
        println!("{name}:");
        for gamma in grid {
            let flags: Vec<bool> = detect_sequence(&trial.imu, &base.with_threshold(gamma))?
                .into_iter()
                .map(|d| d.stationary)
                .collect();
            let f1 = flag_scores(&flags, truth)?.f1;
            match run_filter(&trial.imu, &flags, &FilterConfig::default()) {
                Ok(traj) => println!("  {gamma:>9.1e}  F1 {f1:.3}  ARMSE {:.4} m", armse(&traj, gt)?),
                Err(e) => println!("  {gamma:>9.1e}  F1 {f1:.3}  {e}"),
            }
        }
    }
    Ok(())
}
