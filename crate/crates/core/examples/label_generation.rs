//! Generate zero-velocity labels for a trial with ground-truth positions by
//! optimizing each detector's threshold and keeping the best one.

use zvins::detectors::DetectorKind;
use zvins::metrics::flag_scores;
use zvins::sim::{simulate, GaitProfile};
use zvins::threshold_opt::{label_trial, LabelConfig};

fn main() -> zvins::Result<()> {
    let trial = simulate(&GaitProfile::run().with_noise(0.02, 0.002, 3), 30.0)?;
    let result = label_trial(
        &trial,
        &[DetectorKind::Shoe, DetectorKind::Ared, DetectorKind::Speed],
        &LabelConfig::default(),
    )?;
    for (kind, score) in &result.scores {
        println!("{kind:<6} threshold {:>10.3e}  ARMSE {:.4} m", score.threshold, score.armse);
    }
    let f1 = flag_scores(&result.labels, trial.require_zv()?)?.f1;
    println!("winner: {} (labels vs truth F1 {f1:.3})", result.winning_detector);

    let dir = std::env::temp_dir().join("zvins_labels");
    result.save(&dir, &trial.imu.times())?;
    println!("wrote {}", dir.display());
    Ok(())
}
