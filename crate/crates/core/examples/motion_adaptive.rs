//! Train the three-class motion SVM on simulated gaits, then let it switch the
//! SHOE threshold on a trial that changes from walking to running.

use rand_chacha::ChaCha8Rng;
use zvins::detectors::{detect_sequence, ImuDetector, ShoeParams};
use zvins::eskf::{run_filter, FilterConfig};
use zvins::metrics::armse;
use zvins::motion_adaptive::{adaptive_detect, extract_windows, train_svm, SvmTrainConfig, ThresholdTable};
use zvins::sim::{simulate_segments, stairwell, GaitProfile, Segment, SimConfig};
use zvins::trial::MotionClass;

fn cfg(seed: u64) -> SimConfig {
    SimConfig {
        imu_rate: 200.0,
        accel_noise: 0.02,
        gyro_noise: 0.002,
        seed,
        initial_rest: 1.0,
        gravity: 9.8065,
    }
}

fn main() -> zvins::Result<()> {
    let walk = simulate_segments(&[Segment::new(GaitProfile::walk(), 40, 0.0)], &cfg(1), 1.0)?;
    let run = simulate_segments(&[Segment::new(GaitProfile::run(), 50, 0.0)], &cfg(2), 1.0)?;
    let stairs = stairwell(1, 12, &cfg(3))?;

    let (mut windows, mut labels) = (Vec::new(), Vec::new());
    for (trial, class) in [(&walk, MotionClass::Walk), (&run, MotionClass::Run), (&stairs, MotionClass::Stair)] {
        let w = extract_windows(&trial.imu, 50, None::<&mut ChaCha8Rng>)?;
        labels.extend(std::iter::repeat_n(class, w.len()));
        windows.extend(w);
    }
    // C = 1 underfits unit-norm windows at this kernel width
    let svm_cfg = SvmTrainConfig { c: 1000.0, ..SvmTrainConfig::default() };
    let model = train_svm(&windows, &labels, &svm_cfg)?;
    println!("{} windows, {} support vectors", windows.len(), model.support_vectors.len());

    let mixed = simulate_segments(
        &[Segment::new(GaitProfile::walk(), 20, 0.0), Segment::new(GaitProfile::run(), 25, 0.0)],
        &cfg(9),
        1.0,
    )?;
    let table = ThresholdTable { walk: 1e3, run: 3e4, stair: 1e3 };
    let adaptive = adaptive_detect(&mixed.imu, &model, &table, &ShoeParams::default(), 50)?;
    let switches = adaptive.motions.windows(2).filter(|w| w[0] != w[1]).count();
    println!("classifier changed its mind {switches} times");

    let gt = mixed.require_positions()?;
    let fc = FilterConfig::default();
    println!("adaptive      ARMSE {:.4} m", armse(&run_filter(&mixed.imu, &adaptive.flags, &fc)?, gt)?);
    for gamma in [table.walk, table.run] {
        let flags: Vec<bool> = detect_sequence(&mixed.imu, &ImuDetector::Shoe(ShoeParams::default().with_threshold(gamma)))?
            .into_iter()
            .map(|d| d.stationary)
            .collect();
        println!("fixed {gamma:.0e}  ARMSE {:.4} m", armse(&run_filter(&mixed.imu, &flags, &fc)?, gt)?);
    }
    Ok(())
}
