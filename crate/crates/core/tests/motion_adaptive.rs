//! Motion classifier and adaptive SHOE on simulated gaits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zvins::augment::uniform_rotation;
use zvins::detectors::{detect_sequence, ImuDetector, ShoeParams};
use zvins::motion_adaptive::{
    adaptive_detect, classify_motion, extract_windows, make_motion_window, train_svm, SvmModel, SvmTrainConfig,
    ThresholdTable, DEFAULT_INTERVAL, WINDOW_LEN,
};
use zvins::sim::{simulate_segments, stairwell, GaitProfile, Segment, SimConfig};
use zvins::trial::{MotionClass, TrialRecord};

fn cfg(seed: u64) -> SimConfig {
    SimConfig {
        imu_rate: 200.0,
        accel_noise: 0.02,
        gyro_noise: 0.002,
        seed,
        initial_rest: 1.0,
        gravity: zvins::eskf::DEFAULT_GRAVITY,
    }
}

fn gait(profile: GaitProfile, strides: usize, seed: u64) -> TrialRecord {
    simulate_segments(&[Segment::new(profile, strides, 0.0)], &cfg(seed), 1.0).unwrap()
}

fn training_trials() -> [(TrialRecord, MotionClass); 3] {
    [
        (gait(GaitProfile::walk(), 40, 1), MotionClass::Walk),
        (gait(GaitProfile::run(), 50, 2), MotionClass::Run),
        (stairwell(1, 12, &cfg(3)).unwrap(), MotionClass::Stair),
    ]
}

/// `rotated_copies` of every window, each under its own random rotation; 0 trains unrotated.
fn svm(rotated_copies: usize, gamma: f64) -> SvmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut windows, mut labels) = (Vec::new(), Vec::new());
    for (trial, class) in training_trials() {
        for _ in 0..rotated_copies.max(1) {
            let rotate = (rotated_copies > 0).then_some(&mut rng);
            let w = extract_windows(&trial.imu, 50, rotate).unwrap();
            labels.extend(std::iter::repeat_n(class, w.len()));
            windows.extend(w);
        }
    }
    let cfg = SvmTrainConfig {
        c: 1000.0,
        gamma,
        ..SvmTrainConfig::default()
    };
    train_svm(&windows, &labels, &cfg).unwrap()
}

fn shoe_flags(trial: &TrialRecord, gamma: f64) -> Vec<bool> {
    detect_sequence(&trial.imu, &ImuDetector::Shoe(ShoeParams::default().with_threshold(gamma)))
        .unwrap()
        .into_iter()
        .map(|d| d.stationary)
        .collect()
}

#[test]
fn rotation_trained_classifier_ignores_sensor_orientation() {
    // at the default gamma of 1e-3 the kernel is too flat to learn an
    // orientation-free boundary (about 50-75% agreement)
    let model = svm(4, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut same, mut total) = (0, 0);
    for (trial, _) in [
        (gait(GaitProfile::walk(), 20, 31), MotionClass::Walk),
        (gait(GaitProfile::run(), 25, 32), MotionClass::Run),
    ] {
        let n = trial.imu.len() - WINDOW_LEN;
        for j in 0..10 {
            let k = 200 + j * (n - 200) / 10;
            let base = classify_motion(&model, &make_motion_window(&trial.imu, k, None).unwrap());
            for _ in 0..100 {
                let r = uniform_rotation(&mut rng);
                let w = make_motion_window(&trial.imu, k, Some(&r)).unwrap();
                same += usize::from(classify_motion(&model, &w) == base);
                total += 1;
            }
        }
    }
    let agreement = same as f64 / total as f64;
    assert_eq!(total, 2000);
    assert!(agreement >= 0.95, "{agreement}");
}

#[test]
fn adaptive_flags_leave_the_walking_threshold_only_around_the_switch() {
    let model = svm(0, SvmTrainConfig::default().gamma);
    let walk = GaitProfile::walk();
    let switch = ((1.0 + 25.0 * walk.stride_period) * 200.0) as usize;
    let trial = simulate_segments(
        &[Segment::new(walk, 25, 0.0), Segment::new(GaitProfile::run(), 30, 0.0)],
        &cfg(40),
        1.0,
    )
    .unwrap();
    let table = ThresholdTable {
        walk: 1e3,
        run: 1e6,
        stair: 1e3,
    };
    let adaptive = adaptive_detect(&trial.imu, &model, &table, &ShoeParams::default(), DEFAULT_INTERVAL).unwrap();
    let fixed_walk = shoe_flags(&trial, table.walk);
    let fixed_run = shoe_flags(&trial, table.run);
    let differs = |a: &[bool], b: &[bool]| -> Vec<usize> { (0..a.len()).filter(|&k| a[k] != b[k]).collect() };

    // the two fixed thresholds disagree on both sides of the switch
    let fixed = differs(&fixed_walk, &fixed_run);
    assert!(fixed.iter().any(|&k| k < switch) && fixed.iter().any(|&k| k > switch));

    let settle = WINDOW_LEN + DEFAULT_INTERVAL;
    let from_walk = differs(&adaptive.flags, &fixed_walk);
    let from_run = differs(&adaptive.flags, &fixed_run);
    assert!(from_walk.iter().all(|&k| k >= switch), "{:?}", &from_walk[..from_walk.len().min(5)]);
    assert!(from_run.iter().all(|&k| k < switch + settle), "{:?}", from_run.last());
}
