//! Strapdown reconstruction of noiseless simulator output with exact stance flags.

use nalgebra::Vector3;
use zvins::eskf::{run_filter, FilterConfig};
use zvins::sim::{simulate, GaitProfile};

/// Estimate-minus-truth position at the last sample of every stance.
fn footfall_errors(rate: f64, duration: f64) -> Vec<Vector3<f64>> {
    let trial = simulate(
        &GaitProfile {
            imu_rate: rate,
            ..GaitProfile::walk()
        },
        duration,
    )
    .unwrap();
    let zv = trial.gt_zv.clone().unwrap();
    let gt = trial.gt_positions.as_ref().unwrap();
    let traj = run_filter(&trial.imu, &zv, &FilterConfig::default()).unwrap();
    (1..zv.len())
        .filter(|&i| zv[i - 1] && !zv[i])
        .map(|i| traj.states[i - 1].position - gt[i - 1].p)
        .collect()
}

/// Error accumulated over each stride.
fn stride_increments(errors: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    errors.windows(2).map(|w| w[1] - w[0]).collect()
}

fn max_norm(v: &[Vector3<f64>]) -> f64 {
    v.iter().map(|d| d.norm()).fold(0.0, f64::max)
}

#[test]
fn walk_is_recovered_within_a_millimetre_per_stride() {
    let inc = stride_increments(&footfall_errors(200.0, 60.0));
    assert!(inc.len() > 40);
    let worst = max_norm(&inc);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn doubling_the_rate_changes_each_stride_by_less_than_1e4() {
    let a = stride_increments(&footfall_errors(200.0, 30.0));
    let b = stride_increments(&footfall_errors(400.0, 30.0));
    assert_eq!(a.len(), b.len());
    let diff: Vec<_> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let worst = max_norm(&diff);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn footfall_drift_is_second_order_in_the_sample_period() {
    let drift: Vec<f64> = [200.0, 400.0, 800.0]
        .iter()
        .map(|&r| max_norm(&stride_increments(&footfall_errors(r, 20.0))))
        .collect();
    for w in drift.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.8..4.2).contains(&ratio), "{drift:?}");
    }
}

#[test]
fn horizontal_footfall_drift_is_sub_micrometre_at_3200_hz() {
    let inc = stride_increments(&footfall_errors(3200.0, 20.0));
    let worst = inc.iter().map(|d| d.xy().norm()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}
