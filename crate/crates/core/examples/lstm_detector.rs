//! Train a small LSTM zero-velocity classifier and use it to drive the filter.
//!
//! The network here is tiny so the example finishes in seconds; the
//! acceptance suite trains a larger one for 300 epochs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zvins::eskf::{run_filter, FilterConfig};
use zvins::lstm::{self, TrainConfig};
use zvins::metrics::{armse, flag_scores};
use zvins::sim::{simulate, GaitProfile};

fn main() -> zvins::Result<()> {
    let train_trial = simulate(&GaitProfile::walk().with_noise(0.02, 0.002, 1), 40.0)?;
    let val_trial = simulate(&GaitProfile::walk().with_noise(0.02, 0.002, 2), 20.0)?;
    let test_trial = simulate(&GaitProfile::walk().with_noise(0.02, 0.002, 3), 30.0)?;

    let cfg = TrainConfig {
        layers: 1,
        hidden: 8,
        window: 60,
        epochs: 40,
        learning_rate: 1e-2,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = lstm::sample_windows(&train_trial, cfg.window, 300, &mut rng)?;
    let val = lstm::sample_windows(&val_trial, cfg.window, 100, &mut rng)?;
    let outcome = lstm::train(&data, &val, &cfg)?;
    println!(
        "validation loss {:.4} -> {:.4} (best epoch {})",
        outcome.initial.validation_loss,
        outcome.history[outcome.best_epoch.max(1) - 1].validation_loss,
        outcome.best_epoch
    );

    let flags = lstm::classify(&outcome.model, &test_trial.imu, cfg.gate)?;
    let skip = cfg.window - 1;
    let scores = flag_scores(&flags[skip..], &test_trial.require_zv()?[skip..])?;
    let traj = run_filter(&test_trial.imu, &flags, &FilterConfig::default())?;
    println!("test F1 {:.3}, ARMSE {:.4} m", scores.f1, armse(&traj, test_trial.require_positions()?)?);
    Ok(())
}
