//! Command-line front end shared by the `zvins` binary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::augment::{retarget, RetargetSpec};
use crate::config::{check_schema, read_json, write_json, SCHEMA_VERSION};
use crate::detectors::{self, AredParams, DetectorKind, ImuDetector, ShoeParams};
use crate::error::{Error, Result};
use crate::eskf::{run_filter, FilterConfig, Trajectory};
use crate::imu::{read_labels_csv, read_positions_csv, write_labels_csv, ImuSequence};
use crate::lstm::{self, LstmModel, TrainConfig, TrainSample};
use crate::metrics::evaluate;
use crate::motion_adaptive::{
    adaptive_detect, classify_motion, extract_windows, make_motion_window, train_svm, SvmModel, SvmTrainConfig,
    ThresholdTable, DEFAULT_INTERVAL, WINDOW_LEN,
};
use crate::sim::{simulate, GaitProfile, Motion};
use crate::threshold_opt::{label_trial, LabelConfig};
use crate::trial::TrialRecord;

#[derive(Debug, Parser)]
#[command(name = "zvins", version, about = "Foot-mounted inertial navigation with zero-velocity updates")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimateDetector {
    Shoe,
    Ared,
    Adaptive,
    Lstm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trial directory.
    Simulate {
        /// Gait profile JSON; defaults to the preset of `--motion`.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "walk")]
        motion: MotionArg,
        #[arg(long)]
        duration: f64,
        /// Overrides the profile's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the best detector and threshold for a trial with ground truth.
    Label {
        #[arg(long)]
        trial: PathBuf,
        #[arg(long, default_value = "shoe,ared,speed")]
        detectors: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the motion classifier on trials whose metadata names their motion.
    TrainSvm {
        #[arg(long, num_args = 1.., required = true)]
        trials: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify motion over 200-sample windows of an IMU file.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        imu: PathBuf,
        #[arg(long, default_value_t = DEFAULT_INTERVAL)]
        interval: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the LSTM zero-velocity classifier on labelled trials.
    TrainLstm {
        #[arg(long, num_args = 1.., required = true)]
        trials: Vec<PathBuf>,
        /// Held-out trials used to pick the best epoch.
        #[arg(long, num_args = 1..)]
        validation: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        windows_per_trial: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-step zero-velocity flags from an LSTM model.
    ClassifyLstm {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        imu: PathBuf,
        #[arg(long, default_value_t = lstm::DEFAULT_GATE)]
        gate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the filter end to end and write the trajectory.
    Estimate {
        #[arg(long)]
        trial: PathBuf,
        #[arg(long, value_enum)]
        detector: EstimateDetector,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Low-pass, resample and add noise to an IMU file.
    Retarget {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a trajectory with ground-truth positions.
    Evaluate {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionArg {
    Walk,
    Run,
    StairUp,
    StairDown,
    Stationary,
}

impl From<MotionArg> for Motion {
    fn from(m: MotionArg) -> Self {
        match m {
            MotionArg::Walk => Motion::Walk,
            MotionArg::Run => Motion::Run,
            MotionArg::StairUp => Motion::StairUp,
            MotionArg::StairDown => Motion::StairDown,
            MotionArg::Stationary => Motion::Stationary,
        }
    }
}

/// SVM training job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmJobConfig {
    pub schema_version: u32,
    pub svm: SvmTrainConfig,
    /// Samples between consecutive training windows.
    pub window_stride: usize,
    /// Give every training window its own uniformly random orientation.
    pub rotation_augmentation: bool,
    pub seed: u64,
}

impl Default for SvmJobConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            svm: SvmTrainConfig::default(),
            window_stride: 50,
            rotation_augmentation: false,
            seed: 0,
        }
    }
}

/// Settings for `estimate`. Model paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub schema_version: u32,
    pub filter: FilterConfig,
    pub shoe: ShoeParams,
    pub ared: AredParams,
    pub thresholds: ThresholdTable,
    pub interval: usize,
    pub svm_model: Option<PathBuf>,
    pub lstm_model: Option<PathBuf>,
    pub gate: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            filter: FilterConfig::default(),
            shoe: ShoeParams::default(),
            ared: AredParams::default(),
            thresholds: ThresholdTable::default(),
            interval: DEFAULT_INTERVAL,
            svm_model: None,
            lstm_model: None,
            gate: lstm::DEFAULT_GATE,
        }
    }
}

fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn relative_to(config: Option<&Path>, p: &Path) -> PathBuf {
    match config.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// Stationary labels of a trial: ground truth if present, else `labels.csv` in the trial directory.
fn trial_labels(dir: &Path, trial: &TrialRecord) -> Result<Vec<bool>> {
    if let Some(zv) = &trial.gt_zv {
        return Ok(zv.clone());
    }
    let path = dir.join("labels.csv");
    let (_, flags) = read_labels_csv(&path)?;
    if flags.len() != trial.imu.len() {
        return Err(Error::invalid(format!(
            "{}: {} labels for {} IMU samples",
            path.display(),
            flags.len(),
            trial.imu.len()
        )));
    }
    Ok(flags)
}

fn lstm_samples(dirs: &[PathBuf], window: usize, per_trial: usize, rng: &mut ChaCha8Rng) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for dir in dirs {
        let mut trial = TrialRecord::load(dir)?;
        trial.gt_zv = Some(trial_labels(dir, &trial)?);
        out.extend(lstm::sample_windows(&trial, window, per_trial, rng)?);
    }
    Ok(out)
}

/// Stationary flags for `trial` from the chosen detector.
pub fn detect(trial: &TrialRecord, detector: EstimateDetector, cfg: &EstimateConfig, config_path: Option<&Path>) -> Result<Vec<bool>> {
    match detector {
        EstimateDetector::Shoe => {
            cfg.shoe.validate()?;
            detectors::detect_sequence(&trial.imu, &ImuDetector::Shoe(cfg.shoe))
                .map(|d| d.into_iter().map(|d| d.stationary).collect())
        }
        EstimateDetector::Ared => detectors::detect_sequence(&trial.imu, &ImuDetector::Ared(cfg.ared))
            .map(|d| d.into_iter().map(|d| d.stationary).collect()),
        EstimateDetector::Adaptive => {
            let path = cfg
                .svm_model
                .as_deref()
                .ok_or_else(|| Error::invalid("adaptive detection needs `svm_model` in the config"))?;
            let model = SvmModel::load(&relative_to(config_path, path))?;
            Ok(adaptive_detect(&trial.imu, &model, &cfg.thresholds, &cfg.shoe, cfg.interval)?.flags)
        }
        EstimateDetector::Lstm => {
            let path = cfg
                .lstm_model
                .as_deref()
                .ok_or_else(|| Error::invalid("LSTM detection needs `lstm_model` in the config"))?;
            let model = LstmModel::load(&relative_to(config_path, path))?;
            lstm::classify(&model, &trial.imu, cfg.gate)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            profile,
            motion,
            duration,
            seed,
            out,
        } => {
            let mut p: GaitProfile = match &profile {
                Some(path) => read_json(path)?,
                None => GaitProfile::preset(motion.into()),
            };
            if let Some(seed) = seed {
                p.seed = seed;
            }
            let trial = simulate(&p, duration)?;
            trial.save(&out)?;
            log::info!("wrote {} samples to {}", trial.imu.len(), out.display());
        }
        Command::Label {
            trial,
            detectors,
            config,
            out,
        } => {
            let cfg: LabelConfig = load_or_default(config.as_deref())?;
            let set = detectors
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<DetectorKind>>>()?;
            let record = TrialRecord::load(&trial)?;
            let result = label_trial(&record, &set, &cfg)?;
            result.save(&out, &record.imu.times())?;
            println!(
                "{} wins at threshold {:.6e} (ARMSE {:.4} m)",
                result.winning_detector, result.threshold, result.armse
            );
        }
        Command::TrainSvm { trials, config, out } => {
            let cfg: SvmJobConfig = load_or_default(config.as_deref())?;
            check_schema(cfg.schema_version, "SVM training config")?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (mut windows, mut labels) = (Vec::new(), Vec::new());
            for dir in &trials {
                let trial = TrialRecord::load(dir)?;
                let class = trial
                    .motion
                    .ok_or_else(|| Error::invalid(format!("{}: trial.json names no motion class", dir.display())))?;
                let w = extract_windows(
                    &trial.imu,
                    cfg.window_stride,
                    cfg.rotation_augmentation.then_some(&mut rng),
                )?;
                labels.extend(std::iter::repeat_n(class, w.len()));
                windows.extend(w);
            }
            let model = train_svm(&windows, &labels, &cfg.svm)?;
            model.save(&out)?;
            println!(
                "trained on {} windows, {} support vectors",
                windows.len(),
                model.support_vectors.len()
            );
        }
        Command::Classify {
            model,
            imu,
            interval,
            out,
        } => {
            if interval == 0 {
                return Err(Error::invalid("interval must be positive"));
            }
            let model = SvmModel::load(&model)?;
            let seq = ImuSequence::from_csv(&imu, None)?;
            let times = seq.times();
            let mut lines = vec!["t,motion".to_string()];
            for k in (WINDOW_LEN..=seq.len()).step_by(interval) {
                let w = make_motion_window(&seq, k - WINDOW_LEN, None)?;
                lines.push(format!("{},{}", times[k - 1], classify_motion(&model, &w).name()));
            }
            write_text(&out, &lines)?;
        }
        Command::TrainLstm {
            trials,
            validation,
            config,
            windows_per_trial,
            out,
        } => {
            let cfg: TrainConfig = load_or_default(config.as_deref())?;
            cfg.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let data = lstm_samples(&trials, cfg.window, windows_per_trial, &mut rng)?;
            let val = lstm_samples(&validation, cfg.window, windows_per_trial, &mut rng)?;
            let outcome = lstm::train(&data, &val, &cfg)?;
            outcome.model.save(&out)?;
            let best = outcome
                .best_epoch
                .checked_sub(1)
                .map_or(outcome.initial, |e| outcome.history[e]);
            println!(
                "best epoch {} of {}: validation loss {:.5}",
                outcome.best_epoch, cfg.epochs, best.validation_loss
            );
        }
        Command::ClassifyLstm { model, imu, gate, out } => {
            let model = LstmModel::load(&model)?;
            let seq = ImuSequence::from_csv(&imu, None)?;
            let flags = lstm::classify(&model, &seq, gate)?;
            write_labels_csv(&out, &seq.times(), &flags)?;
        }
        Command::Estimate {
            trial,
            detector,
            config,
            out,
        } => {
            let cfg: EstimateConfig = load_or_default(config.as_deref())?;
            check_schema(cfg.schema_version, "estimate config")?;
            let record = TrialRecord::load(&trial)?;
            let flags = detect(&record, detector, &cfg, config.as_deref())?;
            let traj = run_filter(&record.imu, &flags, &cfg.filter)?;
            traj.write_csv(&out)?;
        }
        Command::Retarget { input, spec, out } => {
            let spec: RetargetSpec = read_json(&spec)?;
            let seq = ImuSequence::from_csv(&input, Some(spec.source_rate))?;
            retarget(&seq, &spec)?.write_csv(&out)?;
        }
        Command::Evaluate { traj, gt, report } => {
            let est = Trajectory::read_csv(&traj)?;
            let gt = read_positions_csv(&gt)?;
            let r = evaluate(&est, &gt)?;
            write_json(&report, &r)?;
            println!(
                "ARMSE {:.4} m, loop closure {:.4} m over {:.1} m",
                r.armse, r.loop_closure_3d, r.path_length
            );
        }
    }
    Ok(())
}

fn write_text(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
