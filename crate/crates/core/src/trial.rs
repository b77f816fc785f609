//! A motion trial: IMU data plus whatever ground truth is available.
//!
//! On disk a trial is a directory holding `imu.csv`, optional
//! `gt_positions.csv` and `gt_zv.csv`, and a small `trial.json` with the
//! nominal rate and motion label.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{self, ImuSequence, TimedPosition};

pub const IMU_FILE: &str = "imu.csv";
pub const GT_POSITIONS_FILE: &str = "gt_positions.csv";
pub const GT_ZV_FILE: &str = "gt_zv.csv";
pub const META_FILE: &str = "trial.json";

/// Motion classes distinguished by the motion classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionClass {
    Walk,
    Run,
    Stair,
}

impl MotionClass {
    pub const ALL: [MotionClass; 3] = [MotionClass::Walk, MotionClass::Run, MotionClass::Stair];

    pub fn name(&self) -> &'static str {
        match self {
            MotionClass::Walk => "walk",
            MotionClass::Run => "run",
            MotionClass::Stair => "stair",
        }
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk" => Ok(MotionClass::Walk),
            "run" => Ok(MotionClass::Run),
            "stair" | "stairs" => Ok(MotionClass::Stair),
            other => Err(Error::invalid(format!("unknown motion class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub imu: ImuSequence,
    /// Ground-truth positions, one per IMU sample for simulated trials.
    pub gt_positions: Option<Vec<TimedPosition>>,
    /// Ground-truth zero-velocity flags, one per IMU sample.
    pub gt_zv: Option<Vec<bool>>,
    pub motion: Option<MotionClass>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrialMeta {
    schema_version: u32,
    nominal_rate: f64,
    #[serde(default)]
    motion: Option<MotionClass>,
}

impl TrialRecord {
    pub fn new(imu: ImuSequence) -> Self {
        Self {
            imu,
            gt_positions: None,
            gt_zv: None,
            motion: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(zv) = &self.gt_zv {
            if zv.len() != self.imu.len() {
                return Err(Error::invalid(format!(
                    "{} zero-velocity labels for {} IMU samples",
                    zv.len(),
                    self.imu.len()
                )));
            }
        }
        if let Some(gt) = &self.gt_positions {
            if gt.is_empty() {
                return Err(Error::invalid("ground-truth position list is empty"));
            }
        }
        Ok(())
    }

    pub fn require_positions(&self) -> Result<&[TimedPosition]> {
        self.gt_positions
            .as_deref()
            .ok_or_else(|| Error::invalid("trial has no ground-truth positions"))
    }

    pub fn require_zv(&self) -> Result<&[bool]> {
        self.gt_zv
            .as_deref()
            .ok_or_else(|| Error::invalid("trial has no zero-velocity labels"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        self.imu.write_csv(&dir.join(IMU_FILE))?;
        if let Some(gt) = &self.gt_positions {
            imu::write_positions_csv(&dir.join(GT_POSITIONS_FILE), gt)?;
        }
        if let Some(zv) = &self.gt_zv {
            imu::write_labels_csv(&dir.join(GT_ZV_FILE), &self.imu.times(), zv)?;
        }
        let meta = TrialMeta {
            schema_version: 1,
            nominal_rate: self.imu.nominal_rate(),
            motion: self.motion,
        };
        crate::config::write_json(&dir.join(META_FILE), &meta)
    }

    /// Loads a trial directory. `trial.json` is optional; without it the rate is inferred.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: Option<TrialMeta> = if meta_path.exists() {
            Some(crate::config::read_json(&meta_path)?)
        } else {
            None
        };
        let imu = ImuSequence::from_csv(&dir.join(IMU_FILE), meta.as_ref().map(|m| m.nominal_rate))?;
        let gt_path = dir.join(GT_POSITIONS_FILE);
        let gt_positions = if gt_path.exists() {
            Some(imu::read_positions_csv(&gt_path)?)
        } else {
            None
        };
        let zv_path = dir.join(GT_ZV_FILE);
        let gt_zv = if zv_path.exists() {
            Some(imu::read_labels_csv(&zv_path)?.1)
        } else {
            None
        };
        let trial = Self {
            imu,
            gt_positions,
            gt_zv,
            motion: meta.and_then(|m| m.motion),
        };
        trial.validate()?;
        Ok(trial)
    }
}
