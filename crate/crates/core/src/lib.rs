// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod config;
pub mod detectors;
pub mod error;
pub mod eskf;
pub mod imu;
pub mod lstm;
pub mod metrics;
pub mod motion_adaptive;
pub mod quat;
pub mod sim;
pub mod threshold_opt;
pub mod trial;

pub use error::{Error, Result};
