//! PAC prediction sets for object detection and multi-object tracking.
//!
//! A prediction set `C_tau(x) = { y : f(x, y) >= tau }` is calibrated on
//! held-out data so that, with probability at least `1 - delta` over the
//! calibration draw, it misses the true label with probability at most
//! `epsilon`. The crate calibrates such sets for the proposal, presence and
//! location heads of a two-stage detector, composes them into detection
//! sets, and links detections across frames with calibrated edge sets.

pub mod binomial;
pub mod calibrate;
pub mod cli;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod io;
pub mod report;
pub mod sim;
pub mod tracking;

pub use binomial::{binom_cdf, k_star, Budget, RiskBudget};
pub use calibrate::{calibrate_threshold, empirical_error, CalibrationRecord, Threshold};
pub use error::{Error, Result};
pub use geometry::{iou, same_box, BoundingBox};
