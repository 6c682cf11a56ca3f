//! Compound figure dataset engineering.
//!
//! - [`simulator`]: synthesizes annotated pseudo compound figures from
//!   single-image pools, keeping each subfigure's aspect ratio.
//! - [`side_loss`]: reference side loss, its subgradient and the loss
//!   weighting scheme.
//! - [`evaluator`]: COCO-style AP with 101-point interpolation.
//! - [`fusion`]: weighted boxes fusion for model ensembles.
//! - [`separator`]: a rule-based whitespace-cut separator, so that
//!   simulate, separate and evaluate run end to end without a network.

pub mod config;
pub mod error;
pub mod evaluator;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod separator;
pub mod side_loss;
pub mod simulator;

pub use config::ToolConfig;
pub use error::{Error, ErrorCategory, Result};
pub use formats::{Detection, GroundTruth, YoloLabel};
pub use geometry::{iou, BBox, ClassLabel, RngHandle};
