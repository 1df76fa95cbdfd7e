//! Invertible arbitrary-scale image rescaling.
//!
//! A coupling backbone maps an HR image to a visually plausible LR image
//! plus a latent that is discarded; the inverse restores the HR image from
//! the LR image alone.

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod resample;
pub mod selfcheck;
pub mod split;
pub mod synthetic;
pub mod trainer;

pub use backbone::{Backbone, BackboneConfig, EncodingMode};
pub use config::{LatentMode, TrainConfig};
pub use error::{Error, Result};
pub use image::Image;
pub use resample::{Direction, ResampleMethod, ScalePair};
