//! flowdesc: self-supervised dense pixel descriptors from monocular video.
//!
//! The pipeline turns optical-flow correspondences between consecutive video
//! frames into contrastive training signal for a fully convolutional network
//! that maps an RGB image to a per-pixel descriptor field with unit L2 norm.
//! Corresponding pixels end up close in descriptor space, everything else on
//! the object is pushed at least a margin apart.
//!
//! Crate layout mirrors the pipeline stages:
//!
//! - [`synth`]: synthetic video generator with exact projective ground truth
//! - [`segment`]: foreground masks (ground-truth, file-based, or motion-based)
//! - [`flow`]: optical flow backends, correspondence maps, match sampling
//! - [`net`]: the descriptor network and the pixelwise contrastive loss
//! - [`train`]: the training loop, checkpoints, logs
//! - [`eval`]: the false-positive-percentile metric and the four tests
//! - [`dataset`]: on-disk dataset access and train/test splits
//! - [`config`]: the shared JSON configuration

pub mod config;
pub mod dataset;
pub mod eval;
pub mod flow;
pub mod imagery;
pub mod net;
pub mod rng;
pub mod segment;
pub mod synth;
pub mod train;

pub use imagery::{ImageFrame, PixelCoord};
pub use segment::ForegroundMask;
