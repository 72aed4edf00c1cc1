//! Synthetic monocular video with exact projective ground truth.
//!
//! A textured foreground object moves over interchangeable backgrounds under
//! known per-frame homographies and brightness gains. Because the motion is
//! an exact image-plane transform, pixel correspondence between any two
//! frames is available analytically, which is what makes the evaluation
//! harness trustworthy.

mod assets;
mod gtmap;
mod homography;
mod render;
mod sequence;

pub use assets::{builtin_background, builtin_object};
pub use gtmap::{ground_truth_map, GroundTruthMap, GTM_FLAG_SOURCE_MASK_RESTRICTED};
pub use homography::{compose_homography, Homography, MIN_DETERMINANT};
pub use render::render_frame;
pub use sequence::{generate_sequence, FrameMotion, MotionScript, ObjectSpec, SynthConfig};

use thiserror::Error;

use crate::imagery::{GrayImage, ImageFrame};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate transform (determinant or scale factor {det:.3e})")]
    DegenerateTransform { det: f64 },
    #[error("invalid motion parameters: {reason}")]
    InvalidMotion { reason: String },
    #[error("object warped fully out of frame")]
    ObjectOutOfFrame,
    #[error("invalid textured object: {reason}")]
    InvalidObject { reason: String },
    #[error("invalid generator config: {reason}")]
    InvalidConfig { reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] crate::imagery::ImageError),
    #[error("script serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// A foreground object: RGB texture plus a binary alpha matte on the same
/// canvas. The matte decides which texture pixels exist at all.
#[derive(Debug, Clone)]
pub struct TexturedObject {
    pub texture: ImageFrame,
    pub alpha: GrayImage,
}

impl TexturedObject {
    pub fn new(texture: ImageFrame, alpha: GrayImage) -> Result<Self, SynthError> {
        if texture.width != alpha.width || texture.height != alpha.height {
            return Err(SynthError::InvalidObject {
                reason: format!(
                    "texture {}x{} and alpha {}x{} differ",
                    texture.width, texture.height, alpha.width, alpha.height
                ),
            });
        }
        if !alpha.data().iter().any(|&a| a > 0.0) {
            return Err(SynthError::InvalidObject {
                reason: "alpha matte is empty".into(),
            });
        }
        Ok(Self { texture, alpha })
    }

    pub fn width(&self) -> usize {
        self.texture.width
    }

    pub fn height(&self) -> usize {
        self.texture.height
    }
}
