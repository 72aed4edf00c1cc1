//! Dense optical flow: the displacement field type, the `FLO1` file format,
//! a converter for the common learned-flow interchange layout, and the three
//! backends (classical pyramidal, precomputed file, synthetic ground truth).

mod augment;
mod classical;
mod correspond;
mod sampling;

pub use augment::{augment_flip, FlipAxis};
pub use classical::{classical_flow, ClassicalFlowParams};
pub use correspond::{flow_to_correspondence, CorrespondenceMap};
pub use sampling::{sample_matches, Match, MatchSet};

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::imagery::ImageFrame;
use crate::synth::GroundTruthMap;

const FLO1_MAGIC: &[u8; 4] = b"FLO1";
/// Magic float of the interchange `.flo` layout used by learned-flow tools.
const MIDDLEBURY_MAGIC: f32 = 202021.25;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("frames have different sizes: {0}x{1} vs {2}x{3}")]
    FrameSizeMismatch(usize, usize, usize, usize),
    #[error("flow file {path}: {reason}")]
    BadFile { path: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("no valid correspondences to sample from")]
    NoCorrespondences,
    #[error("target mask has {count} pixels; need at least 2 to sample negatives")]
    MaskTooSmall { count: usize },
    #[error("invalid sampling parameters: {reason}")]
    BadSampling { reason: String },
}

/// Which backend produced a flow field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowBackend {
    Classical,
    File,
    GroundTruth,
}

/// H×W per-pixel displacement field (dx, dy) in pixels.
///
/// Ground-truth fields additionally carry the exact absolute target
/// coordinates, so correspondence maps built from them reproduce the
/// generator's planes bit for bit instead of round-tripping through
/// `u + (map - u)` float arithmetic.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub backend: FlowBackend,
    dx: Vec<f32>,
    dy: Vec<f32>,
    absolute: Option<(Vec<f32>, Vec<f32>)>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize, backend: FlowBackend) -> Self {
        Self {
            width,
            height,
            backend,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
            absolute: None,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, (dx, dy): (f32, f32)) {
        let i = y * self.width + x;
        self.dx[i] = dx;
        self.dy[i] = dy;
    }

    /// Exact absolute target coordinate when the backend provides one.
    #[inline]
    pub fn absolute(&self, x: usize, y: usize) -> Option<(f32, f32)> {
        self.absolute
            .as_ref()
            .map(|(ax, ay)| (ax[y * self.width + x], ay[y * self.width + x]))
    }

    pub fn max_magnitude(&self) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(&dx, &dy)| ((dx as f64).powi(2) + (dy as f64).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Converts a generator ground-truth map into a flow field. The
    /// displacement is `mapping(u) - u`; the mapping itself is kept so later
    /// stages can recover it exactly.
    pub fn from_ground_truth(gt: &GroundTruthMap) -> Self {
        let (w, h) = (gt.width, gt.height);
        let mut f = FlowField::zeros(w, h, FlowBackend::GroundTruth);
        let mut ax = vec![0.0f32; w * h];
        let mut ay = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mx, my) = gt.mapped_f32(x, y);
                f.set(x, y, (mx - x as f32, my - y as f32));
                ax[y * w + x] = mx;
                ay[y * w + x] = my;
            }
        }
        f.absolute = Some((ax, ay));
        f
    }

    pub fn write_file(&self, path: &Path) -> Result<(), FlowError> {
        let mut buf = Vec::with_capacity(12 + self.dx.len() * 8);
        buf.extend_from_slice(FLO1_MAGIC);
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        for i in 0..self.dx.len() {
            buf.extend_from_slice(&self.dx[i].to_le_bytes());
            buf.extend_from_slice(&self.dy[i].to_le_bytes());
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|source| FlowError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn read_file(path: &Path) -> Result<Self, FlowError> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| FlowError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let bad = |reason: &str| FlowError::BadFile {
            path: path.display().to_string(),
            reason: reason.into(),
        };
        if bytes.len() < 12 || &bytes[0..4] != FLO1_MAGIC {
            return Err(bad("not a FLO1 file"));
        }
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = width * height;
        if bytes.len() != 12 + n * 8 {
            return Err(bad("truncated FLO1 payload"));
        }
        let mut flow = FlowField::zeros(width, height, FlowBackend::File);
        for i in 0..n {
            let o = 12 + i * 8;
            flow.dx[i] = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
            flow.dy[i] = f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap());
        }
        Ok(flow)
    }

    /// Reads the interchange `.flo` layout (float magic, i32 width, i32
    /// height, interleaved f32 pairs) produced by common learned-flow tools.
    pub fn read_middlebury(path: &Path) -> Result<Self, FlowError> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| FlowError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let bad = |reason: &str| FlowError::BadFile {
            path: path.display().to_string(),
            reason: reason.into(),
        };
        if bytes.len() < 12 {
            return Err(bad("too short"));
        }
        let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
        if magic != MIDDLEBURY_MAGIC {
            return Err(bad("bad magic"));
        }
        let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if width <= 0 || height <= 0 {
            return Err(bad("non-positive dimensions"));
        }
        let (w, h) = (width as usize, height as usize);
        if bytes.len() != 12 + w * h * 8 {
            return Err(bad("truncated payload"));
        }
        let mut flow = FlowField::zeros(w, h, FlowBackend::File);
        for i in 0..w * h {
            let o = 12 + i * 8;
            flow.dx[i] = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
            flow.dy[i] = f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap());
        }
        Ok(flow)
    }
}

/// Backend selector for [`estimate_flow`], carrying what each backend needs.
pub enum FlowRequest<'a> {
    Classical(&'a ClassicalFlowParams),
    File(&'a Path),
    GroundTruth(&'a GroundTruthMap),
}

/// Estimates dense flow from frame A to frame B with the chosen backend.
pub fn estimate_flow(
    frame_a: &ImageFrame,
    frame_b: &ImageFrame,
    backend: FlowRequest<'_>,
) -> Result<FlowField, FlowError> {
    if frame_a.width != frame_b.width || frame_a.height != frame_b.height {
        return Err(FlowError::FrameSizeMismatch(
            frame_a.width,
            frame_a.height,
            frame_b.width,
            frame_b.height,
        ));
    }
    match backend {
        FlowRequest::Classical(params) => Ok(classical_flow(frame_a, frame_b, params)),
        FlowRequest::File(path) => {
            let flow = FlowField::read_file(path)?;
            if flow.width != frame_a.width || flow.height != frame_a.height {
                return Err(FlowError::BadFile {
                    path: path.display().to_string(),
                    reason: format!(
                        "flow is {}x{} but frames are {}x{}",
                        flow.width, flow.height, frame_a.width, frame_a.height
                    ),
                });
            }
            Ok(flow)
        }
        FlowRequest::GroundTruth(gt) => Ok(FlowField::from_ground_truth(gt)),
    }
}
