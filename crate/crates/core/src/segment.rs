//! Foreground masks.
//!
//! The pipeline treats segmentation as an interchangeable input: masks come
//! from synthetic ground truth, from precomputed files, or from a
//! motion-magnitude fallback. No neural segmenter is bundled.

use std::path::Path;

use thiserror::Error;

use crate::flow::FlowField;

/// Connectivity used for component analysis in [`motion_mask`].
pub const MOTION_MASK_CONNECTIVITY: usize = 4;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("mask {path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
    #[error("mask size {got_w}x{got_h} does not match frame size {want_w}x{want_h}")]
    SizeMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("no pixel exceeds the motion threshold {threshold_px}")]
    EmptyMotionMask { threshold_px: f64 },
    #[error("negative motion threshold {threshold_px}")]
    NegativeThreshold { threshold_px: f64 },
}

/// Where a mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskProvenance {
    GroundTruth,
    File,
    Motion,
}

/// H×W binary foreground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundMask {
    pub width: usize,
    pub height: usize,
    pub provenance: MaskProvenance,
    data: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(width: usize, height: usize, provenance: MaskProvenance) -> Self {
        Self {
            width,
            height,
            provenance,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize, provenance: MaskProvenance) -> Self {
        Self {
            width,
            height,
            provenance,
            data: vec![true; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Bounds-checked lookup for signed coordinates; out of bounds is false.
    #[inline]
    pub fn get_i64(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.get(x as usize, y as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Row-major list of foreground pixel coordinates.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn flipped(&self, horizontal: bool) -> ForegroundMask {
        let mut out = ForegroundMask::new(self.width, self.height, self.provenance);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = if horizontal {
                    self.get(self.width - 1 - x, y)
                } else {
                    self.get(x, self.height - 1 - y)
                };
                out.set(x, y, v);
            }
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<(), SegmentError> {
        let mut buf = image::GrayImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = if self.get(x, y) { 255 } else { 0 };
                buf.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
        buf.save(path).map_err(|source| SegmentError::Image {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Loads a mask from a single-channel (or gray-convertible) 8-bit image.
/// Pixels above 127 become foreground. `expect_size` guards against pairing
/// a mask with the wrong frame. An all-background file is not an error here;
/// the trainer warns and skips such frames.
pub fn load_mask(
    path: &Path,
    expect_size: Option<(usize, usize)>,
) -> Result<ForegroundMask, SegmentError> {
    let img = image::open(path)
        .map_err(|source| SegmentError::Image {
            path: path.display().to_string(),
            source,
        })?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if let Some((want_w, want_h)) = expect_size {
        if w != want_w || h != want_h {
            return Err(SegmentError::SizeMismatch {
                got_w: w,
                got_h: h,
                want_w,
                want_h,
            });
        }
    }
    let mut mask = ForegroundMask::new(w, h, MaskProvenance::File);
    for y in 0..h {
        for x in 0..w {
            mask.set(x, y, img.get_pixel(x as u32, y as u32).0[0] > 127);
        }
    }
    Ok(mask)
}

/// Derives a foreground mask from flow magnitude: keep the largest
/// 4-connected component of pixels whose displacement exceeds
/// `threshold_px`. Errors if nothing moves.
pub fn motion_mask(flow: &FlowField, threshold_px: f64) -> Result<ForegroundMask, SegmentError> {
    if threshold_px < 0.0 {
        return Err(SegmentError::NegativeThreshold { threshold_px });
    }
    let (w, h) = (flow.width, flow.height);
    let mut moving = vec![false; w * h];
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = flow.get(x, y);
            let mag = ((dx as f64).powi(2) + (dy as f64).powi(2)).sqrt();
            if mag > threshold_px {
                moving[y * w + x] = true;
                any = true;
            }
        }
    }
    if !any {
        return Err(SegmentError::EmptyMotionMask { threshold_px });
    }

    // Label 4-connected components with BFS; keep the largest.
    let mut label = vec![0u32; w * h];
    let mut next = 1u32;
    let mut best = (0u32, 0usize);
    let mut queue = std::collections::VecDeque::new();
    for start in 0..w * h {
        if !moving[start] || label[start] != 0 {
            continue;
        }
        let id = next;
        next += 1;
        let mut size = 0usize;
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut push = |nx: usize, ny: usize| {
                let j = ny * w + nx;
                if moving[j] && label[j] == 0 {
                    label[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if x + 1 < w {
                push(x + 1, y);
            }
            if y > 0 {
                push(x, y - 1);
            }
            if y + 1 < h {
                push(x, y + 1);
            }
        }
        if size > best.1 {
            best = (id, size);
        }
    }

    let mut mask = ForegroundMask::new(w, h, MaskProvenance::Motion);
    for i in 0..w * h {
        if label[i] == best.0 {
            mask.set(i % w, i / w, true);
        }
    }
    Ok(mask)
}
