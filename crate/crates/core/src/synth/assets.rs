//! Procedural stock assets: two object shapes and two backgrounds.
//!
//! Everything is generated from a seed so datasets are reproducible without
//! shipping binary fixtures. The "drill" object is elongated with moderate
//! texture; the "hulk" object is blobby with strong high-frequency texture.
//! Backgrounds mirror the two-background protocol: one flat, one cluttered.

use rand::Rng;

use crate::imagery::{GrayImage, ImageFrame};
use crate::rng::rng_from;
use crate::synth::{SynthError, TexturedObject};

/// Builds a named builtin object on a `size`×`size` canvas.
pub fn builtin_object(id: &str, size: usize, seed: u64) -> Result<TexturedObject, SynthError> {
    match id {
        "drill" => Ok(drill(size, seed)),
        "hulk" => Ok(hulk(size, seed)),
        other => Err(SynthError::InvalidConfig {
            reason: format!("unknown builtin object '{other}' (expected 'drill' or 'hulk')"),
        }),
    }
}

/// Builds a named builtin background at frame resolution.
pub fn builtin_background(
    id: &str,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<ImageFrame, SynthError> {
    match id {
        "flat" => Ok(flat_background(width, height)),
        "cluttered" => Ok(cluttered_background(width, height, seed)),
        other => Err(SynthError::InvalidConfig {
            reason: format!("unknown builtin background '{other}' (expected 'flat' or 'cluttered')"),
        }),
    }
}

/// Elongated tool-like shape: a capsule body with a wider head block.
/// Texture is an axial color ramp with stripes and speckle so optical flow
/// and keypoint detection have gradients to work with.
fn drill(size: usize, seed: u64) -> TexturedObject {
    let mut rng = rng_from(seed, &[0x0b1ec7]);
    let s = size as f64;
    let cy = s * 0.5;
    let body_half_len = s * 0.38;
    let body_half_wid = s * 0.10;
    let head_x0 = s * 0.58;
    let head_half = s * 0.17;

    let mut alpha = GrayImage::new(size, size);
    let mut texture = ImageFrame::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let fx = x as f64;
            let fy = y as f64;
            // Capsule along the x axis, centered.
            let dx = (fx - s * 0.5).abs() - body_half_len;
            let axial = dx.max(0.0);
            let capsule = (axial * axial + (fy - cy) * (fy - cy)).sqrt() <= body_half_wid;
            // Head block near the right end.
            let head = fx >= head_x0
                && fx <= head_x0 + s * 0.22
                && (fy - cy).abs() <= head_half;
            let inside = capsule || head;
            if inside {
                alpha.set(x, y, 1.0);
                let t = (fx / s) as f32;
                let stripe = if ((fy / (s * 0.06)).floor() as i64) % 2 == 0 {
                    0.08
                } else {
                    -0.08
                };
                let speckle: f32 = rng.gen_range(-0.15..0.15);
                let r = (0.75 - 0.45 * t + stripe + speckle).clamp(0.05, 1.0);
                let g = (0.35 + 0.25 * t - stripe + speckle * 0.5).clamp(0.05, 1.0);
                let b = (0.20 + 0.55 * t + speckle).clamp(0.05, 1.0);
                texture.set(x, y, [r, g, b]);
            } else {
                // Draw from the stream anyway so the texture of the matte
                // region does not depend on the shape test order.
                let _ = rng.gen_range(-0.15..0.15f32);
            }
        }
    }
    TexturedObject::new(texture, alpha).expect("builtin drill is non-empty")
}

/// Blobby union of ellipses with strong multi-scale color noise.
fn hulk(size: usize, seed: u64) -> TexturedObject {
    let mut rng = rng_from(seed, &[0x481c]);
    let s = size as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = vec![
        (0.50, 0.40, 0.30, 0.26),
        (0.50, 0.72, 0.20, 0.22),
        (0.30, 0.52, 0.14, 0.18),
        (0.70, 0.52, 0.14, 0.18),
    ];
    let mut alpha = GrayImage::new(size, size);
    let mut texture = ImageFrame::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let fx = x as f64 / s;
            let fy = y as f64 / s;
            let inside = blobs.iter().any(|&(cx, cy, rx, ry)| {
                let ex = (fx - cx) / rx;
                let ey = (fy - cy) / ry;
                ex * ex + ey * ey <= 1.0
            });
            let n1: f32 = rng.gen_range(-0.22..0.22);
            let n2: f32 = rng.gen_range(-0.22..0.22);
            if inside {
                alpha.set(x, y, 1.0);
                let cell = (((x / 5) + (y / 5)) % 2) as f32 * 0.12;
                let r = (0.25 + cell + n1).clamp(0.05, 1.0);
                let g = (0.60 + cell + n2).clamp(0.05, 1.0);
                let b = (0.30 - cell + n1 * 0.5).clamp(0.05, 1.0);
                texture.set(x, y, [r, g, b]);
            }
        }
    }
    TexturedObject::new(texture, alpha).expect("builtin hulk is non-empty")
}

/// Nearly uniform background with a faint large-scale gradient.
fn flat_background(width: usize, height: usize) -> ImageFrame {
    ImageFrame::from_fn(width, height, |x, y| {
        let g = 0.55 + 0.05 * (x as f32 / width as f32) - 0.03 * (y as f32 / height as f32);
        [g, g * 0.98, g * 0.94]
    })
}

/// Cluttered background: seeded colored rectangles over noise.
fn cluttered_background(width: usize, height: usize, seed: u64) -> ImageFrame {
    let mut rng = rng_from(seed, &[0xbac6]);
    let mut img = ImageFrame::from_fn(width, height, |_, _| {
        [0.0; 3] // filled below; placeholder to own the buffer
    });
    for y in 0..height {
        for x in 0..width {
            let n: f32 = rng.gen_range(0.25..0.45);
            img.set(x, y, [n, n, n]);
        }
    }
    let n_rects = 40;
    for _ in 0..n_rects {
        let rw = rng.gen_range(width / 16..width / 3);
        let rh = rng.gen_range(height / 16..height / 3);
        let x0 = rng.gen_range(0..width.saturating_sub(rw).max(1));
        let y0 = rng.gen_range(0..height.saturating_sub(rh).max(1));
        let color = [
            rng.gen_range(0.1..0.9f32),
            rng.gen_range(0.1..0.9f32),
            rng.gen_range(0.1..0.9f32),
        ];
        for y in y0..(y0 + rh).min(height) {
            for x in x0..(x0 + rw).min(width) {
                let base = img.get(x, y);
                img.set(x, y, [
                    0.8 * color[0] + 0.2 * base[0],
                    0.8 * color[1] + 0.2 * base[1],
                    0.8 * color[2] + 0.2 * base[2],
                ]);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_objects_are_valid_and_deterministic() {
        for id in ["drill", "hulk"] {
            let a = builtin_object(id, 56, 9).unwrap();
            let b = builtin_object(id, 56, 9).unwrap();
            assert_eq!(a.texture, b.texture);
            assert_eq!(a.alpha, b.alpha);
            assert!(a.alpha.data().iter().any(|&v| v > 0.0));
        }
        assert!(builtin_object("teapot", 32, 0).is_err());
    }

    #[test]
    fn drill_is_elongated() {
        let obj = builtin_object("drill", 64, 1).unwrap();
        // Bounding box should be much wider than tall.
        let (mut x0, mut x1, mut y0, mut y1) = (64usize, 0usize, 64usize, 0usize);
        for y in 0..64 {
            for x in 0..64 {
                if obj.alpha.get(x, y) > 0.0 {
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
        }
        assert!((x1 - x0) as f64 > 1.5 * (y1 - y0) as f64);
    }

    #[test]
    fn backgrounds_differ() {
        let f = builtin_background("flat", 48, 48, 3).unwrap();
        let c = builtin_background("cluttered", 48, 48, 3).unwrap();
        assert_ne!(f, c);
        assert!(builtin_background("void", 48, 48, 3).is_err());
    }
}
