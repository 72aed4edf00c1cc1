//! Frame compositing: warp the object by a homography, apply a brightness
//! gain, and blend it over a background.

use crate::imagery::{GrayImage, ImageFrame, PixelCoord};
use crate::segment::{ForegroundMask, MaskProvenance};
use crate::synth::{Homography, SynthError, TexturedObject};

/// Mask threshold on the warped alpha matte.
const ALPHA_THRESHOLD: f32 = 0.5;

/// Renders one frame.
///
/// `pose` maps rest-pose frame coordinates to output coordinates; the object
/// texture sits centered in the rest pose (integer offset, so an identity
/// pose reproduces the texture exactly). Warping is backward with bilinear
/// sampling; object pixels are multiplied by `gain` and clamped to [0,1];
/// the mask is the warped alpha thresholded at 0.5.
pub fn render_frame(
    object: &TexturedObject,
    background: &ImageFrame,
    pose: &Homography,
    gain: f32,
) -> Result<(ImageFrame, ForegroundMask), SynthError> {
    let (w, h) = (background.width, background.height);
    // Integer rest-pose offset of the object canvas within the frame.
    let off_x = (w as i64 - object.width() as i64) / 2;
    let off_y = (h as i64 - object.height() as i64) / 2;
    let inv = pose.inverse();

    let mut frame = background.clone();
    let mut mask = ForegroundMask::new(w, h, MaskProvenance::GroundTruth);
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            let rest = inv.apply(PixelCoord::new(x as f64, y as f64));
            let ox = rest.x - off_x as f64;
            let oy = rest.y - off_y as f64;
            let a = sample_zero_padded_gray(&object.alpha, ox, oy);
            if a <= 0.0 {
                continue;
            }
            let tex = sample_zero_padded_rgb(&object.texture, ox, oy);
            let bg = frame.get(x, y);
            let mut out = [0.0f32; 3];
            for c in 0..3 {
                let obj = (gain * tex[c]).clamp(0.0, 1.0);
                out[c] = bg[c] * (1.0 - a) + obj * a;
            }
            frame.set(x, y, out);
            if a > ALPHA_THRESHOLD {
                mask.set(x, y, true);
                any = true;
            }
        }
    }
    if !any {
        return Err(SynthError::ObjectOutOfFrame);
    }
    Ok((frame, mask))
}

/// Bilinear sample treating everything outside the canvas as zero.
fn sample_zero_padded_gray(img: &GrayImage, x: f64, y: f64) -> f32 {
    let (w, h) = (img.width as i64, img.height as i64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let at = |xi: i64, yi: i64| -> f32 {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            0.0
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bot = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

fn sample_zero_padded_rgb(img: &ImageFrame, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = (img.width as i64, img.height as i64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let at = |xi: i64, yi: i64| -> [f32; 3] {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            [0.0; 3]
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    let p00 = at(x0, y0);
    let p10 = at(x0 + 1, y0);
    let p01 = at(x0, y0 + 1);
    let p11 = at(x0 + 1, y0 + 1);
    let mut out = [0.0f32; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{builtin_object, compose_homography};

    fn black(w: usize, h: usize) -> ImageFrame {
        ImageFrame::new(w, h)
    }

    #[test]
    fn identity_pose_reproduces_texture_inside_alpha() {
        let obj = builtin_object("drill", 40, 5).unwrap();
        let bg = black(64, 64);
        let (frame, mask) = render_frame(&obj, &bg, &Homography::identity(), 1.0).unwrap();
        let (off_x, off_y) = ((64 - 40) / 2, (64 - 40) / 2);
        for y in 0..40 {
            for x in 0..40 {
                let inside = obj.alpha.get(x, y) > 0.5;
                let got = frame.get(x + off_x, y + off_y);
                if inside {
                    assert_eq!(got, obj.texture.get(x, y));
                    assert!(mask.get(x + off_x, y + off_y));
                } else {
                    assert_eq!(got, [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn gain_halves_object_pixels_exactly() {
        let obj = builtin_object("drill", 40, 5).unwrap();
        let bg = black(64, 64);
        let (full, _) = render_frame(&obj, &bg, &Homography::identity(), 1.0).unwrap();
        let (half, mask) = render_frame(&obj, &bg, &Homography::identity(), 0.5).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                if mask.get(x, y) {
                    let f = full.get(x, y);
                    let g = half.get(x, y);
                    for c in 0..3 {
                        assert_eq!(g[c], 0.5 * f[c]);
                    }
                }
            }
        }
    }

    #[test]
    fn translation_shifts_mask_centroid() {
        let obj = builtin_object("drill", 40, 5).unwrap();
        let bg = black(96, 96);
        let id = Homography::identity();
        let t5 = compose_homography(0.0, 1.0, (5.0, 0.0), (0.0, 0.0), (48.0, 48.0)).unwrap();
        let (_, mask0) = render_frame(&obj, &bg, &id, 1.0).unwrap();
        let (_, mask1) = render_frame(&obj, &bg, &t5, 1.0).unwrap();

        // Independent pixel-scan centroid oracle.
        let centroid = |m: &ForegroundMask| -> (f64, f64) {
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for y in 0..m.height {
                for x in 0..m.width {
                    if m.get(x, y) {
                        sx += x as f64;
                        sy += y as f64;
                        n += 1.0;
                    }
                }
            }
            (sx / n, sy / n)
        };
        let (cx0, cy0) = centroid(&mask0);
        let (cx1, cy1) = centroid(&mask1);
        assert!((cx1 - cx0 - 5.0).abs() < 0.5, "dx = {}", cx1 - cx0);
        assert!((cy1 - cy0).abs() < 0.5);
    }

    #[test]
    fn object_out_of_frame_is_an_error() {
        let obj = builtin_object("drill", 20, 5).unwrap();
        let bg = black(64, 64);
        let far = compose_homography(0.0, 1.0, (500.0, 0.0), (0.0, 0.0), (32.0, 32.0)).unwrap();
        assert!(matches!(
            render_frame(&obj, &bg, &far, 1.0),
            Err(SynthError::ObjectOutOfFrame)
        ));
    }
}
