//! Coarse-to-fine pyramidal patch-based dense flow.
//!
//! For every pixel the displacement is refined with iterative least-squares
//! over a local window (gradients from the source frame, residuals against a
//! bilinearly warped target), starting from the upsampled estimate of the
//! next-coarser pyramid level.

use serde::{Deserialize, Serialize};

use crate::flow::{FlowBackend, FlowField};
use crate::imagery::{GrayImage, ImageFrame};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalFlowParams {
    /// Number of pyramid levels including full resolution.
    pub pyramid_levels: usize,
    /// Odd window side length for the local least-squares fit.
    pub window: usize,
    /// Refinement iterations per pixel per level.
    pub iterations: usize,
    /// Minimum eigenvalue of the structure tensor below which a pixel keeps
    /// its propagated estimate instead of refining.
    pub min_eigenvalue: f64,
}

impl Default for ClassicalFlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 4,
            window: 9,
            iterations: 4,
            min_eigenvalue: 1e-4,
        }
    }
}

pub fn classical_flow(
    frame_a: &ImageFrame,
    frame_b: &ImageFrame,
    params: &ClassicalFlowParams,
) -> FlowField {
    let gray_a = frame_a.to_gray();
    let gray_b = frame_b.to_gray();
    let levels = build_pyramid(&gray_a, params.pyramid_levels)
        .into_iter()
        .zip(build_pyramid(&gray_b, params.pyramid_levels))
        .collect::<Vec<_>>();

    let mut flow: Option<FlowField> = None;
    for (a, b) in levels.iter().rev() {
        let mut level_flow = match flow.take() {
            Some(prev) => upsample_flow(&prev, a.width, a.height),
            None => FlowField::zeros(a.width, a.height, FlowBackend::Classical),
        };
        refine_level(a, b, &mut level_flow, params);
        flow = Some(level_flow);
    }
    flow.expect("at least one pyramid level")
}

fn build_pyramid(img: &GrayImage, levels: usize) -> Vec<GrayImage> {
    let mut out = vec![img.clone()];
    for _ in 1..levels.max(1) {
        let prev = out.last().unwrap();
        if prev.width < 16 || prev.height < 16 {
            break;
        }
        out.push(prev.downsample2());
    }
    out
}

fn upsample_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let mut out = FlowField::zeros(width, height, FlowBackend::Classical);
    let sx = flow.width as f64 / width as f64;
    let sy = flow.height as f64 / height as f64;
    for y in 0..height {
        for x in 0..width {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let fy = (y as f64 + 0.5) * sy - 0.5;
            let (dx, dy) = sample_flow_bilinear(flow, fx, fy);
            out.set(x, y, (dx / sx as f32, dy / sy as f32));
        }
    }
    out
}

fn sample_flow_bilinear(flow: &FlowField, x: f64, y: f64) -> (f32, f32) {
    let xc = x.clamp(0.0, (flow.width - 1) as f64);
    let yc = y.clamp(0.0, (flow.height - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(flow.width - 1);
    let y1 = (y0 + 1).min(flow.height - 1);
    let fx = (xc - x0 as f64) as f32;
    let fy = (yc - y0 as f64) as f32;
    let (a, b) = (flow.get(x0, y0), flow.get(x1, y0));
    let (c, d) = (flow.get(x0, y1), flow.get(x1, y1));
    let top = (a.0 * (1.0 - fx) + b.0 * fx, a.1 * (1.0 - fx) + b.1 * fx);
    let bot = (c.0 * (1.0 - fx) + d.0 * fx, c.1 * (1.0 - fx) + d.1 * fx);
    (
        top.0 * (1.0 - fy) + bot.0 * fy,
        top.1 * (1.0 - fy) + bot.1 * fy,
    )
}

fn refine_level(a: &GrayImage, b: &GrayImage, flow: &mut FlowField, params: &ClassicalFlowParams) {
    let (w, h) = (a.width, a.height);
    let r = (params.window / 2) as i64;
    let clamp_get = |img: &GrayImage, x: i64, y: i64| -> f32 {
        let xc = x.clamp(0, w as i64 - 1) as usize;
        let yc = y.clamp(0, h as i64 - 1) as usize;
        img.get(xc, yc)
    };

    let mut grads: Vec<(f32, f32)> = Vec::with_capacity(params.window * params.window);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            // Structure tensor from source-frame central differences.
            let (mut gxx, mut gxy, mut gyy) = (0.0f64, 0.0f64, 0.0f64);
            grads.clear();
            for wy in -r..=r {
                for wx in -r..=r {
                    let ix = 0.5 * (clamp_get(a, x + wx + 1, y + wy) - clamp_get(a, x + wx - 1, y + wy));
                    let iy = 0.5 * (clamp_get(a, x + wx, y + wy + 1) - clamp_get(a, x + wx, y + wy - 1));
                    gxx += (ix * ix) as f64;
                    gxy += (ix * iy) as f64;
                    gyy += (iy * iy) as f64;
                    grads.push((ix, iy));
                }
            }
            let tr = gxx + gyy;
            let det = gxx * gyy - gxy * gxy;
            let min_eig = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
            if min_eig < params.min_eigenvalue {
                continue;
            }
            let inv_det = 1.0 / (det.max(1e-12));
            let (u0, v0) = flow.get(x as usize, y as usize);
            let (mut u, mut v) = (u0 as f64, v0 as f64);
            for _ in 0..params.iterations {
                let (mut bx, mut by) = (0.0f64, 0.0f64);
                let mut gi = 0;
                for wy in -r..=r {
                    for wx in -r..=r {
                        let src = clamp_get(a, x + wx, y + wy);
                        let tx = (x + wx) as f64 + u;
                        let ty = (y + wy) as f64 + v;
                        let tgt = b.sample_bilinear(tx, ty);
                        let e = (src - tgt) as f64;
                        let (ix, iy) = grads[gi];
                        gi += 1;
                        bx += e * ix as f64;
                        by += e * iy as f64;
                    }
                }
                let du = (gyy * bx - gxy * by) * inv_det;
                let dv = (gxx * by - gxy * bx) * inv_det;
                u += du;
                v += dv;
                if du * du + dv * dv < 1e-6 {
                    break;
                }
            }
            flow.set(x as usize, y as usize, (u as f32, v as f32));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::builtin_background;

    fn shifted_right(img: &ImageFrame, shift: usize) -> ImageFrame {
        // Crop-style shift: pixels entering on the left replicate column 0.
        ImageFrame::from_fn(img.width, img.height, |x, y| {
            let sx = x.saturating_sub(shift);
            img.get(sx, y)
        })
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let img = builtin_background("cluttered", 64, 64, 5).unwrap();
        let flow = classical_flow(&img, &img, &ClassicalFlowParams::default());
        assert!(flow.max_magnitude() < 0.25, "max {}", flow.max_magnitude());
    }

    #[test]
    fn integer_translation_is_recovered() {
        let img = builtin_background("cluttered", 96, 96, 6).unwrap();
        let moved = shifted_right(&img, 3);
        let flow = classical_flow(&img, &moved, &ClassicalFlowParams::default());
        // Median over the interior (shift is undefined at the left border).
        let mut dxs = Vec::new();
        let mut dys = Vec::new();
        for y in 8..88 {
            for x in 8..88 {
                let (dx, dy) = flow.get(x, y);
                dxs.push(dx);
                dys.push(dy);
            }
        }
        dxs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med_dx = dxs[dxs.len() / 2];
        let med_dy = dys[dys.len() / 2];
        assert!((med_dx - 3.0).abs() < 0.5, "median dx {med_dx}");
        assert!(med_dy.abs() < 0.5, "median dy {med_dy}");
    }
}
