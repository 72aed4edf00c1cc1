//! Turning relative displacements into an absolute correspondence map with
//! validity flags.

use crate::flow::FlowField;
use crate::imagery::PixelCoord;
use crate::segment::ForegroundMask;

/// Per-pixel absolute target coordinates `O(u) = u + flow(u)` plus a
/// validity flag. A pixel is valid when it lies on the source mask, its
/// target is inside the image, the nearest target pixel is on the target
/// mask, and (when a backward field is supplied) the forward-backward
/// residual stays under the threshold.
#[derive(Debug, Clone)]
pub struct CorrespondenceMap {
    pub width: usize,
    pub height: usize,
    target_x: Vec<f32>,
    target_y: Vec<f32>,
    valid: Vec<bool>,
}

impl CorrespondenceMap {
    #[inline]
    pub fn target(&self, x: usize, y: usize) -> PixelCoord {
        let i = y * self.width + x;
        PixelCoord::new(self.target_x[i] as f64, self.target_y[i] as f64)
    }

    #[inline]
    pub fn target_f32(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.target_x[i], self.target_y[i])
    }

    #[inline]
    pub fn valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Row-major list of valid source pixels.
    pub fn valid_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.valid(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Builds the correspondence map for one frame pair.
///
/// `fb_check` is an optional backward (B to A) flow field; when present, a
/// pixel is invalidated unless `|flow(u) + fb(round(O(u)))| < fb_tau`.
pub fn flow_to_correspondence(
    flow: &FlowField,
    mask_a: &ForegroundMask,
    mask_b: &ForegroundMask,
    fb_check: Option<(&FlowField, f64)>,
) -> CorrespondenceMap {
    let (w, h) = (flow.width, flow.height);
    debug_assert_eq!((mask_a.width, mask_a.height), (w, h));
    debug_assert_eq!((mask_b.width, mask_b.height), (w, h));
    let mut target_x = vec![0.0f32; w * h];
    let mut target_y = vec![0.0f32; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = flow.get(x, y);
            // Ground-truth fields carry exact absolute targets; everything
            // else goes through u + flow(u).
            let (tx, ty) = flow
                .absolute(x, y)
                .unwrap_or((x as f32 + dx, y as f32 + dy));
            target_x[i] = tx;
            target_y[i] = ty;

            if !mask_a.get(x, y) {
                continue;
            }
            let target = PixelCoord::new(tx as f64, ty as f64);
            if !target.in_bounds(w, h) {
                continue;
            }
            let (rx, ry) = target.rounded();
            if !mask_b.get_i64(rx, ry) {
                continue;
            }
            if let Some((backward, tau)) = fb_check {
                let (bx, by) = backward.get(rx as usize, ry as usize);
                let rdx = dx as f64 + bx as f64;
                let rdy = dy as f64 + by as f64;
                if (rdx * rdx + rdy * rdy).sqrt() >= tau {
                    continue;
                }
            }
            valid[i] = true;
        }
    }
    CorrespondenceMap {
        width: w,
        height: h,
        target_x,
        target_y,
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowBackend;
    use crate::segment::MaskProvenance;
    use crate::synth::{compose_homography, ground_truth_map, Homography};

    fn full(w: usize, h: usize) -> ForegroundMask {
        ForegroundMask::full(w, h, MaskProvenance::GroundTruth)
    }

    #[test]
    fn zero_flow_full_masks_is_identity_all_valid() {
        let flow = FlowField::zeros(16, 12, FlowBackend::Classical);
        let corr = flow_to_correspondence(&flow, &full(16, 12), &full(16, 12), None);
        assert_eq!(corr.valid_count(), 16 * 12);
        for y in 0..12 {
            for x in 0..16 {
                let t = corr.target(x, y);
                assert_eq!((t.x, t.y), (x as f64, y as f64));
            }
        }
    }

    #[test]
    fn displacement_is_added() {
        let mut flow = FlowField::zeros(32, 32, FlowBackend::Classical);
        flow.set(10, 20, (3.0, 0.0));
        let corr = flow_to_correspondence(&flow, &full(32, 32), &full(32, 32), None);
        let t = corr.target(10, 20);
        assert_eq!((t.x, t.y), (13.0, 20.0));
    }

    #[test]
    fn forward_backward_residual_invalidates() {
        // Forward +5 px, backward -2 px: residual 3 > tau 1.
        let mut fwd = FlowField::zeros(32, 32, FlowBackend::Classical);
        let mut bwd = FlowField::zeros(32, 32, FlowBackend::Classical);
        for y in 0..32 {
            for x in 0..32 {
                fwd.set(x, y, (5.0, 0.0));
                bwd.set(x, y, (-2.0, 0.0));
            }
        }
        let corr = flow_to_correspondence(&fwd, &full(32, 32), &full(32, 32), Some((&bwd, 1.0)));
        assert!(!corr.valid(10, 10));
        // With a consistent backward field the pixel stays valid.
        let mut good_bwd = FlowField::zeros(32, 32, FlowBackend::Classical);
        for y in 0..32 {
            for x in 0..32 {
                good_bwd.set(x, y, (-5.0, 0.0));
            }
        }
        let corr2 =
            flow_to_correspondence(&fwd, &full(32, 32), &full(32, 32), Some((&good_bwd, 1.0)));
        assert!(corr2.valid(10, 10));
    }

    #[test]
    fn out_of_bounds_targets_are_invalid() {
        let mut flow = FlowField::zeros(8, 8, FlowBackend::Classical);
        for y in 0..8 {
            for x in 0..8 {
                flow.set(x, y, (6.0, 0.0));
            }
        }
        let corr = flow_to_correspondence(&flow, &full(8, 8), &full(8, 8), None);
        assert!(corr.valid(1, 4));
        assert!(!corr.valid(2, 4), "7+6=13 is outside an 8-wide image");
    }

    #[test]
    fn ground_truth_round_trip_is_bit_exact_on_visible_pixels() {
        let mask = full(48, 48);
        let h0 = Homography::identity();
        let h1 = compose_homography(7.0, 1.01, (1.3, -0.8), (0.0, 0.0), (24.0, 24.0)).unwrap();
        let gt = ground_truth_map(&h0, &h1, &mask, &mask, 0, 1);
        let flow = FlowField::from_ground_truth(&gt);
        let corr = flow_to_correspondence(&flow, &mask, &mask, None);
        for y in 0..48 {
            for x in 0..48 {
                if gt.visible(x, y) {
                    assert!(corr.valid(x, y));
                    assert_eq!(corr.target_f32(x, y), gt.mapped_f32(x, y));
                }
            }
        }
    }
}
