//! Exact pixel correspondence between two frames of a synthetic sequence,
//! plus the `GTM1` binary file format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::imagery::PixelCoord;
use crate::segment::ForegroundMask;
use crate::synth::{Homography, SynthError};

/// Flag bit: the visibility plane is restricted to the source foreground
/// mask (set by everything this crate writes).
pub const GTM_FLAG_SOURCE_MASK_RESTRICTED: u32 = 1;

const GTM_MAGIC: &[u8; 4] = b"GTM1";

/// Per-pixel target coordinates for one ordered frame pair, with a
/// visibility plane. A pixel is visible iff it lies on the source mask, its
/// mapped coordinate is inside the target image, and the nearest target
/// pixel is on the target mask.
#[derive(Debug, Clone)]
pub struct GroundTruthMap {
    pub width: usize,
    pub height: usize,
    pub src_index: usize,
    pub tgt_index: usize,
    pub flags: u32,
    map_x: Vec<f32>,
    map_y: Vec<f32>,
    visible: Vec<u8>,
    /// Present when built analytically; lets callers evaluate the mapping at
    /// continuous coordinates (file round trips drop it).
    poses: Option<(Homography, Homography)>,
}

impl GroundTruthMap {
    #[inline]
    pub fn mapped(&self, x: usize, y: usize) -> PixelCoord {
        let i = y * self.width + x;
        PixelCoord::new(self.map_x[i] as f64, self.map_y[i] as f64)
    }

    /// Raw stored f32 target coordinate (exact file/plane contents).
    #[inline]
    pub fn mapped_f32(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.map_x[i], self.map_y[i])
    }

    #[inline]
    pub fn visible(&self, x: usize, y: usize) -> bool {
        self.visible[y * self.width + x] != 0
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v != 0).count()
    }

    /// Evaluates the underlying projective mapping at a continuous
    /// coordinate. Only available on analytically constructed maps.
    pub fn eval_at(&self, p: PixelCoord) -> Option<PixelCoord> {
        let (h_src, h_tgt) = self.poses.as_ref()?;
        Some(h_tgt.apply(h_src.inverse().apply(p)))
    }

    pub fn write_file(&self, path: &Path) -> Result<(), SynthError> {
        let mut buf = Vec::with_capacity(16 + self.map_x.len() * 9);
        buf.extend_from_slice(GTM_MAGIC);
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&self.flags.to_le_bytes());
        for i in 0..self.map_x.len() {
            buf.extend_from_slice(&self.map_x[i].to_le_bytes());
            buf.extend_from_slice(&self.map_y[i].to_le_bytes());
        }
        buf.extend_from_slice(&self.visible);
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|source| SynthError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn read_file(path: &Path, src_index: usize, tgt_index: usize) -> Result<Self, SynthError> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| SynthError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let bad = |reason: &str| SynthError::InvalidConfig {
            reason: format!("{}: {reason}", path.display()),
        };
        if bytes.len() < 16 || &bytes[0..4] != GTM_MAGIC {
            return Err(bad("not a GTM1 file"));
        }
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let flags = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let n = width * height;
        let expected = 16 + n * 8 + n;
        if bytes.len() != expected {
            return Err(bad("truncated GTM1 payload"));
        }
        let mut map_x = Vec::with_capacity(n);
        let mut map_y = Vec::with_capacity(n);
        for i in 0..n {
            let o = 16 + i * 8;
            map_x.push(f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()));
            map_y.push(f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap()));
        }
        let visible = bytes[16 + n * 8..].to_vec();
        Ok(Self {
            width,
            height,
            src_index,
            tgt_index,
            flags,
            map_x,
            map_y,
            visible,
            poses: None,
        })
    }
}

/// Builds the exact correspondence map between frames posed by `h_src` and
/// `h_tgt`: every source pixel `u` maps to `h_tgt(h_src⁻¹(u))`.
pub fn ground_truth_map(
    h_src: &Homography,
    h_tgt: &Homography,
    mask_src: &ForegroundMask,
    mask_tgt: &ForegroundMask,
    src_index: usize,
    tgt_index: usize,
) -> GroundTruthMap {
    let (w, h) = (mask_src.width, mask_src.height);
    let relative = h_tgt
        .compose(&h_src.inverse())
        .expect("composition of invertible homographies");
    let mut map_x = vec![0.0f32; w * h];
    let mut map_y = vec![0.0f32; w * h];
    let mut visible = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = relative.apply(PixelCoord::new(x as f64, y as f64));
            map_x[i] = m.x as f32;
            map_y[i] = m.y as f32;
            if mask_src.get(x, y) && m.in_bounds(w, h) {
                let (rx, ry) = m.rounded();
                if mask_tgt.get_i64(rx, ry) {
                    visible[i] = 1;
                }
            }
        }
    }
    GroundTruthMap {
        width: w,
        height: h,
        src_index,
        tgt_index,
        flags: GTM_FLAG_SOURCE_MASK_RESTRICTED,
        map_x,
        map_y,
        visible,
        poses: Some((*h_src, *h_tgt)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::MaskProvenance;
    use crate::synth::compose_homography;

    fn square_mask(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> ForegroundMask {
        let mut m = ForegroundMask::new(w, h, MaskProvenance::GroundTruth);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn identical_poses_give_identity_mapping() {
        let m = square_mask(32, 32, 8, 8, 12);
        let h = compose_homography(17.0, 1.05, (2.0, -1.0), (1e-4, 0.0), (16.0, 16.0)).unwrap();
        let gt = ground_truth_map(&h, &h, &m, &m, 0, 1);
        for y in 8..20 {
            for x in 8..20 {
                assert!(gt.visible(x, y));
                let p = gt.mapped(x, y);
                assert!((p.x - x as f64).abs() < 1e-5);
                assert!((p.y - y as f64).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn translation_mapping_is_additive() {
        let m = square_mask(32, 32, 8, 8, 12);
        let mt = square_mask(32, 32, 11, 8, 12);
        let id = Homography::identity();
        let t = compose_homography(0.0, 1.0, (3.0, 0.0), (0.0, 0.0), (16.0, 16.0)).unwrap();
        let gt = ground_truth_map(&id, &t, &m, &mt, 0, 1);
        for y in 8..20 {
            for x in 8..20 {
                let p = gt.mapped(x, y);
                assert!((p.x - (x as f64 + 3.0)).abs() < 1e-5);
                assert!((p.y - y as f64).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rotation_difference_equals_single_rotation() {
        // rot 10 -> rot 25 must equal a direct 15-degree rotation about the
        // same center, compared against the directly composed matrix.
        let full = ForegroundMask::full(64, 64, MaskProvenance::GroundTruth);
        let c = (32.0, 32.0);
        let h10 = compose_homography(10.0, 1.0, (0.0, 0.0), (0.0, 0.0), c).unwrap();
        let h25 = compose_homography(25.0, 1.0, (0.0, 0.0), (0.0, 0.0), c).unwrap();
        let h15 = compose_homography(15.0, 1.0, (0.0, 0.0), (0.0, 0.0), c).unwrap();
        let gt = ground_truth_map(&h10, &h25, &full, &full, 0, 1);
        for y in (0..64).step_by(3) {
            for x in (0..64).step_by(3) {
                let p = PixelCoord::new(x as f64, y as f64);
                let want = h15.apply(p);
                // The analytic mapping agrees to well under 1e-6 px.
                let got = gt.eval_at(p).unwrap();
                assert!(got.distance(&want) < 1e-6, "deviation at ({x},{y})");
                // The stored plane only carries f32 resolution.
                let plane = gt.mapped(x, y);
                assert!(plane.distance(&want) < 1e-4, "plane deviation at ({x},{y})");
            }
        }
    }

    #[test]
    fn composition_consistency() {
        // (s->t) then (t->v) agrees with (s->v) wherever all three visible.
        let full = ForegroundMask::full(48, 48, MaskProvenance::GroundTruth);
        let c = (24.0, 24.0);
        let hs = compose_homography(5.0, 1.0, (1.0, 2.0), (0.0, 0.0), c).unwrap();
        let ht = compose_homography(12.0, 1.02, (-2.0, 1.0), (5e-5, 0.0), c).unwrap();
        let hv = compose_homography(20.0, 0.98, (3.0, -1.0), (0.0, 5e-5), c).unwrap();
        let st = ground_truth_map(&hs, &ht, &full, &full, 0, 1);
        let tv = ground_truth_map(&ht, &hv, &full, &full, 1, 2);
        let sv = ground_truth_map(&hs, &hv, &full, &full, 0, 2);
        for y in (2..46).step_by(4) {
            for x in (2..46).step_by(4) {
                if !(st.visible(x, y) && sv.visible(x, y)) {
                    continue;
                }
                let a = st.mapped(x, y);
                let (rx, ry) = a.rounded();
                if !(rx >= 0 && ry >= 0 && tv.visible(rx as usize, ry as usize)) {
                    continue;
                }
                let b = tv.eval_at(a).unwrap();
                let c2 = sv.mapped(x, y);
                assert!(b.distance(&c2) < 1e-5, "composition broke at ({x},{y})");
            }
        }
    }

    #[test]
    fn inverse_consistency() {
        let full = ForegroundMask::full(48, 48, MaskProvenance::GroundTruth);
        let c = (24.0, 24.0);
        let hs = compose_homography(8.0, 1.0, (2.0, -1.0), (0.0, 0.0), c).unwrap();
        let ht = compose_homography(-6.0, 1.03, (-1.0, 2.0), (0.0, 0.0), c).unwrap();
        let fwd = ground_truth_map(&hs, &ht, &full, &full, 0, 1);
        let bwd = ground_truth_map(&ht, &hs, &full, &full, 1, 0);
        for y in (2..46).step_by(4) {
            for x in (2..46).step_by(4) {
                if !fwd.visible(x, y) {
                    continue;
                }
                let there = fwd.mapped(x, y);
                let back = bwd.eval_at(there).unwrap();
                let err = back.distance(&PixelCoord::new(x as f64, y as f64));
                assert!(err < 1e-5, "round trip error {err} at ({x},{y})");
            }
        }
    }

    #[test]
    fn file_round_trip_preserves_planes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.gtm");
        let m = square_mask(24, 20, 4, 4, 10);
        let h0 = Homography::identity();
        let h1 = compose_homography(9.0, 1.0, (1.5, -0.5), (0.0, 0.0), (12.0, 10.0)).unwrap();
        let gt = ground_truth_map(&h0, &h1, &m, &m, 3, 4);
        gt.write_file(&path).unwrap();
        let back = GroundTruthMap::read_file(&path, 3, 4).unwrap();
        assert_eq!(back.width, 24);
        assert_eq!(back.height, 20);
        assert_eq!(back.flags, GTM_FLAG_SOURCE_MASK_RESTRICTED);
        for y in 0..20 {
            for x in 0..24 {
                assert_eq!(back.visible(x, y), gt.visible(x, y));
                assert_eq!(back.mapped_f32(x, y), gt.mapped_f32(x, y));
            }
        }
    }
}
