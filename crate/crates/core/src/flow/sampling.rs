//! Sampling positive matches and per-positive negative sets from a
//! correspondence map.

use rand::Rng;

use crate::flow::{CorrespondenceMap, FlowError};
use crate::imagery::PixelCoord;
use crate::rng::rng_from;
use crate::segment::ForegroundMask;

/// One positive pair: integer source pixel and its continuous target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub src: (usize, usize),
    pub tgt: PixelCoord,
}

/// Sampled training signal for one frame pair: positives and, for each
/// positive, a set of negative target pixels drawn from the target mask.
/// Negatives never land on the positive's rounded target pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub positives: Vec<Match>,
    /// `negatives[i]` belongs to `positives[i]`.
    pub negatives: Vec<Vec<(usize, usize)>>,
    pub n_matches_requested: usize,
    pub n_neg_per_match: usize,
    pub seed: u64,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    pub fn total_negatives(&self) -> usize {
        self.negatives.iter().map(Vec::len).sum()
    }
}

/// Draws `min(n_matches, #valid)` source pixels uniformly without
/// replacement, takes their mapped targets as positives, and samples
/// `n_neg` negatives per positive uniformly (with replacement) from the
/// target mask, rejecting candidates that round onto the positive target.
/// Deterministic for a given seed.
pub fn sample_matches(
    corr: &CorrespondenceMap,
    mask_b: &ForegroundMask,
    n_matches: usize,
    n_neg: usize,
    seed: u64,
) -> Result<MatchSet, FlowError> {
    if n_matches == 0 || n_neg == 0 {
        return Err(FlowError::BadSampling {
            reason: format!("n_matches {n_matches} and n_neg {n_neg} must be >= 1"),
        });
    }
    let valid = corr.valid_pixels();
    if valid.is_empty() {
        return Err(FlowError::NoCorrespondences);
    }
    let candidates = mask_b.pixels();
    if candidates.len() < 2 {
        return Err(FlowError::MaskTooSmall {
            count: candidates.len(),
        });
    }

    let mut rng = rng_from(seed, &[0x3a7c4e5]);
    let k = n_matches.min(valid.len());
    let chosen = rand::seq::index::sample(&mut rng, valid.len(), k);

    let mut positives = Vec::with_capacity(k);
    let mut negatives = Vec::with_capacity(k);
    for idx in chosen.iter() {
        let (sx, sy) = valid[idx];
        let tgt = corr.target(sx, sy);
        let (tx, ty) = tgt.rounded();

        let mut negs = Vec::with_capacity(n_neg);
        while negs.len() < n_neg {
            let mut accepted = None;
            for _ in 0..1000 {
                let c = candidates[rng.gen_range(0..candidates.len())];
                if (c.0 as i64, c.1 as i64) != (tx, ty) {
                    accepted = Some(c);
                    break;
                }
            }
            // The rejection loop only stalls when nearly every mask pixel is
            // the positive target; fall back to the first eligible pixel.
            let neg = accepted.unwrap_or_else(|| {
                *candidates
                    .iter()
                    .find(|&&c| (c.0 as i64, c.1 as i64) != (tx, ty))
                    .expect("mask has >= 2 pixels, so an eligible negative exists")
            });
            negs.push(neg);
        }
        positives.push(Match {
            src: (sx, sy),
            tgt,
        });
        negatives.push(negs);
    }
    Ok(MatchSet {
        positives,
        negatives,
        n_matches_requested: n_matches,
        n_neg_per_match: n_neg,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{flow_to_correspondence, FlowBackend, FlowField};
    use crate::segment::MaskProvenance;

    fn square_mask(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> ForegroundMask {
        let mut m = ForegroundMask::new(w, h, MaskProvenance::GroundTruth);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                m.set(x, y, true);
            }
        }
        m
    }

    fn identity_corr(mask: &ForegroundMask) -> CorrespondenceMap {
        let flow = FlowField::zeros(mask.width, mask.height, FlowBackend::Classical);
        flow_to_correspondence(&flow, mask, mask, None)
    }

    #[test]
    fn clamps_to_valid_count() {
        let mask = square_mask(32, 32, 4, 4, 5); // 25 valid pixels
        let corr = identity_corr(&mask);
        let ms = sample_matches(&corr, &mask, 100, 3, 1).unwrap();
        assert_eq!(ms.len(), 25);
        assert_eq!(ms.total_negatives(), 25 * 3);
    }

    #[test]
    fn two_pixel_mask_forces_the_other_negative() {
        let mut mask = ForegroundMask::new(8, 8, MaskProvenance::GroundTruth);
        mask.set(2, 2, true);
        mask.set(5, 5, true);
        let corr = identity_corr(&mask);
        let ms = sample_matches(&corr, &mask, 1, 16, 7).unwrap();
        assert_eq!(ms.len(), 1);
        let positive = ms.positives[0];
        let other = if positive.src == (2, 2) { (5, 5) } else { (2, 2) };
        for &n in &ms.negatives[0] {
            assert_eq!(n, other);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mask = square_mask(32, 32, 4, 4, 12);
        let corr = identity_corr(&mask);
        let a = sample_matches(&corr, &mask, 40, 8, 99).unwrap();
        let b = sample_matches(&corr, &mask, 40, 8, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_matches(&corr, &mask, 40, 8, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_valid_pixels_is_an_error() {
        let mask = ForegroundMask::new(8, 8, MaskProvenance::GroundTruth);
        let some = square_mask(8, 8, 1, 1, 3);
        let corr = identity_corr(&mask);
        assert!(matches!(
            sample_matches(&corr, &some, 5, 2, 0),
            Err(FlowError::NoCorrespondences)
        ));
    }

    #[test]
    fn tiny_target_mask_is_an_error() {
        let mask = square_mask(8, 8, 1, 1, 2);
        let corr = identity_corr(&mask);
        let mut one_px = ForegroundMask::new(8, 8, MaskProvenance::GroundTruth);
        one_px.set(1, 1, true);
        assert!(matches!(
            sample_matches(&corr, &one_px, 5, 2, 0),
            Err(FlowError::MaskTooSmall { count: 1 })
        ));
    }

    #[test]
    fn invariants_positives_on_targets_negatives_off_targets() {
        // Every positive satisfies O(u_a) = u_b; negatives never round onto
        // the positive target and always lie on the target mask.
        let mask = square_mask(48, 48, 10, 10, 20);
        let mut flow = FlowField::zeros(48, 48, FlowBackend::Classical);
        for y in 0..48 {
            for x in 0..48 {
                flow.set(x, y, (2.25, -1.5));
            }
        }
        let mut mask_b = ForegroundMask::new(48, 48, MaskProvenance::GroundTruth);
        for y in 0..48 {
            for x in 0..48 {
                if mask.get(x, y) {
                    let (tx, ty) = (x as f64 + 2.25, y as f64 - 1.5);
                    let (rx, ry) = PixelCoord::new(tx, ty).rounded();
                    if rx >= 0 && ry >= 0 && (rx as usize) < 48 && (ry as usize) < 48 {
                        mask_b.set(rx as usize, ry as usize, true);
                    }
                }
            }
        }
        let corr = flow_to_correspondence(&flow, &mask, &mask_b, None);
        let ms = sample_matches(&corr, &mask_b, 200, 16, 3).unwrap();
        assert!(!ms.is_empty());
        for (i, m) in ms.positives.iter().enumerate() {
            let o = corr.target(m.src.0, m.src.1);
            assert_eq!((o.x, o.y), (m.tgt.x, m.tgt.y), "match condition broke");
            assert!(mask.get(m.src.0, m.src.1));
            let (px, py) = m.tgt.rounded();
            for &(nx, ny) in &ms.negatives[i] {
                assert!(mask_b.get(nx, ny), "negative off the target mask");
                let dx = (nx as i64 - px).abs();
                let dy = (ny as i64 - py).abs();
                assert!(dx.max(dy) >= 1, "negative rounds onto the positive");
            }
        }
    }
}
