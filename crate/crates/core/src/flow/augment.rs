//! Flip augmentation: mirror the second frame of a pair and remap the
//! sampled match coordinates accordingly. Source pixels stay untouched.

use crate::flow::{Match, MatchSet};
use crate::imagery::{ImageFrame, PixelCoord};
use crate::segment::ForegroundMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

/// Flips frame B plus its mask and remaps every positive target and
/// negative pixel: horizontal sends x to W-1-x, vertical sends y to H-1-y.
pub fn augment_flip(
    frame_b: &ImageFrame,
    mask_b: &ForegroundMask,
    matches: &MatchSet,
    axis: FlipAxis,
) -> (ImageFrame, ForegroundMask, MatchSet) {
    let horizontal = axis == FlipAxis::Horizontal;
    let flipped_frame = frame_b.flipped(horizontal);
    let flipped_mask = mask_b.flipped(horizontal);
    let w1 = (frame_b.width - 1) as f64;
    let h1 = (frame_b.height - 1) as f64;

    let positives = matches
        .positives
        .iter()
        .map(|m| Match {
            src: m.src,
            tgt: match axis {
                FlipAxis::Horizontal => PixelCoord::new(w1 - m.tgt.x, m.tgt.y),
                FlipAxis::Vertical => PixelCoord::new(m.tgt.x, h1 - m.tgt.y),
            },
        })
        .collect();
    let negatives = matches
        .negatives
        .iter()
        .map(|negs| {
            negs.iter()
                .map(|&(x, y)| match axis {
                    FlipAxis::Horizontal => (frame_b.width - 1 - x, y),
                    FlipAxis::Vertical => (x, frame_b.height - 1 - y),
                })
                .collect()
        })
        .collect();

    (
        flipped_frame,
        flipped_mask,
        MatchSet {
            positives,
            negatives,
            n_matches_requested: matches.n_matches_requested,
            n_neg_per_match: matches.n_neg_per_match,
            seed: matches.seed,
        },
    )
}
