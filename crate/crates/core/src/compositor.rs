//! Masked depth images.
//!
//! The all-objects image invalidates every dynamic-object mask and feeds mapping and loop
//! closure. The moving-objects image only invalidates masks labeled moving and feeds
//! visual odometry, so features on idle objects stay usable.

use thiserror::Error;

use crate::moc::Motion;
use crate::scalar::Real;
use crate::scene::{BinaryMask, DepthImage};
use crate::tracker::TrackId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositorError {
    #[error("mask {index} is {mask_w}x{mask_h} but depth is {depth_w}x{depth_h}")]
    DimensionMismatch {
        index: usize,
        mask_w: usize,
        mask_h: usize,
        depth_w: usize,
        depth_h: usize,
    },
}

/// One mask to apply, with the motion label of its object.
#[derive(Debug, Clone, Copy)]
pub struct MaskItem<'a> {
    pub mask: &'a BinaryMask,
    /// `None` when the detection was not attached to a track.
    pub track_id: Option<TrackId>,
    pub motion: Motion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedFrameOutput<T: Real> {
    /// All dynamic objects invalidated.
    pub mdi: DepthImage<T>,
    /// Only moving objects invalidated.
    pub mo_mdi: DepthImage<T>,
    pub applied_masks: Vec<(Option<TrackId>, Motion)>,
}

pub fn compose<T: Real>(depth: &DepthImage<T>, items: &[MaskItem<'_>]) -> Result<MaskedFrameOutput<T>, CompositorError> {
    compose_dilated(depth, items, 0)
}

/// [`compose`] after dilating every mask by `radius` pixels.
pub fn compose_dilated<T: Real>(
    depth: &DepthImage<T>,
    items: &[MaskItem<'_>],
    radius: usize,
) -> Result<MaskedFrameOutput<T>, CompositorError> {
    for (index, item) in items.iter().enumerate() {
        if item.mask.width() != depth.width() || item.mask.height() != depth.height() {
            return Err(CompositorError::DimensionMismatch {
                index,
                mask_w: item.mask.width(),
                mask_h: item.mask.height(),
                depth_w: depth.width(),
                depth_h: depth.height(),
            });
        }
    }
    let mut mdi = depth.clone();
    let mut mo_mdi = depth.clone();
    let mut applied_masks = Vec::with_capacity(items.len());
    for item in items {
        let dilated;
        let mask = if radius > 0 {
            dilated = dilate_mask(item.mask, radius);
            &dilated
        } else {
            item.mask
        };
        mdi.invalidate(mask);
        if item.motion.is_moving() {
            mo_mdi.invalidate(mask);
        }
        applied_masks.push((item.track_id, item.motion));
    }
    Ok(MaskedFrameOutput {
        mdi,
        mo_mdi,
        applied_masks,
    })
}

/// Dilation with a `(2r+1) x (2r+1)` square; `radius == 0` returns a copy.
pub fn dilate_mask(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let Some(b) = mask.bounds() else {
        return mask.clone();
    };
    let (w, h) = (mask.width(), mask.height());
    let x0 = b.x_min.saturating_sub(radius);
    let x1 = (b.x_max + radius).min(w - 1);
    let y0 = b.y_min.saturating_sub(radius);
    let y1 = (b.y_max + radius).min(h - 1);

    // the square element is separable: horizontal pass then vertical pass
    let src = mask.bits();
    let mut horizontal = vec![false; w * h];
    for y in b.y_min..=b.y_max {
        let row = &src[y * w..(y + 1) * w];
        for x in x0..=x1 {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            horizontal[y * w + x] = row[lo..=hi].iter().any(|v| *v);
        }
    }
    let mut out = vec![false; w * h];
    for y in y0..=y1 {
        let lo = y.saturating_sub(radius).max(b.y_min);
        let hi = (y + radius).min(h - 1).min(b.y_max);
        for x in x0..=x1 {
            out[y * w + x] = (lo..=hi).any(|yy| horizontal[yy * w + x]);
        }
    }
    BinaryMask::new(w, h, out).expect("same dimensions")
}
