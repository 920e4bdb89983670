//! Merging a translated crop back into the full background frame.
//!
//! Pixels of the original mask take the translated value, pixels outside the
//! dilated mask keep the background, and the band in between blends with a
//! weight that falls from 1 next to the mask to 0 at the dilated boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dilate, squared_edt, BBox, Seeds};
use crate::model::{ImagePlane, MaskGrid};
use crate::preprocess::resize_bilinear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    pub width: usize,
    pub height: usize,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel {
            width: 8,
            height: 8,
        }
    }
}

impl Kernel {
    pub fn new(width: usize, height: usize) -> Self {
        Kernel { width, height }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    weights: ImagePlane<f32>,
    dilated: MaskGrid,
    /// Largest band distance to the dilated boundary; 0 when the band is empty.
    max_band: f64,
}

impl BlendWeights {
    pub fn plane(&self) -> &ImagePlane<f32> {
        &self.weights
    }

    pub fn values(&self) -> &[f32] {
        self.weights.data()
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.weights.get(x, y, 0)
    }

    pub fn dilated(&self) -> &MaskGrid {
        &self.dilated
    }

    pub fn max_band(&self) -> f64 {
        self.max_band
    }
}

/// `w = 1` on the mask, `0` outside `dilate(mask)`, and on the band between
/// them the distance to the nearest pixel outside the dilated mask divided
/// by the band maximum.
///
/// When the dilated mask covers the whole frame the frame exterior stands in
/// for the outside.
pub fn blend_weights(mask: &MaskGrid, kernel: Kernel) -> Result<BlendWeights> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = mask.dims();
    let dilated = dilate(mask, kernel.width, kernel.height);
    let band = |i: usize| dilated.bits()[i] && !mask.bits()[i];
    if !(0..w * h).any(band) {
        return Ok(BlendWeights {
            weights: mask.indicator(),
            dilated,
            max_band: 0.0,
        });
    }
    let dist: Vec<f64> = if dilated.is_full() {
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                (x + 1).min(y + 1).min(w - x).min(h - y) as f64
            })
            .collect()
    } else {
        squared_edt(&dilated, Seeds::Background)?
            .into_iter()
            .map(|d| (d as f64).sqrt())
            .collect()
    };
    let max_band = (0..w * h)
        .filter(|&i| band(i))
        .map(|i| dist[i])
        .fold(0.0, f64::max);
    let data = (0..w * h)
        .map(|i| {
            if mask.bits()[i] {
                1.0
            } else if band(i) {
                (dist[i] / max_band) as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(BlendWeights {
        weights: ImagePlane::new(w, h, 1, data)?,
        dilated,
        max_band,
    })
}

/// Pastes `crop` (already at bbox size) into a copy of `bg` at `bbox`.
pub fn paste(bg: &ImagePlane<f32>, crop: &ImagePlane<f32>, bbox: BBox) -> Result<ImagePlane<f32>> {
    if crop.dims() != (bbox.width(), bbox.height()) || crop.channels() != bg.channels() {
        return Err(Error::DimMismatch(format!(
            "crop {:?} does not match bbox {}x{}",
            crop.dims(),
            bbox.width(),
            bbox.height()
        )));
    }
    let mut out = bg.clone();
    for y in 0..bbox.height() {
        for x in 0..bbox.width() {
            for c in 0..bg.channels() {
                out.set(bbox.x0 + x, bbox.y0 + y, c, crop.get(x, y, c));
            }
        }
    }
    Ok(out)
}

/// `w * translated + (1 - w) * bg`, kept inside the pixelwise
/// `[min, max]` of the two inputs.
pub fn blend(
    bg: &ImagePlane<f32>,
    translated: &ImagePlane<f32>,
    weights: &BlendWeights,
) -> Result<ImagePlane<f32>> {
    if bg.dims() != translated.dims() || bg.dims() != weights.plane().dims() || bg.channels() != 1 {
        return Err(Error::DimMismatch("blend inputs differ in size".into()));
    }
    let data = bg
        .data()
        .iter()
        .zip(translated.data())
        .zip(weights.values())
        .map(|((&b, &t), &w)| {
            if w == 0.0 {
                b
            } else if w == 1.0 {
                t
            } else {
                (w * t + (1.0 - w) * b).clamp(b.min(t), b.max(t))
            }
        })
        .collect();
    ImagePlane::new(bg.width(), bg.height(), 1, data)
}

/// Resizes the translated crop back to `bbox`, pastes it over the
/// background and blends across the dilated border.
pub fn composite(
    bg_full: &ImagePlane<f32>,
    translated_crop: &ImagePlane<f32>,
    bbox: BBox,
    mask: &MaskGrid,
    kernel: Kernel,
) -> Result<ImagePlane<f32>> {
    let (w, h) = bg_full.dims();
    if bg_full.channels() != 1 || translated_crop.channels() != 1 {
        return Err(Error::DimMismatch(
            "composite expects single-channel planes".into(),
        ));
    }
    if mask.dims() != (w, h) {
        return Err(Error::DimMismatch(format!(
            "mask {:?} vs frame {:?}",
            mask.dims(),
            (w, h)
        )));
    }
    if !bbox.fits(w, h) {
        return Err(Error::DimMismatch(format!(
            "bbox {bbox:?} outside {w}x{h} frame"
        )));
    }
    let crop = resize_bilinear(translated_crop, bbox.width(), bbox.height());
    let translated = paste(bg_full, &crop, bbox)?;
    let weights = blend_weights(mask, kernel)?;
    blend(bg_full, &translated, &weights)
}
