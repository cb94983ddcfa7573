//! Binary-mask machinery shared by training-point sampling, the inference
//! pipeline and evaluation.

mod morphology;
mod nms;
mod rle;
mod sampling;

pub use morphology::{erode, StructuringElement};
pub use nms::nms;
pub use rle::{rle_decode, rle_encode, Rle};
pub use sampling::{grid_points, sample_training_points, PromptPoint, SampleTarget};

use crate::{Error, Result};

/// Row-major H×W binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskGrid {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl MaskGrid {
    pub fn new(height: usize, width: usize) -> Self {
        MaskGrid {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::shape(height * width, bits.len()));
        }
        Ok(MaskGrid {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height * width).map(|i| f(i / width, i % width)).collect();
        MaskGrid {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> MaskGrid {
        MaskGrid {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Pixel coordinates `(y, x)` of set bits in row-major order.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub fn is_subset_of(&self, other: &MaskGrid) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn check_same_dims(&self, other: &MaskGrid) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }
}

/// Pre-threshold mask logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl LogitGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(height * width, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite mask logit".into()));
        }
        Ok(LogitGrid {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pixels strictly above `threshold`.
    pub fn binarize(&self, threshold: f64) -> MaskGrid {
        MaskGrid {
            height: self.height,
            width: self.width,
            bits: self.values.iter().map(|&v| v > threshold).collect(),
        }
    }

    /// Nearest-neighbour resize: target pixel `(y, x)` reads source
    /// `(⌊y·h_src/h⌋, ⌊x·w_src/w⌋)`.
    pub fn upsample_nearest(&self, height: usize, width: usize) -> LogitGrid {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            let sy = y * self.height / height;
            for x in 0..width {
                let sx = x * self.width / width;
                values.push(self.values[sy * self.width + sx]);
            }
        }
        LogitGrid {
            height,
            width,
            values,
        }
    }
}

/// A predicted instance: mask, category, classifier score and stability.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mask: MaskGrid,
    pub class_id: u32,
    pub score: f64,
    pub stability: f64,
}

/// |a ∩ b| / |a ∪ b|.
pub fn mask_iou(a: &MaskGrid, b: &MaskGrid) -> Result<f64> {
    a.check_same_dims(b)?;
    let (inter, union) = overlap_counts(a, b);
    if union == 0 {
        return Err(Error::UndefinedIou);
    }
    Ok(inter as f64 / union as f64)
}

pub(crate) fn overlap_counts(a: &MaskGrid, b: &MaskGrid) -> (usize, usize) {
    let mut inter = 0;
    let mut union = 0;
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    (inter, union)
}

/// IoU of the masks binarized at `tau + delta` and `tau - delta`; 0 when
/// the looser mask is empty.
pub fn stability_score(logits: &LogitGrid, tau: f64, delta: f64) -> f64 {
    let strict = logits.values.iter().filter(|&&v| v > tau + delta).count();
    let loose = logits.values.iter().filter(|&&v| v > tau - delta).count();
    if loose == 0 {
        return 0.0;
    }
    // strict ⊆ loose, so the intersection is the strict mask.
    strict as f64 / loose as f64
}
