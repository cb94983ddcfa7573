use serde::{Deserialize, Serialize};

use super::{erode, MaskGrid, StructuringElement};
use crate::numcore::RngState;
use crate::{Error, Result};

/// A point prompt in pixel coordinates. Every prompt here is foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPoint {
    pub x: usize,
    pub y: usize,
    #[serde(default = "foreground")]
    pub label: u8,
}

fn foreground() -> u8 {
    1
}

impl PromptPoint {
    pub fn foreground(x: usize, y: usize) -> Self {
        PromptPoint { x, y, label: 1 }
    }
}

/// What a sampled training point landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleTarget {
    Instance(usize),
    Background,
}

/// Instance-balanced point sampling.
///
/// Instance masks and the background (complement of their union) are
/// eroded by `k`. Each draw first picks a target uniformly among the
/// non-empty eroded regions, regardless of area, then a pixel uniformly
/// inside that region.
pub fn sample_training_points(
    instance_masks: &[MaskGrid],
    image_h: usize,
    image_w: usize,
    n_points: usize,
    k: StructuringElement,
    rng: &mut RngState,
) -> Result<Vec<(PromptPoint, SampleTarget)>> {
    if n_points == 0 {
        return Err(Error::InvalidConfig("n_points must be >= 1".into()));
    }
    let mut union = MaskGrid::new(image_h, image_w);
    for m in instance_masks {
        if m.height() != image_h || m.width() != image_w {
            return Err(Error::DimensionMismatch(m.height(), m.width(), image_h, image_w));
        }
        for (y, x) in m.pixels() {
            union.set(y, x, true);
        }
    }
    let mut regions: Vec<(SampleTarget, Vec<(usize, usize)>)> = Vec::new();
    for (i, m) in instance_masks.iter().enumerate() {
        let pixels = erode(m, k).pixels();
        if !pixels.is_empty() {
            regions.push((SampleTarget::Instance(i), pixels));
        }
    }
    let background = erode(&union.complement(), k).pixels();
    if !background.is_empty() {
        regions.push((SampleTarget::Background, background));
    }
    if regions.is_empty() {
        return Err(Error::NoSampleableRegion);
    }
    let mut out = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let (target, pixels) = &regions[rng.next_below(regions.len())];
        let (y, x) = pixels[rng.next_below(pixels.len())];
        out.push((PromptPoint::foreground(x, y), *target));
    }
    Ok(out)
}

/// `n×n` prompt grid: point `(i, j)` sits at `((i+0.5)·w/n, (j+0.5)·h/n)`,
/// rounded half away from zero and clamped into the image; row-major.
pub fn grid_points(h: usize, w: usize, points_per_side: usize) -> Vec<PromptPoint> {
    let n = points_per_side;
    let coord = |i: usize, extent: usize| -> usize {
        let v = ((i as f64 + 0.5) * extent as f64 / n as f64).round() as usize;
        v.min(extent.saturating_sub(1))
    };
    let mut points = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push(PromptPoint::foreground(coord(i, w), coord(j, h)));
        }
    }
    points
}
