use super::MaskGrid;
use crate::{Error, Result};

/// Rectangular structuring element with odd extents, anchored at its centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    kh: usize,
    kw: usize,
}

impl StructuringElement {
    pub fn new(kh: usize, kw: usize) -> Result<Self> {
        if kh == 0 || kw == 0 || kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "structuring element extents must be odd and >= 1, got {kh}x{kw}"
            )));
        }
        Ok(StructuringElement { kh, kw })
    }

    pub fn square(k: usize) -> Result<Self> {
        Self::new(k, k)
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        StructuringElement { kh: 3, kw: 3 }
    }
}

/// Binary erosion: a pixel survives iff every pixel under the kernel is
/// set, with out-of-bounds pixels counting as unset.
///
/// The rectangle is separable, so this runs one sliding-window pass along
/// rows and one along columns.
pub fn erode(mask: &MaskGrid, k: StructuringElement) -> MaskGrid {
    let (h, w) = (mask.height(), mask.width());
    let rows = erode_lines(mask.bits(), h, w, k.kw / 2, true);
    let bits = erode_lines(&rows, h, w, k.kh / 2, false);
    MaskGrid::from_bits(h, w, bits).expect("erosion preserves dimensions")
}

fn erode_lines(bits: &[bool], h: usize, w: usize, radius: usize, along_rows: bool) -> Vec<bool> {
    if radius == 0 {
        return bits.to_vec();
    }
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let index = |line: usize, i: usize| if along_rows { line * w + i } else { i * w + line };
    let mut out = vec![false; bits.len()];
    for line in 0..lines {
        // run = length of the set streak ending at position i
        let mut run = vec![0usize; len];
        for i in 0..len {
            if bits[index(line, i)] {
                run[i] = if i == 0 { 1 } else { run[i - 1] + 1 };
            }
        }
        for c in radius..len.saturating_sub(radius) {
            out[index(line, c)] = run[c + radius] > 2 * radius;
        }
    }
    out
}
