use serde::{Deserialize, Serialize};

use super::MaskGrid;
use crate::{Error, Result};

/// COCO uncompressed RLE: column-major runs, alternating starting with a
/// (possibly empty) run of zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

pub fn rle_encode(mask: &MaskGrid) -> Rle {
    let (h, w) = (mask.height(), mask.width());
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let bit = mask.get(y, x);
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [h, w],
        counts,
    }
}

pub fn rle_decode(rle: &Rle, height: usize, width: usize) -> Result<MaskGrid> {
    let sum: u64 = rle.counts.iter().sum();
    let expected = (height * width) as u64;
    if sum != expected || rle.size != [height, width] {
        return Err(Error::CorruptRle { sum, expected });
    }
    let mut mask = MaskGrid::new(height, width);
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        if i % 2 == 1 {
            for p in pos..pos + c as usize {
                mask.set(p % height, p / height, true);
            }
        }
        pos += c as usize;
    }
    Ok(mask)
}
