use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_layout, frame, read_file, unframe, write_file, BUNDLE_MAGIC};
use crate::maskops::{LogitGrid, PromptPoint};
use crate::numcore::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Synthetic,
    Sam2Export,
}

/// Everything captured at one prompt point: its mask logits (at
/// `logit_h×logit_w`) and its mask embedding (`c_in×embed_h×embed_w`).
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub point: PromptPoint,
    pub logits: LogitGrid,
    pub embedding: Tensor,
}

/// One image's per-point masks and embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    pub image_id: u64,
    pub height: usize,
    pub width: usize,
    pub provenance: Provenance,
    /// Free-form producer notes, e.g. which tensor was exported.
    pub notes: Option<String>,
    pub c_in: usize,
    pub embed_h: usize,
    pub embed_w: usize,
    pub logit_h: usize,
    pub logit_w: usize,
    pub records: Vec<PointRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PayloadRef {
    offset: u64,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PointEntry {
    x: usize,
    y: usize,
    label: u8,
    logits: PayloadRef,
    embedding: PayloadRef,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleHeader {
    image_id: u64,
    height: usize,
    width: usize,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
    c_in: usize,
    embed_h: usize,
    embed_w: usize,
    logit_h: usize,
    logit_w: usize,
    dtype: String,
    points: Vec<PointEntry>,
    payload_bytes: u64,
}

const DTYPE: &str = "f32-le";

impl EmbeddingBundle {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("height", self.height),
            ("width", self.width),
            ("c_in", self.c_in),
            ("embed_h", self.embed_h),
            ("embed_w", self.embed_w),
            ("logit_h", self.logit_h),
            ("logit_w", self.logit_w),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Inconsistent(format!("header {name} must be positive")));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.point.x >= self.width || r.point.y >= self.height {
                return Err(Error::Inconsistent(format!(
                    "point {i} ({}, {}) outside {}x{} image",
                    r.point.x, r.point.y, self.width, self.height
                )));
            }
            if r.logits.height() != self.logit_h || r.logits.width() != self.logit_w {
                return Err(Error::Inconsistent(format!(
                    "point {i} logits are {}x{}, header says {}x{}",
                    r.logits.height(),
                    r.logits.width(),
                    self.logit_h,
                    self.logit_w
                )));
            }
            if r.embedding.shape() != [self.c_in, self.embed_h, self.embed_w] {
                return Err(Error::Inconsistent(format!(
                    "point {i} embedding shape {:?}, header says {:?}",
                    r.embedding.shape(),
                    [self.c_in, self.embed_h, self.embed_w]
                )));
            }
        }
        Ok(())
    }

    /// Mask logits of record `i` resized to the image.
    pub fn full_logits(&self, i: usize) -> LogitGrid {
        self.records[i]
            .logits
            .upsample_nearest(self.height, self.width)
    }
}

pub fn bundle_to_bytes(bundle: &EmbeddingBundle) -> Result<Vec<u8>> {
    bundle.validate()?;
    let logit_len = bundle.logit_h * bundle.logit_w;
    let embed_len = bundle.c_in * bundle.embed_h * bundle.embed_w;
    let mut payload = Vec::with_capacity(bundle.records.len() * (logit_len + embed_len) * 4);
    let mut points = Vec::with_capacity(bundle.records.len());
    for r in &bundle.records {
        let logits_at = payload.len() as u64;
        for v in r.logits.values() {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let embed_at = payload.len() as u64;
        for v in r.embedding.data() {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        points.push(PointEntry {
            x: r.point.x,
            y: r.point.y,
            label: r.point.label,
            logits: PayloadRef {
                offset: logits_at,
                shape: vec![bundle.logit_h, bundle.logit_w],
            },
            embedding: PayloadRef {
                offset: embed_at,
                shape: vec![bundle.c_in, bundle.embed_h, bundle.embed_w],
            },
        });
    }
    let header = BundleHeader {
        image_id: bundle.image_id,
        height: bundle.height,
        width: bundle.width,
        provenance: bundle.provenance,
        notes: bundle.notes.clone(),
        c_in: bundle.c_in,
        embed_h: bundle.embed_h,
        embed_w: bundle.embed_w,
        logit_h: bundle.logit_h,
        logit_w: bundle.logit_w,
        dtype: DTYPE.to_string(),
        points,
        payload_bytes: payload.len() as u64,
    };
    let header = serde_json::to_vec(&header)?;
    Ok(frame(BUNDLE_MAGIC, &header, &payload))
}

pub fn bundle_from_bytes(bytes: &[u8]) -> Result<EmbeddingBundle> {
    let (header_bytes, payload) = unframe(bytes, BUNDLE_MAGIC)?;
    let header: BundleHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Inconsistent(format!("header: {e}")))?;
    if header.dtype != DTYPE {
        return Err(Error::Inconsistent(format!("unsupported dtype {}", header.dtype)));
    }
    let logit_shape = vec![header.logit_h, header.logit_w];
    let embed_shape = vec![header.c_in, header.embed_h, header.embed_w];
    let mut entries = Vec::with_capacity(header.points.len() * 2);
    for (i, p) in header.points.iter().enumerate() {
        if p.logits.shape != logit_shape || p.embedding.shape != embed_shape {
            return Err(Error::Inconsistent(format!(
                "point {i} tensor shapes {:?}/{:?} disagree with header {:?}/{:?}",
                p.logits.shape, p.embedding.shape, logit_shape, embed_shape
            )));
        }
        entries.push((p.logits.offset, 4 * logit_shape.iter().product::<usize>() as u64));
        entries.push((p.embedding.offset, 4 * embed_shape.iter().product::<usize>() as u64));
    }
    check_layout(&entries, header.payload_bytes, payload.len(), header_bytes.len())?;

    let read_f32 = |offset: u64, n: usize| -> Vec<f64> {
        payload[offset as usize..offset as usize + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect()
    };
    let mut records = Vec::with_capacity(header.points.len());
    for p in &header.points {
        let logits = LogitGrid::new(
            header.logit_h,
            header.logit_w,
            read_f32(p.logits.offset, header.logit_h * header.logit_w),
        )
        .map_err(|e| Error::Inconsistent(e.to_string()))?;
        let embedding = Tensor::new(
            embed_shape.clone(),
            read_f32(p.embedding.offset, embed_shape.iter().product()),
        )?;
        records.push(PointRecord {
            point: PromptPoint {
                x: p.x,
                y: p.y,
                label: p.label,
            },
            logits,
            embedding,
        });
    }
    let bundle = EmbeddingBundle {
        image_id: header.image_id,
        height: header.height,
        width: header.width,
        provenance: header.provenance,
        notes: header.notes,
        c_in: header.c_in,
        embed_h: header.embed_h,
        embed_w: header.embed_w,
        logit_h: header.logit_h,
        logit_w: header.logit_w,
        records,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn write_bundle(bundle: &EmbeddingBundle, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &bundle_to_bytes(bundle)?)
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<EmbeddingBundle> {
    bundle_from_bytes(&read_file(path.as_ref())?)
}
