//! On-disk formats.
//!
//! Binary files share one framing, all integers little-endian:
//!
//! ```text
//! magic       4 bytes   "SIFB" (embedding bundle) | "SIFM" (model)
//! version     u32       1
//! header_len  u64
//! header      header_len bytes of UTF-8 JSON
//! payload     raw tensors, concatenated in header order
//! ```
//!
//! Header offsets are byte offsets from the start of the payload. Bundles
//! store `f32` payloads, models `f64`. The JSON side files (annotations,
//! training labels, shot index, class layout) are plain serde structs.

mod annotations;
mod bundle;
mod model;
mod sidecar;

pub use annotations::{
    read_annotations, write_annotations, Annotation, AnnotationSet, Category, ImageInfo, Split,
};
pub use bundle::{
    bundle_from_bytes, bundle_to_bytes, read_bundle, write_bundle, EmbeddingBundle, PointRecord,
    Provenance,
};
pub use model::{model_from_bytes, model_to_bytes, read_model, write_model};
pub use sidecar::{read_json, write_json, LabelEntry, LabelSet, ShotIndex, ShotRef};

use std::path::Path;

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const BUNDLE_MAGIC: &[u8; 4] = b"SIFB";
pub const MODEL_MAGIC: &[u8; 4] = b"SIFM";

const PREAMBLE: usize = 4 + 4 + 8;

/// What kind of file a byte buffer holds, judged by its first bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Bundle,
    Model,
    Json,
}

pub fn detect_kind(bytes: &[u8]) -> Option<FileKind> {
    if bytes.starts_with(BUNDLE_MAGIC) {
        Some(FileKind::Bundle)
    } else if bytes.starts_with(MODEL_MAGIC) {
        Some(FileKind::Model)
    } else if bytes
        .iter()
        .find(|b| !b.is_ascii_whitespace())
        .is_some_and(|&b| b == b'{')
    {
        Some(FileKind::Json)
    } else {
        None
    }
}

fn frame(magic: &[u8; 4], header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

/// Splits a framed buffer into `(header, payload)`.
fn unframe<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found,
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(Error::TruncatedPayload {
            needed: PREAMBLE as u64,
            available: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = (PREAMBLE as u64).saturating_add(header_len);
    if header_end > bytes.len() as u64 {
        return Err(Error::TruncatedPayload {
            needed: header_end,
            available: bytes.len() as u64,
        });
    }
    let header_end = header_end as usize;
    Ok((&bytes[PREAMBLE..header_end], &bytes[header_end..]))
}

/// Checks that `(offset, byte_len)` entries tile `[0, total)` in order and
/// that the payload holds exactly `total` bytes.
fn check_layout(entries: &[(u64, u64)], total: u64, payload_len: usize, header_len: usize) -> Result<()> {
    let mut expected = 0u64;
    for (i, &(offset, len)) in entries.iter().enumerate() {
        if offset != expected {
            return Err(Error::Inconsistent(format!(
                "tensor {i} at offset {offset}, expected {expected}"
            )));
        }
        expected += len;
    }
    if expected != total {
        return Err(Error::Inconsistent(format!(
            "header declares {total} payload bytes but tensors need {expected}"
        )));
    }
    let available = payload_len as u64;
    if total > available {
        return Err(Error::TruncatedPayload {
            needed: (PREAMBLE + header_len) as u64 + total,
            available: (PREAMBLE + header_len) as u64 + available,
        });
    }
    if total < available {
        return Err(Error::Inconsistent(format!(
            "{} trailing bytes after payload",
            available - total
        )));
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
