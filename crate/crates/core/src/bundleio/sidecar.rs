use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{read_file, write_file};
use crate::classifier::ClassLayout;
use crate::Result;

/// Per-point training labels for a directory of bundles. Labels are
/// category ids, 0 for background, one per bundle record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub layout: ClassLayout,
    pub images: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    /// Bundle file name, relative to the bundle directory.
    pub bundle: String,
    pub image_id: u64,
    pub labels: Vec<u32>,
}

/// Pool of candidate shots: each entry names a record in a bundle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShotIndex {
    pub shots: Vec<ShotRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRef {
    pub class_id: u32,
    pub bundle: String,
    pub point: usize,
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_slice(&read_file(path.as_ref())?)?)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path.as_ref(), &bytes)
}
