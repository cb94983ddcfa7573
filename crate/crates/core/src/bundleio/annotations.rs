use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, write_file};
use crate::maskops::{rle_decode, MaskGrid, Rle};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub segmentation: Rle,
    /// Present on predictions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
    pub split: Split,
}

/// COCO-subset annotation file. Prediction files use the same shape with
/// `score` set and an `info` block echoing the producing configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<serde_json::Value>,
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<()> {
        let images: std::collections::BTreeMap<u64, &ImageInfo> =
            self.images.iter().map(|i| (i.id, i)).collect();
        let categories: BTreeSet<u32> = self.categories.iter().map(|c| c.id).collect();
        let mut offenders = Vec::new();
        if images.len() != self.images.len() {
            offenders.push("duplicate image ids".to_string());
        }
        if categories.len() != self.categories.len() {
            offenders.push("duplicate category ids".to_string());
        }
        for a in &self.annotations {
            if !images.contains_key(&a.image_id) {
                offenders.push(format!("annotation {} -> missing image {}", a.id, a.image_id));
            }
            if !categories.contains(&a.category_id) {
                offenders.push(format!(
                    "annotation {} -> missing category {}",
                    a.id, a.category_id
                ));
            }
        }
        if !offenders.is_empty() {
            return Err(Error::ReferentialIntegrity(offenders));
        }
        for a in &self.annotations {
            let img = images[&a.image_id];
            let sum: u64 = a.segmentation.counts.iter().sum();
            let expected = (img.height * img.width) as u64;
            if sum != expected || a.segmentation.size != [img.height, img.width] {
                return Err(Error::CorruptRle { sum, expected });
            }
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn category(&self, id: u32) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    /// Decoded masks of the annotations on one image, in file order.
    pub fn masks_for_image(&self, image_id: u64) -> Result<Vec<(&Annotation, MaskGrid)>> {
        let img = self
            .image(image_id)
            .ok_or_else(|| Error::ReferentialIntegrity(vec![format!("missing image {image_id}")]))?;
        self.annotations
            .iter()
            .filter(|a| a.image_id == image_id)
            .map(|a| Ok((a, rle_decode(&a.segmentation, img.height, img.width)?)))
            .collect()
    }
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let set: AnnotationSet = serde_json::from_slice(&read_file(path.as_ref())?)?;
    set.validate()?;
    Ok(set)
}

pub fn write_annotations(set: &AnnotationSet, path: impl AsRef<Path>) -> Result<()> {
    set.validate()?;
    let mut bytes = serde_json::to_vec_pretty(set)?;
    bytes.push(b'\n');
    write_file(path.as_ref(), &bytes)
}
