//! Per-image inference: point masks → stability filter → classification →
//! background removal → NMS.

use serde::{Deserialize, Serialize};

use crate::bundleio::EmbeddingBundle;
use crate::classifier::{argmax, ClassifierModel};
use crate::maskops::{grid_points, nms, stability_score, Instance};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub stability_thresh: f64,
    /// Centre of the stability band and the mask binarization threshold.
    pub stability_tau: f64,
    pub stability_delta: f64,
    pub nms_iou: f64,
    /// When set, the bundle's points must be exactly this prompt grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_side: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            stability_thresh: 0.95,
            stability_tau: 0.0,
            stability_delta: 1.0,
            nms_iou: 0.7,
            points_per_side: None,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.stability_thresh) {
            return Err(Error::InvalidConfig("stability_thresh must be in [0, 1]".into()));
        }
        if !(self.stability_delta > 0.0) || !self.stability_tau.is_finite() {
            return Err(Error::InvalidConfig("stability delta must be > 0".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::InvalidConfig("nms_iou must be in (0, 1]".into()));
        }
        if self.points_per_side == Some(0) {
            return Err(Error::InvalidConfig("points_per_side must be >= 1".into()));
        }
        Ok(())
    }
}

/// Candidates that survive the stability filter and are classified as
/// foreground, before NMS.
pub fn classify_candidates(
    bundle: &EmbeddingBundle,
    model: &ClassifierModel,
    cfg: &InferenceConfig,
) -> Result<Vec<Instance>> {
    cfg.validate()?;
    let c_in = model.dims().c_in;
    if bundle.c_in != c_in {
        return Err(Error::shape(format!("bundle c_in {c_in}"), bundle.c_in));
    }
    if let Some(n) = cfg.points_per_side {
        let grid = grid_points(bundle.height, bundle.width, n);
        let points: Vec<_> = bundle.records.iter().map(|r| r.point).collect();
        if points != grid {
            return Err(Error::shape(
                format!("{n}x{n} prompt grid"),
                format!("{} bundle points", points.len()),
            ));
        }
    }
    let mut candidates = Vec::new();
    for (i, record) in bundle.records.iter().enumerate() {
        let logits = bundle.full_logits(i);
        let mask = logits.binarize(cfg.stability_tau);
        if mask.is_empty() {
            continue;
        }
        let stability = stability_score(&logits, cfg.stability_tau, cfg.stability_delta);
        if stability < cfg.stability_thresh {
            continue;
        }
        let (scores, _) = model.classifier_forward(&record.embedding)?;
        let (row, score) = argmax(scores.data());
        if row == 0 {
            continue;
        }
        candidates.push(Instance {
            mask,
            class_id: model.layout.category_of(row),
            score,
            stability,
        });
    }
    Ok(candidates)
}

pub fn run_inference(
    bundle: &EmbeddingBundle,
    model: &ClassifierModel,
    cfg: &InferenceConfig,
) -> Result<Vec<Instance>> {
    let candidates = classify_candidates(bundle, model, cfg)?;
    Ok(nms(&candidates, cfg.nms_iou))
}
