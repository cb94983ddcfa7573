//! COCO-style mask AP with base/novel splits, and the repeated few-shot
//! episode harness.

mod episodes;
mod report;

pub use episodes::{run_fewshot_episodes, EpisodeConfig, EpisodeReport, TestImage};
pub use report::{evaluate_split, render_table, Report, SplitMetrics};

use crate::maskops::{overlap_counts, Instance, MaskGrid};

/// Detections kept per image and category, highest scores first.
pub const MAX_DETS: usize = 100;

/// Recall sample points for the interpolated precision envelope.
pub const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mask: MaskGrid,
    pub category_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub pred: usize,
    pub gt: Option<usize>,
}

fn iou_or_zero(a: &MaskGrid, b: &MaskGrid) -> f64 {
    let (inter, union) = overlap_counts(a, b);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Prediction indices by descending score, ties in input order.
fn score_order(preds: &[Instance]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

/// Greedy matching on one image. Predictions are visited by descending
/// score; each takes the unmatched same-category ground truth with the
/// highest IoU, provided it is at least `iou_thresh`. Returned in visiting
/// order.
pub fn match_detections(preds: &[Instance], gts: &[GroundTruth], iou_thresh: f64) -> Vec<Match> {
    let mut taken = vec![false; gts.len()];
    score_order(preds)
        .into_iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] || gt.category_id != preds[p].class_id {
                    continue;
                }
                let iou = iou_or_zero(&preds[p].mask, &gt.mask);
                if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            Match {
                pred: p,
                gt: best.map(|(g, _)| g),
            }
        })
        .collect()
}

/// 101-point interpolated AP from true-positive flags ranked by descending
/// score.
pub fn interpolated_ap(ranked_hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(ranked_hits.len());
    let mut precision = Vec::with_capacity(ranked_hits.len());
    for (i, &hit) in ranked_hits.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut total = 0.0;
    for r in 0..RECALL_POINTS {
        let target = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&v| v < target);
        if idx < precision.len() {
            total += precision[idx];
        }
    }
    total / RECALL_POINTS as f64
}

/// Per-image view used for dataset-level AP.
#[derive(Debug, Clone, Copy)]
pub struct ImageEval<'a> {
    pub preds: &'a [Instance],
    pub gts: &'a [GroundTruth],
}

/// AP of one category at one IoU threshold across images; `None` when the
/// category has no ground truth.
pub fn average_precision(images: &[ImageEval<'_>], category: u32, iou_thresh: f64) -> Option<f64> {
    let mut n_gt = 0;
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for img in images {
        let gts: Vec<GroundTruth> = img
            .gts
            .iter()
            .filter(|g| g.category_id == category)
            .cloned()
            .collect();
        n_gt += gts.len();
        let preds: Vec<Instance> = score_order(img.preds)
            .into_iter()
            .map(|i| &img.preds[i])
            .filter(|p| p.class_id == category)
            .take(MAX_DETS)
            .cloned()
            .collect();
        for m in match_detections(&preds, &gts, iou_thresh) {
            scored.push((preds[m.pred].score, m.gt.is_some()));
        }
    }
    if n_gt == 0 {
        return None;
    }
    // Stable: equal scores keep image order, then rank within image.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let hits: Vec<bool> = scored.iter().map(|s| s.1).collect();
    Some(interpolated_ap(&hits, n_gt))
}

/// `(AP over 0.50:0.95, AP50)` for one category.
pub fn category_ap(images: &[ImageEval<'_>], category: u32) -> Option<SplitMetrics> {
    let per_threshold: Vec<f64> = iou_thresholds()
        .iter()
        .map(|&t| average_precision(images, category, t))
        .collect::<Option<_>>()?;
    Some(SplitMetrics {
        ap: per_threshold.iter().sum::<f64>() / per_threshold.len() as f64,
        ap50: per_threshold[0],
    })
}
