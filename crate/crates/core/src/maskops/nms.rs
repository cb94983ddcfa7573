use super::{overlap_counts, Instance};

/// Greedy class-agnostic non-maximum suppression.
///
/// Instances are visited by descending score (ties keep input order) and
/// kept iff their IoU with every kept instance is `<= iou_thresh`. Two empty
/// masks count as fully overlapping.
pub fn nms(instances: &[Instance], iou_thresh: f64) -> Vec<Instance> {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| instances[b].score.total_cmp(&instances[a].score));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let suppressed = kept.iter().any(|&k| {
            let (inter, union) = overlap_counts(&instances[i].mask, &instances[k].mask);
            let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
            iou > iou_thresh
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| instances[i].clone()).collect()
}
