use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{category_ap, ImageEval};
use crate::classifier::ClassLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub ap: f64,
    pub ap50: f64,
}

/// Overall/base/novel metrics. A split with no evaluated category is
/// `None` and renders as "-".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub overall: Option<SplitMetrics>,
    pub base: Option<SplitMetrics>,
    pub novel: Option<SplitMetrics>,
    pub per_category: BTreeMap<u32, SplitMetrics>,
}

fn mean(values: &[SplitMetrics]) -> Option<SplitMetrics> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    Some(SplitMetrics {
        ap: values.iter().map(|m| m.ap).sum::<f64>() / n,
        ap50: values.iter().map(|m| m.ap50).sum::<f64>() / n,
    })
}

/// Evaluates base categories and imprinted novel categories. Categories
/// without ground truth are skipped; novel categories that are not active
/// in `layout` are not evaluated at all.
pub fn evaluate_split(images: &[ImageEval<'_>], layout: &ClassLayout) -> Report {
    let active_novel = layout.active_novel();
    let mut per_category = BTreeMap::new();
    let mut base = Vec::new();
    let mut novel = Vec::new();
    for &cat in &layout.base_class_ids {
        if let Some(m) = category_ap(images, cat) {
            per_category.insert(cat, m);
            base.push(m);
        }
    }
    for &cat in &active_novel {
        if let Some(m) = category_ap(images, cat) {
            per_category.insert(cat, m);
            novel.push(m);
        }
    }
    let all: Vec<SplitMetrics> = per_category.values().copied().collect();
    Report {
        overall: mean(&all),
        base: mean(&base),
        novel: mean(&novel),
        per_category,
    }
}

impl Report {
    /// Field-wise arithmetic mean. A split is present in the mean only if
    /// it is present in every report.
    pub fn mean_of(reports: &[Report]) -> Report {
        let split = |get: fn(&Report) -> Option<SplitMetrics>| -> Option<SplitMetrics> {
            let values: Option<Vec<SplitMetrics>> = reports.iter().map(get).collect();
            values.and_then(|v| mean(&v))
        };
        let mut per_category = BTreeMap::new();
        if let Some(first) = reports.first() {
            for &cat in first.per_category.keys() {
                let values: Option<Vec<SplitMetrics>> = reports
                    .iter()
                    .map(|r| r.per_category.get(&cat).copied())
                    .collect();
                if let Some(m) = values.and_then(|v| mean(&v)) {
                    per_category.insert(cat, m);
                }
            }
        }
        Report {
            overall: split(|r| r.overall),
            base: split(|r| r.base),
            novel: split(|r| r.novel),
            per_category,
        }
    }
}

fn cell(m: Option<SplitMetrics>) -> [String; 2] {
    match m {
        Some(m) => [format!("{:.2}", 100.0 * m.ap), format!("{:.2}", 100.0 * m.ap50)],
        None => ["-".into(), "-".into()],
    }
}

/// Plain-text table with Overall/Base/Novel column groups, values in
/// percent.
pub fn render_table(rows: &[(String, &Report)]) -> String {
    let label_w = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:label_w$}  {:<15}  {:<15}  {:<15}",
        "", "Overall", "Base", "Novel"
    );
    let _ = writeln!(
        out,
        "{:label_w$}  {:>6}  {:>6}   {:>6}  {:>6}   {:>6}  {:>6}",
        "Method", "AP", "AP50", "AP", "AP50", "AP", "AP50"
    );
    for (label, r) in rows {
        let [oa, o5] = cell(r.overall);
        let [ba, b5] = cell(r.base);
        let [na, n5] = cell(r.novel);
        let _ = writeln!(
            out,
            "{label:label_w$}  {oa:>6}  {o5:>6}   {ba:>6}  {b5:>6}   {na:>6}  {n5:>6}"
        );
    }
    out
}
