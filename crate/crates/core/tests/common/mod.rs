//! Hand-built values behind the checked-in fixtures in `tests/fixtures/`.
#![allow(dead_code)]

use std::path::PathBuf;

use fsis::bundleio::{
    Annotation, AnnotationSet, Category, EmbeddingBundle, ImageInfo, PointRecord, Provenance, Split,
};
use fsis::classifier::{ClassLayout, ClassifierModel, ModelDims, Parameters};
use fsis::maskops::{rle_encode, LogitGrid, MaskGrid, PromptPoint};
use fsis::numcore::Tensor;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden_bundle() -> EmbeddingBundle {
    let record = |x, y, k: f64| PointRecord {
        point: PromptPoint::foreground(x, y),
        logits: LogitGrid::new(2, 2, vec![k, -k, 0.5 * k, -2.0]).unwrap(),
        embedding: Tensor::new(vec![2, 1, 2], vec![k, 0.25, -0.5, 1.0 / k]).unwrap(),
    };
    EmbeddingBundle {
        image_id: 7,
        height: 4,
        width: 4,
        provenance: Provenance::Synthetic,
        notes: Some("golden fixture".into()),
        c_in: 2,
        embed_h: 1,
        embed_w: 2,
        logit_h: 2,
        logit_w: 2,
        records: vec![record(1, 1, 2.0), record(3, 2, 4.0)],
    }
}

pub fn golden_model() -> ClassifierModel {
    let dims = ModelDims { c_in: 2, c_mid: 2, d: 3 };
    let mut params = Parameters::zeros(dims, 3);
    for (t, tensor) in params.tensors_mut().into_iter().enumerate() {
        for (i, v) in tensor.data_mut().iter_mut().enumerate() {
            *v = 0.125 * (i as f64 + 1.0) - 0.5 * t as f64;
        }
    }
    // row 2 is the inactive novel slot
    params.class_weights.row_mut(2).fill(0.0);
    let layout = ClassLayout::new(vec![1], vec![2]).unwrap();
    let mut model = ClassifierModel::from_parts(params, 7.0, layout).unwrap();
    model.epoch_losses = vec![1.5, 0.75, 0.1];
    model
}

pub fn golden_annotations() -> AnnotationSet {
    let a = MaskGrid::from_fn(4, 4, |y, x| y < 2 && x < 3);
    let b = MaskGrid::from_fn(4, 4, |y, x| y == 3 && x >= 1);
    AnnotationSet {
        info: Some(serde_json::json!({ "description": "golden fixture" })),
        images: vec![ImageInfo { id: 7, height: 4, width: 4 }],
        annotations: vec![
            Annotation { id: 1, image_id: 7, category_id: 1, segmentation: rle_encode(&a), score: None },
            Annotation { id: 2, image_id: 7, category_id: 2, segmentation: rle_encode(&b), score: Some(0.875) },
        ],
        categories: vec![
            Category { id: 1, name: "base_1".into(), split: Split::Base },
            Category { id: 2, name: "novel_2".into(), split: Split::Novel },
        ],
    }
}
