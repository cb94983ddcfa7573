//! Novel-class weight imprinting.
//!
//! A novel row of the cosine weight matrix is set to the average of the
//! unit-normalized features of its shots, computed with the frozen
//! base-trained feature extractor. Nothing else in the model changes.

use crate::classifier::ClassifierModel;
use crate::numcore::{norm, Tensor, NORM_EPS};
use crate::{Error, Result};

/// Few-shot examples (mask embeddings) for one novel class.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotSet {
    pub class_id: u32,
    pub embeddings: Vec<Tensor>,
}

impl ShotSet {
    pub fn new(class_id: u32, embeddings: Vec<Tensor>) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "shot set for class {class_id} is empty"
            )));
        }
        Ok(ShotSet {
            class_id,
            embeddings,
        })
    }

    pub fn n_shots(&self) -> usize {
        self.embeddings.len()
    }
}

/// Averaged unit feature of the shots; the vector written into W.
pub fn imprinted_row(model: &ClassifierModel, shots: &ShotSet) -> Result<Vec<f64>> {
    if shots.embeddings.is_empty() {
        return Err(Error::InvalidConfig("empty shot set".into()));
    }
    let d = model.dims().d;
    let mut sum = vec![0.0; d];
    for (i, shot) in shots.embeddings.iter().enumerate() {
        let f = model.feature_extract(shot)?;
        let n = norm(f.data());
        if n <= NORM_EPS {
            return Err(Error::DegenerateShot(i));
        }
        for (acc, v) in sum.iter_mut().zip(f.data()) {
            *acc += v / n;
        }
    }
    let count = shots.n_shots() as f64;
    Ok(sum.into_iter().map(|v| v / count).collect())
}

/// Returns a copy of `model` with the novel class of `shots` imprinted.
/// Re-imprinting an active class replaces its row.
pub fn imprint_novel_class(model: &ClassifierModel, shots: &ShotSet) -> Result<ClassifierModel> {
    let row = novel_row(model, shots.class_id)?;
    let weights = imprinted_row(model, shots)?;
    let mut out = model.clone();
    out.params.class_weights.row_mut(row).copy_from_slice(&weights);
    out.layout.active[row] = true;
    Ok(out)
}

/// Zeroes an imprinted novel row and marks it inactive again.
pub fn remove_novel_class(model: &ClassifierModel, class_id: u32) -> Result<ClassifierModel> {
    let row = novel_row(model, class_id)?;
    if !model.layout.is_active(row) {
        return Err(Error::InactiveRow(class_id));
    }
    let mut out = model.clone();
    out.params.class_weights.row_mut(row).fill(0.0);
    out.layout.active[row] = false;
    Ok(out)
}

fn novel_row(model: &ClassifierModel, class_id: u32) -> Result<usize> {
    if !model.layout.is_novel(class_id) {
        return Err(Error::NotNovelSlot(class_id));
    }
    model
        .layout
        .row_of(class_id)
        .ok_or(Error::NotNovelSlot(class_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{init_model, ClassLayout, ModelDims, Parameters};
    use crate::numcore::{l2_normalize, RngState};

    fn model() -> ClassifierModel {
        let layout = ClassLayout::new(vec![1, 2, 3], vec![4, 5]).unwrap();
        init_model(ModelDims { c_in: 4, c_mid: 6, d: 8 }, layout, 7.0, 5).unwrap()
    }

    fn embedding(rng: &mut RngState) -> Tensor {
        Tensor::new(vec![4, 5, 5], (0..100).map(|_| rng.next_gaussian()).collect()).unwrap()
    }

    /// Two input channels copied straight through to two feature dims.
    fn passthrough_model() -> ClassifierModel {
        let dims = ModelDims { c_in: 2, c_mid: 2, d: 4 };
        let layout = ClassLayout::new(vec![1], vec![2]).unwrap();
        let mut p = Parameters::zeros(dims, 3);
        // centre taps: conv1 ch c <- input ch c, conv2 identity
        p.conv1_weight.data_mut()[4] = 1.0;
        p.conv1_weight.data_mut()[(2 + 1) * 9 + 4] = 1.0;
        p.conv2_weight.data_mut()[4] = 1.0;
        p.conv2_weight.data_mut()[(2 + 1) * 9 + 4] = 1.0;
        p.fc_weight.data_mut()[0] = 1.0;
        p.fc_weight.data_mut()[2 + 1] = 1.0;
        p.class_weights.row_mut(0).copy_from_slice(&[0.0, 0.0, 1.0, 0.0]);
        p.class_weights.row_mut(1).copy_from_slice(&[0.0, 0.0, 0.0, 1.0]);
        ClassifierModel::from_parts(p, 7.0, layout).unwrap()
    }

    #[test]
    fn single_shot_row_is_normalized_feature() {
        let m = model();
        let mut rng = RngState::new(1);
        let shot = embedding(&mut rng);
        let out = imprint_novel_class(&m, &ShotSet::new(4, vec![shot.clone()]).unwrap()).unwrap();
        let expected = l2_normalize(&m.feature_extract(&shot).unwrap()).unwrap();
        assert_eq!(out.params.class_weights.row(4), expected.data());
        assert!(out.layout.is_active(4));
        assert!(!out.layout.is_active(5));
    }

    #[test]
    fn two_orthogonal_shots_average() {
        let m = passthrough_model();
        let a = Tensor::new(vec![2, 3, 3], [vec![2.0; 9], vec![0.0; 9]].concat()).unwrap();
        let b = Tensor::new(vec![2, 3, 3], [vec![0.0; 9], vec![5.0; 9]].concat()).unwrap();
        let out = imprint_novel_class(&m, &ShotSet::new(2, vec![a, b]).unwrap()).unwrap();
        assert_eq!(out.params.class_weights.row(2), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn other_parameters_are_untouched() {
        let m = model();
        let mut rng = RngState::new(2);
        let shots = ShotSet::new(5, vec![embedding(&mut rng), embedding(&mut rng)]).unwrap();
        let out = imprint_novel_class(&m, &shots).unwrap();
        for (a, b) in m.params.tensors().iter().zip(out.params.tensors()).take(6) {
            assert_eq!(*a, b);
        }
        for row in 0..5 {
            assert_eq!(m.params.class_weights.row(row), out.params.class_weights.row(row));
        }
        // idempotent
        assert_eq!(imprint_novel_class(&out, &shots).unwrap(), out);
    }

    #[test]
    fn imprint_then_remove_restores_model() {
        let m = model();
        let mut rng = RngState::new(3);
        let out = imprint_novel_class(&m, &ShotSet::new(4, vec![embedding(&mut rng)]).unwrap()).unwrap();
        assert_eq!(remove_novel_class(&out, 4).unwrap(), m);
    }

    #[test]
    fn remove_never_imprinted_fails() {
        assert!(matches!(remove_novel_class(&model(), 5), Err(Error::InactiveRow(5))));
    }

    #[test]
    fn base_class_is_not_a_novel_slot() {
        let mut rng = RngState::new(4);
        let shots = ShotSet::new(2, vec![embedding(&mut rng)]).unwrap();
        assert!(matches!(imprint_novel_class(&model(), &shots), Err(Error::NotNovelSlot(2))));
        assert!(matches!(remove_novel_class(&model(), 2), Err(Error::NotNovelSlot(2))));
    }

    #[test]
    fn zero_feature_shot_is_degenerate() {
        let m = passthrough_model();
        let zero = Tensor::zeros(vec![2, 3, 3]);
        let err = imprint_novel_class(&m, &ShotSet::new(2, vec![zero]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("degenerate shot"));
    }

    #[test]
    fn removing_one_class_keeps_the_other() {
        let m = model();
        let mut rng = RngState::new(6);
        let a = ShotSet::new(4, vec![embedding(&mut rng)]).unwrap();
        let b = ShotSet::new(5, vec![embedding(&mut rng)]).unwrap();
        let probe = b.embeddings[0].clone();
        let with_b = imprint_novel_class(&m, &b).unwrap();
        let with_ab = imprint_novel_class(&imprint_novel_class(&m, &a).unwrap(), &b).unwrap();
        let back = remove_novel_class(&with_ab, 4).unwrap();
        assert_eq!(back.classifier_forward(&probe).unwrap(), with_b.classifier_forward(&probe).unwrap());
    }

    #[test]
    fn base_scores_are_preserved() {
        let m = model();
        let mut rng = RngState::new(7);
        let out = imprint_novel_class(&m, &ShotSet::new(4, vec![embedding(&mut rng)]).unwrap()).unwrap();
        for _ in 0..20 {
            let x = embedding(&mut rng);
            let before = m.classifier_forward(&x).unwrap().0;
            let after = out.classifier_forward(&x).unwrap().0;
            assert_eq!(before.data()[..4], after.data()[..4]);
        }
    }

    #[test]
    fn stored_row_norm_is_at_most_one() {
        let m = model();
        let mut rng = RngState::new(8);
        for n in 1..5 {
            let shots = ShotSet::new(4, (0..n).map(|_| embedding(&mut rng)).collect()).unwrap();
            let row = imprinted_row(&m, &shots).unwrap();
            assert!(norm(&row) <= 1.0 + 1e-12);
        }
        // Identical shot directions give a unit row.
        let e = embedding(&mut rng);
        let row = imprinted_row(&m, &ShotSet::new(4, vec![e.clone(), e]).unwrap()).unwrap();
        assert!((norm(&row) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescaled_row_scores_identically() {
        let m = model();
        let mut rng = RngState::new(9);
        let out = imprint_novel_class(&m, &ShotSet::new(4, vec![embedding(&mut rng), embedding(&mut rng)]).unwrap()).unwrap();
        let mut scaled = out.clone();
        scaled.params.class_weights.row_mut(4).iter_mut().for_each(|v| *v *= 4.0);
        for _ in 0..10 {
            let f = m.feature_extract(&embedding(&mut rng)).unwrap();
            assert_eq!(out.cosine_scores(&f).unwrap(), scaled.cosine_scores(&f).unwrap());
        }
    }
}
