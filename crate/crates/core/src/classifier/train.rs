use serde::{Deserialize, Serialize};

use super::conv::conv3x3_backward;
use super::{ClassLayout, ClassifierModel, ModelDims, Parameters, BACKGROUND};
use crate::numcore::{dot, norm, softmax_cross_entropy, RngState, Tensor, NORM_EPS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub point_batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            point_batch: 16,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.point_batch == 0 {
            return Err(Error::InvalidConfig("point_batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loss and exact gradients of softmax cross-entropy over the cosine
/// scores for one `(x, label_row)` sample.
pub fn classifier_backward(
    model: &ClassifierModel,
    x: &Tensor,
    label_row: usize,
) -> Result<(f64, Parameters)> {
    let layout = &model.layout;
    if label_row >= layout.total_classes() || !layout.is_active(label_row) {
        return Err(Error::InactiveLabel(label_row));
    }
    let ModelDims { c_in, c_mid, d } = model.dims();
    let (feature, trace) = model.trace(x)?;
    let scores = model.cosine_scores(&feature)?;
    let (loss, dscores) = softmax_cross_entropy(scores.data(), label_row)?;

    let p = &model.params;
    let mut grads = Parameters::zeros(model.dims(), layout.total_classes());
    let gamma = model.gamma;
    let f = feature.data();
    let f_norm = norm(f);
    let unit_f: Vec<f64> = f.iter().map(|v| v / f_norm).collect();

    // Cosine head. With u = f/‖f‖ and v_c = W_c/‖W_c‖, y_c = γ u·v_c.
    let mut d_unit_f = vec![0.0; d];
    for (row, &g) in dscores.iter().enumerate() {
        if !layout.is_active(row) || g == 0.0 {
            continue;
        }
        let w = p.class_weights.row(row);
        let w_norm = norm(w);
        let unit_w: Vec<f64> = w.iter().map(|v| v / w_norm).collect();
        for (acc, v) in d_unit_f.iter_mut().zip(&unit_w) {
            *acc += gamma * g * v;
        }
        // dL/dW_c = (I - v v^T) (γ g u) / ‖W_c‖
        let proj = dot(&unit_w, &unit_f);
        let gw = grads.class_weights.row_mut(row);
        for j in 0..d {
            gw[j] = gamma * g * (unit_f[j] - proj * unit_w[j]) / w_norm;
        }
    }
    let proj = dot(&d_unit_f, &unit_f);
    let d_feature: Vec<f64> = (0..d)
        .map(|j| (d_unit_f[j] - proj * unit_f[j]) / f_norm)
        .collect();

    // Fully connected layer.
    let mut d_pooled = vec![0.0; c_mid];
    for j in 0..d {
        let gj = d_feature[j];
        grads.fc_bias.data_mut()[j] = gj;
        let row = grads.fc_weight.row_mut(j);
        for (k, g) in row.iter_mut().enumerate() {
            *g = gj * trace.pooled[k];
        }
        for (k, dp) in d_pooled.iter_mut().enumerate() {
            *dp += gj * p.fc_weight.row(j)[k];
        }
    }

    // Global average pool and second ReLU.
    let plane = trace.h * trace.w;
    let mut d_pre2 = vec![0.0; c_mid * plane];
    for ch in 0..c_mid {
        let g = d_pooled[ch] / plane as f64;
        for i in ch * plane..(ch + 1) * plane {
            if trace.pre2[i] > 0.0 {
                d_pre2[i] = g;
            }
        }
    }

    let mut d_hidden1 = conv3x3_backward(
        &trace.hidden1,
        c_mid,
        trace.h,
        trace.w,
        p.conv2_weight.data(),
        c_mid,
        &d_pre2,
        grads.conv2_weight.data_mut(),
        grads.conv2_bias.data_mut(),
        true,
    );
    for (g, &z) in d_hidden1.iter_mut().zip(&trace.pre1) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    conv3x3_backward(
        x.data(),
        c_in,
        trace.h,
        trace.w,
        p.conv1_weight.data(),
        c_mid,
        &d_hidden1,
        grads.conv1_weight.data_mut(),
        grads.conv1_bias.data_mut(),
        false,
    );
    Ok((loss, grads))
}

/// Fresh model: He-uniform conv/fc weights, zero biases, unit-norm random
/// rows for background and base classes, zero inactive novel rows.
pub fn init_model(
    dims: ModelDims,
    layout: ClassLayout,
    gamma: f64,
    seed: u64,
) -> Result<ClassifierModel> {
    if dims.c_in == 0 || dims.c_mid == 0 || dims.d == 0 {
        return Err(Error::InvalidConfig(format!("model dims must be positive: {dims:?}")));
    }
    let mut rng = RngState::new(seed);
    let mut params = Parameters::zeros(dims, layout.total_classes());
    let he = |t: &mut Tensor, fan_in: usize, rng: &mut RngState| {
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in t.data_mut() {
            *v = bound * (2.0 * rng.next_uniform() - 1.0);
        }
    };
    he(&mut params.conv1_weight, dims.c_in * 9, &mut rng);
    he(&mut params.conv2_weight, dims.c_mid * 9, &mut rng);
    he(&mut params.fc_weight, dims.c_mid, &mut rng);
    for row in 0..layout.total_classes() {
        if !layout.is_active(row) {
            continue;
        }
        let w = params.class_weights.row_mut(row);
        loop {
            for v in w.iter_mut() {
                *v = rng.next_gaussian();
            }
            let n = norm(w);
            if n > NORM_EPS {
                w.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
    }
    ClassifierModel::from_parts(params, gamma, layout)
}

/// Plain mini-batch SGD on base-class samples. Labels are category ids
/// with [`BACKGROUND`] for background points.
pub fn train_classifier(
    samples: &[(Tensor, u32)],
    dims: ModelDims,
    layout: ClassLayout,
    gamma: f64,
    cfg: &TrainConfig,
) -> Result<ClassifierModel> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut seen = vec![false; layout.total_classes()];
    for (_, label) in samples {
        if layout.is_novel(*label) {
            return Err(Error::NovelLabelInBaseTraining(*label));
        }
        let row = layout.row_of(*label).ok_or(Error::UnknownCategory(*label))?;
        seen[row] = true;
        rows.push(row);
    }
    let missing: Vec<u32> = layout
        .base_class_ids
        .iter()
        .copied()
        .filter(|&c| !seen[layout.row_of(c).unwrap_or(0)])
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no training samples for base classes {missing:?}"
        )));
    }
    debug_assert_eq!(layout.row_of(BACKGROUND), Some(0));

    let mut model = init_model(dims, layout, gamma, cfg.seed)?;
    let mut rng = RngState::stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.point_batch) {
            let mut acc = Parameters::zeros(model.dims(), model.layout.total_classes());
            for &i in batch {
                let (loss, grads) = classifier_backward(&model, &samples[i].0, rows[i])?;
                epoch_loss += loss;
                acc.add_scaled(1.0, &grads);
            }
            model
                .params
                .add_scaled(-cfg.learning_rate / batch.len() as f64, &acc);
        }
        model.epoch_losses.push(epoch_loss / samples.len().max(1) as f64);
    }
    Ok(model)
}
