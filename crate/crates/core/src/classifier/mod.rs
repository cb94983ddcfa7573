//! Cosine-similarity classifier over mask embeddings.
//!
//! The feature extractor is conv3×3 → ReLU → conv3×3 → ReLU → global
//! average pool → fully connected. The head scores each active class row
//! `c` as `γ · f·W[c] / (‖f‖‖W[c]‖)`; inactive (not yet imprinted) novel
//! rows score `-inf` and are excluded from prediction and from the loss.

mod conv;
mod layout;
mod train;

pub use layout::{ClassLayout, BACKGROUND};
pub use train::{classifier_backward, init_model, train_classifier, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::numcore::{dot, norm, Tensor, NORM_EPS};
use crate::{Error, Result};

/// Output of the feature extractor, a rank-1 tensor of length `d`.
pub type FeatureVector = Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub c_in: usize,
    pub c_mid: usize,
    pub d: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            c_in: 16,
            c_mid: 32,
            d: 64,
        }
    }
}

/// Trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub conv1_weight: Tensor,
    pub conv1_bias: Tensor,
    pub conv2_weight: Tensor,
    pub conv2_bias: Tensor,
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
    /// Cosine weight matrix, one row per class.
    pub class_weights: Tensor,
}

pub const PARAMETER_NAMES: [&str; 7] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "fc.weight",
    "fc.bias",
    "cosine.weight",
];

impl Parameters {
    pub fn zeros(dims: ModelDims, classes: usize) -> Self {
        let ModelDims { c_in, c_mid, d } = dims;
        Parameters {
            conv1_weight: Tensor::zeros(vec![c_mid, c_in, 3, 3]),
            conv1_bias: Tensor::zeros(vec![c_mid]),
            conv2_weight: Tensor::zeros(vec![c_mid, c_mid, 3, 3]),
            conv2_bias: Tensor::zeros(vec![c_mid]),
            fc_weight: Tensor::zeros(vec![d, c_mid]),
            fc_bias: Tensor::zeros(vec![d]),
            class_weights: Tensor::zeros(vec![classes, d]),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 7] {
        [
            &self.conv1_weight,
            &self.conv1_bias,
            &self.conv2_weight,
            &self.conv2_bias,
            &self.fc_weight,
            &self.fc_bias,
            &self.class_weights,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 7] {
        [
            &mut self.conv1_weight,
            &mut self.conv1_bias,
            &mut self.conv2_weight,
            &mut self.conv2_bias,
            &mut self.fc_weight,
            &mut self.fc_bias,
            &mut self.class_weights,
        ]
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &Parameters) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += alpha * s;
            }
        }
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            c_in: self.conv1_weight.shape()[1],
            c_mid: self.conv1_weight.shape()[0],
            d: self.fc_weight.shape()[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub params: Parameters,
    pub gamma: f64,
    pub layout: ClassLayout,
    /// Mean training loss of each epoch, in order.
    pub epoch_losses: Vec<f64>,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub h: usize,
    pub w: usize,
    pub hidden1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub pooled: Vec<f64>,
    pub pre1: Vec<f64>,
}

impl ClassifierModel {
    pub fn from_parts(params: Parameters, gamma: f64, layout: ClassLayout) -> Result<Self> {
        let model = ClassifierModel {
            params,
            gamma,
            layout,
            epoch_losses: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        let dims = self.dims();
        let expected = Parameters::zeros(dims, self.layout.total_classes());
        for ((have, want), name) in self
            .params
            .tensors()
            .into_iter()
            .zip(expected.tensors())
            .zip(PARAMETER_NAMES)
        {
            if have.shape() != want.shape() {
                return Err(Error::shape(
                    format!("{name} {:?}", want.shape()),
                    have.shape(),
                ));
            }
            if !have.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} has non-finite values")));
            }
        }
        for row in 0..self.layout.total_classes() {
            if !self.layout.is_active(row)
                && self.params.class_weights.row(row).iter().any(|&v| v != 0.0)
            {
                return Err(Error::InvalidConfig(format!("inactive row {row} is not zero")));
            }
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: &Tensor) -> Result<(FeatureVector, ForwardTrace)> {
        let ModelDims { c_in, c_mid, d } = self.dims();
        let shape = x.shape();
        if shape.len() != 3 || shape[0] != c_in || shape[1] < 3 || shape[2] < 3 {
            return Err(Error::shape(format!("[{c_in}, h>=3, w>=3]"), shape));
        }
        let (h, w) = (shape[1], shape[2]);
        let p = &self.params;
        let pre1 = conv::conv3x3_forward(
            x.data(),
            c_in,
            h,
            w,
            p.conv1_weight.data(),
            p.conv1_bias.data(),
            c_mid,
        );
        let hidden1: Vec<f64> = pre1.iter().map(|&v| v.max(0.0)).collect();
        let pre2 = conv::conv3x3_forward(
            &hidden1,
            c_mid,
            h,
            w,
            p.conv2_weight.data(),
            p.conv2_bias.data(),
            c_mid,
        );
        let plane = (h * w) as f64;
        let pooled: Vec<f64> = pre2
            .chunks_exact(h * w)
            .map(|ch| ch.iter().map(|&v| v.max(0.0)).sum::<f64>() / plane)
            .collect();
        let feature: Vec<f64> = (0..d)
            .map(|j| p.fc_bias.data()[j] + dot(p.fc_weight.row(j), &pooled))
            .collect();
        let trace = ForwardTrace {
            h,
            w,
            pre1,
            hidden1,
            pre2,
            pooled,
        };
        Ok((Tensor::vector(feature), trace))
    }

    /// Maps a `c_in×h×w` mask embedding to a `d`-dimensional feature.
    pub fn feature_extract(&self, x: &Tensor) -> Result<FeatureVector> {
        self.trace(x).map(|(f, _)| f)
    }

    /// γ-scaled cosine score per class row; inactive rows are `-inf`.
    pub fn cosine_scores(&self, f: &FeatureVector) -> Result<Tensor> {
        let d = self.dims().d;
        if f.shape() != [d] {
            return Err(Error::shape([d], f.shape()));
        }
        let f_norm = norm(f.data());
        if f_norm <= NORM_EPS {
            return Err(Error::ZeroNorm);
        }
        let weights = &self.params.class_weights;
        let mut scores = Vec::with_capacity(self.layout.total_classes());
        for row in 0..self.layout.total_classes() {
            if !self.layout.is_active(row) {
                scores.push(f64::NEG_INFINITY);
                continue;
            }
            let w = weights.row(row);
            let w_norm = norm(w);
            if w_norm <= NORM_EPS {
                return Err(Error::UninitializedClassRow(row));
            }
            scores.push(self.gamma * dot(f.data(), w) / (f_norm * w_norm));
        }
        Ok(Tensor::vector(scores))
    }

    pub fn classifier_forward(&self, x: &Tensor) -> Result<(Tensor, FeatureVector)> {
        let f = self.feature_extract(x)?;
        let scores = self.cosine_scores(&f)?;
        Ok((scores, f))
    }

    /// Highest-scoring row, ties to the lower index.
    pub fn predict_row(&self, x: &Tensor) -> Result<(usize, f64)> {
        let (scores, _) = self.classifier_forward(x)?;
        Ok(argmax(scores.data()))
    }
}

pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
