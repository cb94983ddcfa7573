use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_layout, frame, read_file, unframe, write_file, MODEL_MAGIC};
use crate::classifier::{ClassLayout, ClassifierModel, ModelDims, Parameters, PARAMETER_NAMES};
use crate::numcore::Tensor;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    gamma: f64,
    dims: ModelDims,
    layout: ClassLayout,
    #[serde(default)]
    epoch_losses: Vec<f64>,
    dtype: String,
    tensors: Vec<TensorEntry>,
    payload_bytes: u64,
}

const DTYPE: &str = "f64-le";

pub fn model_to_bytes(model: &ClassifierModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut payload = Vec::new();
    let mut tensors = Vec::with_capacity(PARAMETER_NAMES.len());
    for (t, name) in model.params.tensors().into_iter().zip(PARAMETER_NAMES) {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = ModelHeader {
        gamma: model.gamma,
        dims: model.dims(),
        layout: model.layout.clone(),
        epoch_losses: model.epoch_losses.clone(),
        dtype: DTYPE.to_string(),
        tensors,
        payload_bytes: payload.len() as u64,
    };
    let header = serde_json::to_vec(&header)?;
    Ok(frame(MODEL_MAGIC, &header, &payload))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ClassifierModel> {
    let (header_bytes, payload) = unframe(bytes, MODEL_MAGIC)?;
    let header: ModelHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Inconsistent(format!("header: {e}")))?;
    if header.dtype != DTYPE {
        return Err(Error::Inconsistent(format!("unsupported dtype {}", header.dtype)));
    }
    let mut params = Parameters::zeros(header.dims, header.layout.total_classes());
    if header.tensors.len() != PARAMETER_NAMES.len() {
        return Err(Error::Inconsistent(format!(
            "expected {} tensors, header lists {}",
            PARAMETER_NAMES.len(),
            header.tensors.len()
        )));
    }
    let mut entries = Vec::new();
    for ((entry, name), expected) in header
        .tensors
        .iter()
        .zip(PARAMETER_NAMES)
        .zip(params.tensors())
    {
        if entry.name != name || entry.shape != expected.shape() {
            return Err(Error::Inconsistent(format!(
                "tensor {} {:?}, expected {name} {:?}",
                entry.name,
                entry.shape,
                expected.shape()
            )));
        }
        entries.push((entry.offset, 8 * expected.len() as u64));
    }
    check_layout(&entries, header.payload_bytes, payload.len(), header_bytes.len())?;
    for (entry, t) in header.tensors.iter().zip(params.tensors_mut()) {
        let start = entry.offset as usize;
        let data: Vec<f64> = payload[start..start + 8 * t.len()]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *t = Tensor::new(entry.shape.clone(), data)?;
    }
    let mut model = ClassifierModel::from_parts(params, header.gamma, header.layout)?;
    model.epoch_losses = header.epoch_losses;
    Ok(model)
}

pub fn write_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &model_to_bytes(model)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    model_from_bytes(&read_file(path.as_ref())?)
}
