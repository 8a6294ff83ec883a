//! JSON checkpoints (`agn/1`).
//!
//! Weights are written as nested decimal arrays using the shortest
//! representation that parses back to the same `f64`, so a save/load cycle
//! is bitwise exact. Matrices are stored row by row.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Activation, ConvLayer, DenseLayer, Model, ModelError, Pooling};
use crate::featurization::FeaturizationConfig;

pub const MODEL_FORMAT_VERSION: &str = "agn/1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    featurization_config: Option<FeaturizationConfig>,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerDoc {
    Conv { w_self: Vec<Vec<f64>>, w_conv: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation },
    Pool { mode: Pooling },
    Dense { weight: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation },
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ModelError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Shape(format!("{what}: empty or ragged matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// Serializes the model and its featurization config.
pub fn save_model(model: &Model) -> String {
    let mut layers: Vec<LayerDoc> = model
        .conv
        .iter()
        .map(|l| LayerDoc::Conv {
            w_self: rows_of(&l.w_self),
            w_conv: rows_of(&l.w_conv),
            bias: l.bias.iter().copied().collect(),
            activation: l.activation,
        })
        .collect();
    layers.push(LayerDoc::Pool { mode: model.pool });
    layers.extend(model.dense.iter().map(|l| LayerDoc::Dense {
        weight: rows_of(&l.weight),
        bias: l.bias.iter().copied().collect(),
        activation: l.activation,
    }));
    let doc = Checkpoint {
        version: MODEL_FORMAT_VERSION.to_string(),
        featurization_config: model.featurization.clone(),
        layers,
    };
    serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
}

/// Parses a checkpoint. Layers must appear as conv…, pool, dense….
pub fn load_model(text: &str) -> Result<Model, ModelError> {
    let doc: Checkpoint = serde_json::from_str(text)?;
    if doc.version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Version { found: doc.version });
    }
    let mut conv = Vec::new();
    let mut pool = None;
    let mut dense = Vec::new();
    for (k, layer) in doc.layers.iter().enumerate() {
        match layer {
            LayerDoc::Conv { w_self, w_conv, bias, activation } => {
                if pool.is_some() {
                    return Err(ModelError::Architecture(format!("layer {k}: conv after pooling")));
                }
                conv.push(ConvLayer::new(
                    matrix_from(w_self, "w_self")?,
                    matrix_from(w_conv, "w_conv")?,
                    DVector::from_column_slice(bias),
                    *activation,
                )?);
            }
            LayerDoc::Pool { mode } => {
                if pool.replace(*mode).is_some() {
                    return Err(ModelError::Architecture(format!("layer {k}: second pooling layer")));
                }
            }
            LayerDoc::Dense { weight, bias, activation } => {
                if pool.is_none() {
                    return Err(ModelError::Architecture(format!("layer {k}: dense before pooling")));
                }
                dense.push(DenseLayer::new(
                    matrix_from(weight, "weight")?,
                    DVector::from_column_slice(bias),
                    *activation,
                )?);
            }
        }
    }
    let pool = pool.ok_or_else(|| ModelError::Architecture("no pooling layer".into()))?;
    let model = Model::new(conv, pool, dense)?;
    Ok(match doc.featurization_config {
        Some(cfg) => model.with_featurization(cfg),
        None => model,
    })
}
