//! A small crystal-graph convolutional network.
//!
//! Graph convolutions mix each atom's features with its neighbors' through
//! the normalized graph Laplacian; pooling collapses atoms to a fixed-length
//! vector; a dense head maps that to one scalar. Gradients are derived by
//! hand per layer.
//!
//! Every reduction over atoms uses an order-independent sum, so predictions
//! are bitwise invariant under relabeling of the atoms.

mod checkpoint;
mod layers;
mod train;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::atomgraph::normalized_laplacian;
use crate::featurization::{FeaturizationConfig, FeaturizedAtoms};

pub use checkpoint::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use layers::{Activation, ConvLayer, DenseLayer, Pooling};
pub use train::{train, Optimizer, TrainConfig};

pub(crate) use layers::GraphOperator;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {context} expects {expected}, input has {found}")]
    DimensionMismatch { context: String, expected: usize, found: usize },
    #[error("input featurization differs from the model's featurization config")]
    FeaturizationMismatch,
    #[error("{0}")]
    Shape(String),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("non-finite value in {layer}")]
    NonFinite { layer: String },
    #[error("pooling over an empty feature matrix")]
    EmptyInput,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("target {index} is not finite")]
    NonFiniteTarget { index: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("checkpoint version `{found}` is not supported (expected {MODEL_FORMAT_VERSION})")]
    Version { found: String },
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

/// Layer sizes for a freshly initialized model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    /// Rows of the feature matrix.
    pub input_dim: usize,
    /// Output width of each conv layer.
    pub conv_dims: Vec<usize>,
    /// Widths of the hidden dense layers before the scalar output.
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub pooling: Pooling,
}

impl ModelShape {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            conv_dims: vec![16, 16],
            hidden_dims: vec![16],
            activation: Activation::Softplus,
            pooling: Pooling::Mean,
        }
    }
}

/// Conv stack, pooling and dense head ending in one linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    conv: Vec<ConvLayer>,
    pool: Pooling,
    dense: Vec<DenseLayer>,
    featurization: Option<FeaturizationConfig>,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

fn uniform_vector(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-bound..=bound))
}

impl Model {
    pub fn new(conv: Vec<ConvLayer>, pool: Pooling, dense: Vec<DenseLayer>) -> Result<Self, ModelError> {
        let first =
            conv.first().ok_or_else(|| ModelError::Architecture("at least one conv layer is required".into()))?;
        let mut width = first.in_dim();
        for (k, layer) in conv.iter().enumerate() {
            if layer.in_dim() != width {
                return Err(ModelError::Architecture(format!(
                    "conv layer {k} takes {} features, previous layer gives {width}",
                    layer.in_dim()
                )));
            }
            width = layer.out_dim();
        }
        for (k, layer) in dense.iter().enumerate() {
            if layer.in_dim() != width {
                return Err(ModelError::Architecture(format!(
                    "dense layer {k} takes {} inputs, previous layer gives {width}",
                    layer.in_dim()
                )));
            }
            width = layer.out_dim();
        }
        match dense.last() {
            Some(last) if last.out_dim() == 1 && last.activation == Activation::Identity => {}
            _ => return Err(ModelError::Architecture("dense head must end in a 1-output identity layer".into())),
        }
        Ok(Self { conv, pool, dense, featurization: None })
    }

    /// Random initialization, every parameter uniform in ±1/√fan_in.
    pub fn init(shape: &ModelShape, seed: u64) -> Result<Self, ModelError> {
        if shape.input_dim == 0 || shape.conv_dims.iter().chain(&shape.hidden_dims).any(|&d| d == 0) {
            return Err(ModelError::Architecture("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut width = shape.input_dim;
        let mut conv = Vec::with_capacity(shape.conv_dims.len());
        for &out in &shape.conv_dims {
            let bound = 1.0 / (width as f64).sqrt();
            conv.push(ConvLayer::new(
                uniform_matrix(&mut rng, out, width, bound),
                uniform_matrix(&mut rng, out, width, bound),
                uniform_vector(&mut rng, out, bound),
                shape.activation,
            )?);
            width = out;
        }
        let mut dense = Vec::with_capacity(shape.hidden_dims.len() + 1);
        let outs = shape.hidden_dims.iter().map(|&d| (d, shape.activation));
        for (out, act) in outs.chain(std::iter::once((1, Activation::Identity))) {
            let bound = 1.0 / (width as f64).sqrt();
            dense.push(DenseLayer::new(
                uniform_matrix(&mut rng, out, width, bound),
                uniform_vector(&mut rng, out, bound),
                act,
            )?);
            width = out;
        }
        Self::new(conv, shape.pooling, dense)
    }

    /// Attaches the featurization config inputs must match.
    pub fn with_featurization(mut self, cfg: FeaturizationConfig) -> Self {
        self.featurization = Some(cfg);
        self
    }

    pub fn featurization(&self) -> Option<&FeaturizationConfig> {
        self.featurization.as_ref()
    }

    pub fn conv_layers(&self) -> &[ConvLayer] {
        &self.conv
    }

    pub fn pooling(&self) -> Pooling {
        self.pool
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.dense
    }

    /// Feature rows the first conv layer expects.
    pub fn input_dim(&self) -> usize {
        self.conv[0].in_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameter_slices().iter().map(|s| s.len()).sum()
    }

    fn parameter_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.conv {
            out.extend([l.w_self.as_slice(), l.w_conv.as_slice(), l.bias.as_slice()]);
        }
        for l in &self.dense {
            out.extend([l.weight.as_slice(), l.bias.as_slice()]);
        }
        out
    }

    fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.conv {
            let ConvLayer { w_self, w_conv, bias, .. } = l;
            out.extend([w_self.as_mut_slice(), w_conv.as_mut_slice(), bias.as_mut_slice()]);
        }
        for l in &mut self.dense {
            let DenseLayer { weight, bias, .. } = l;
            out.extend([weight.as_mut_slice(), bias.as_mut_slice()]);
        }
        out
    }

    /// All parameters flattened: per conv layer W_self, W_conv, b; then per
    /// dense layer W, b. Matrices are column-major.
    pub fn parameters(&self) -> Vec<f64> {
        self.parameter_slices().concat()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.num_parameters() {
            return Err(ModelError::DimensionMismatch {
                context: "parameter vector".into(),
                expected: self.num_parameters(),
                found: values.len(),
            });
        }
        let mut rest = values;
        for slice in self.parameter_slices_mut() {
            let (head, tail) = rest.split_at(slice.len());
            slice.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, fa: &FeaturizedAtoms) -> Result<(), ModelError> {
        let rows = fa.matrix().nrows();
        if rows != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                context: "model input (first conv layer)".into(),
                expected: self.input_dim(),
                found: rows,
            });
        }
        if let Some(cfg) = &self.featurization {
            if cfg != &fa.scheme().to_config() {
                return Err(ModelError::FeaturizationMismatch);
            }
        }
        Ok(())
    }

    pub(crate) fn prepare<'a>(&self, fa: &'a FeaturizedAtoms) -> Result<Prepared<'a>, ModelError> {
        self.check_input(fa)?;
        Ok(Prepared { features: fa.matrix(), op: GraphOperator::new(normalized_laplacian(fa.graph())) })
    }

    /// Scalar prediction for one featurized structure.
    pub fn predict(&self, fa: &FeaturizedAtoms) -> Result<f64, ModelError> {
        Ok(self.forward(&self.prepare(fa)?)?.output)
    }

    pub(crate) fn forward(&self, input: &Prepared<'_>) -> Result<Trace, ModelError> {
        let mut conv = Vec::with_capacity(self.conv.len());
        let mut x = input.features.clone();
        for (k, layer) in self.conv.iter().enumerate() {
            let (aggregated, z, y) = layer.forward_traced(&x, &input.op);
            ensure_finite(y.iter(), || format!("conv layer {k}"))?;
            conv.push(ConvTrace { input: x, aggregated, pre: z });
            x = y;
        }
        let (pooled, argmax) = self.pool.forward_traced(&x)?;
        let mut dense_inputs = Vec::with_capacity(self.dense.len());
        let mut dense_pre = Vec::with_capacity(self.dense.len());
        let mut h = pooled;
        for (k, layer) in self.dense.iter().enumerate() {
            let (z, y) = layer.forward_traced(&h);
            ensure_finite(y.iter(), || format!("dense layer {k}"))?;
            dense_inputs.push(h);
            dense_pre.push(z);
            h = y;
        }
        Ok(Trace { conv, last_conv_out: x, argmax, dense_inputs, dense_pre, output: h[0] })
    }

    /// Gradient of the scalar output scaled by `d_output`.
    pub(crate) fn backward(&self, trace: &Trace, op: &GraphOperator, d_output: f64) -> Result<Gradients, ModelError> {
        let mut dense = Vec::with_capacity(self.dense.len());
        let mut dh = DVector::from_element(1, d_output);
        for (k, layer) in self.dense.iter().enumerate().rev() {
            let (dw, db, dprev) = layer.backward(&trace.dense_inputs[k], &trace.dense_pre[k], &dh);
            dense.push(DenseGrad { weight: dw, bias: db });
            dh = dprev;
        }
        dense.reverse();

        let n = trace.last_conv_out.ncols();
        let mut dx = self.pool.backward(&dh, n, &trace.argmax);
        let mut conv = Vec::with_capacity(self.conv.len());
        for (k, layer) in self.conv.iter().enumerate().rev() {
            let t = &trace.conv[k];
            let g = layer.backward(&t.input, &t.aggregated, &t.pre, &dx, op.laplacian());
            conv.push(ConvGrad { w_self: g.w_self, w_conv: g.w_conv, bias: g.bias });
            dx = g.input;
        }
        conv.reverse();
        let grads = Gradients { conv, dense };
        grads.ensure_finite()?;
        Ok(grads)
    }
}

fn ensure_finite<'a>(
    mut values: impl Iterator<Item = &'a f64>,
    layer: impl FnOnce() -> String,
) -> Result<(), ModelError> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { layer: layer() })
    }
}

/// Feature matrix plus its precomputed graph operator.
pub(crate) struct Prepared<'a> {
    pub features: &'a DMatrix<f64>,
    pub op: GraphOperator,
}

pub(crate) struct ConvTrace {
    input: DMatrix<f64>,
    aggregated: DMatrix<f64>,
    pre: DMatrix<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct Trace {
    conv: Vec<ConvTrace>,
    last_conv_out: DMatrix<f64>,
    argmax: Vec<usize>,
    dense_inputs: Vec<DVector<f64>>,
    dense_pre: Vec<DVector<f64>>,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub w_self: DMatrix<f64>,
    pub w_conv: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Gradient record with the same layout as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv: Vec<ConvGrad>,
    pub dense: Vec<DenseGrad>,
}

impl Gradients {
    /// Flattened in the order of [`Model::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.conv {
            out.extend_from_slice(g.w_self.as_slice());
            out.extend_from_slice(g.w_conv.as_slice());
            out.extend_from_slice(g.bias.as_slice());
        }
        for g in &self.dense {
            out.extend_from_slice(g.weight.as_slice());
            out.extend_from_slice(g.bias.as_slice());
        }
        out
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.conv.iter_mut().zip(&other.conv) {
            a.w_self += &b.w_self;
            a.w_conv += &b.w_conv;
            a.bias += &b.bias;
        }
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    fn ensure_finite(&self) -> Result<(), ModelError> {
        for (k, g) in self.conv.iter().enumerate() {
            ensure_finite(g.w_self.iter().chain(g.w_conv.iter()).chain(g.bias.iter()), || {
                format!("conv layer {k} gradient")
            })?;
        }
        for (k, g) in self.dense.iter().enumerate() {
            ensure_finite(g.weight.iter().chain(g.bias.iter()), || format!("dense layer {k} gradient"))?;
        }
        Ok(())
    }
}

/// Convolution of `x` (features × atoms) over a graph with normalized
/// Laplacian `laplacian`.
pub fn conv_forward(layer: &ConvLayer, x: &DMatrix<f64>, laplacian: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    if x.nrows() != layer.in_dim() {
        return Err(ModelError::DimensionMismatch {
            context: "conv layer input".into(),
            expected: layer.in_dim(),
            found: x.nrows(),
        });
    }
    if laplacian.shape() != (x.ncols(), x.ncols()) {
        return Err(ModelError::DimensionMismatch {
            context: "Laplacian size (atoms)".into(),
            expected: x.ncols(),
            found: laplacian.nrows(),
        });
    }
    let (_, _, y) = layer.forward_traced(x, &GraphOperator::new(laplacian.clone()));
    Ok(y)
}

/// Row-wise mean or max over atoms.
pub fn pool_forward(pool: Pooling, x: &DMatrix<f64>) -> Result<DVector<f64>, ModelError> {
    pool.forward_traced(x).map(|(p, _)| p)
}

pub fn model_forward(model: &Model, fa: &FeaturizedAtoms) -> Result<f64, ModelError> {
    model.predict(fa)
}

/// Mean squared error over `samples[indices]` and its gradient, evaluated in
/// parallel and reduced in index order.
pub(crate) fn batch_loss_and_gradients(
    model: &Model,
    samples: &[Prepared<'_>],
    targets: &[f64],
    indices: &[usize],
) -> Result<(f64, Gradients), ModelError> {
    if indices.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let scale = 1.0 / indices.len() as f64;
    let per_sample: Vec<(f64, Gradients)> = indices
        .par_iter()
        .map(|&i| {
            let trace = model.forward(&samples[i])?;
            let residual = trace.output - targets[i];
            let grads = model.backward(&trace, &samples[i].op, 2.0 * residual * scale)?;
            Ok((residual * residual, grads))
        })
        .collect::<Result<_, ModelError>>()?;
    let mut iter = per_sample.into_iter();
    let (first_sq, mut total) = iter.next().expect("non-empty batch");
    let mut sum_sq = first_sq;
    for (sq, g) in iter {
        sum_sq += sq;
        total.add_assign(&g);
    }
    Ok((sum_sq * scale, total))
}

/// Mean squared error over `samples[indices]`, forward only.
pub(crate) fn batch_loss(
    model: &Model,
    samples: &[Prepared<'_>],
    targets: &[f64],
    indices: &[usize],
) -> Result<f64, ModelError> {
    let residuals: Vec<f64> = indices
        .par_iter()
        .map(|&i| model.forward(&samples[i]).map(|t| t.output - targets[i]))
        .collect::<Result<_, _>>()?;
    Ok(residuals.iter().map(|r| r * r).sum::<f64>() / indices.len() as f64)
}

fn prepare_batch<'a>(
    model: &Model,
    batch: &'a [(FeaturizedAtoms, f64)],
) -> Result<(Vec<Prepared<'a>>, Vec<f64>), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut prepared = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for (index, (fa, target)) in batch.iter().enumerate() {
        if !target.is_finite() {
            return Err(ModelError::NonFiniteTarget { index });
        }
        prepared.push(model.prepare(fa)?);
        targets.push(*target);
    }
    Ok((prepared, targets))
}

/// Mean squared error over the batch and the analytic gradient of every
/// parameter.
pub fn loss_and_gradients(model: &Model, batch: &[(FeaturizedAtoms, f64)]) -> Result<(f64, Gradients), ModelError> {
    let (prepared, targets) = prepare_batch(model, batch)?;
    let indices: Vec<usize> = (0..batch.len()).collect();
    batch_loss_and_gradients(model, &prepared, &targets, &indices)
}

/// Mean squared error of the model's predictions over the batch.
pub fn mse(model: &Model, batch: &[(FeaturizedAtoms, f64)]) -> Result<f64, ModelError> {
    let (prepared, targets) = prepare_batch(model, batch)?;
    let indices: Vec<usize> = (0..batch.len()).collect();
    batch_loss(model, &prepared, &targets, &indices)
}
