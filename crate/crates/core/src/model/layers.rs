//! Layer types, forward passes and their hand-derived backward passes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numeric::order_independent_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Softplus,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            // ln(1 + e^z) without overflow for large |z|
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Graph operator `X ↦ X L̂` with a summation order that does not depend on
/// atom labels.
#[derive(Debug, Clone)]
pub(crate) struct GraphOperator {
    laplacian: DMatrix<f64>,
    /// Nonzero `(i, L̂[i,k])` for every column `k`.
    columns: Vec<Vec<(usize, f64)>>,
}

impl GraphOperator {
    pub(crate) fn new(laplacian: DMatrix<f64>) -> Self {
        let columns = (0..laplacian.ncols())
            .map(|k| laplacian.column(k).iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i, v)).collect())
            .collect();
        Self { laplacian, columns }
    }

    pub(crate) fn len(&self) -> usize {
        self.laplacian.nrows()
    }

    pub(crate) fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub(crate) fn right_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), self.len());
        let mut terms = Vec::new();
        for (k, col) in self.columns.iter().enumerate() {
            for r in 0..x.nrows() {
                terms.clear();
                terms.extend(col.iter().map(|&(i, l)| x[(r, i)] * l));
                out[(r, k)] = order_independent_sum(&mut terms);
            }
        }
        out
    }
}

/// `W · X` evaluated column by column so each column's arithmetic is
/// independent of its position in `X`.
pub(crate) fn matmul_columns(w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(w.nrows(), x.ncols(), |r, k| (0..w.ncols()).map(|c| w[(r, c)] * x[(c, k)]).sum())
}

/// Laplacian graph convolution:
/// `act(W_self · X + W_conv · X · L̂ + b 1ᵀ)`, with `X` features × atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub w_self: DMatrix<f64>,
    pub w_conv: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn new(
        w_self: DMatrix<f64>,
        w_conv: DMatrix<f64>,
        bias: DVector<f64>,
        activation: Activation,
    ) -> Result<Self, ModelError> {
        if w_self.shape() != w_conv.shape() || bias.len() != w_self.nrows() {
            return Err(ModelError::Shape(format!(
                "conv layer: W_self {:?}, W_conv {:?}, bias {}",
                w_self.shape(),
                w_conv.shape(),
                bias.len()
            )));
        }
        Ok(Self { w_self, w_conv, bias, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.w_self.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w_self.nrows()
    }

    /// Returns `(X L̂, Z, act(Z))`.
    pub(crate) fn forward_traced(
        &self,
        x: &DMatrix<f64>,
        op: &GraphOperator,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let aggregated = op.right_apply(x);
        let mut z = matmul_columns(&self.w_self, x) + matmul_columns(&self.w_conv, &aggregated);
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        let y = z.map(|v| self.activation.apply(v));
        (aggregated, z, y)
    }
}

/// Gradients of one conv layer, plus the gradient with respect to its input.
pub(crate) struct ConvBackward {
    pub w_self: DMatrix<f64>,
    pub w_conv: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub input: DMatrix<f64>,
}

impl ConvLayer {
    pub(crate) fn backward(
        &self,
        x: &DMatrix<f64>,
        aggregated: &DMatrix<f64>,
        z: &DMatrix<f64>,
        d_out: &DMatrix<f64>,
        laplacian: &DMatrix<f64>,
    ) -> ConvBackward {
        let dz = d_out.zip_map(z, |g, zv| g * self.activation.derivative(zv));
        let w_self = &dz * x.transpose();
        let w_conv = &dz * aggregated.transpose();
        let bias = dz.column_sum();
        let input = self.w_self.transpose() * &dz + (self.w_conv.transpose() * &dz) * laplacian.transpose();
        ConvBackward { w_self, w_conv, bias, input }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

impl Pooling {
    /// Row-wise pooling over atoms; also returns the arg-max column per row
    /// (first on ties) for max pooling.
    pub(crate) fn forward_traced(self, x: &DMatrix<f64>) -> Result<(DVector<f64>, Vec<usize>), ModelError> {
        let n = x.ncols();
        if n == 0 || x.nrows() == 0 {
            return Err(ModelError::EmptyInput);
        }
        match self {
            Pooling::Mean => {
                let mut row = Vec::with_capacity(n);
                let pooled = DVector::from_fn(x.nrows(), |r, _| {
                    row.clear();
                    row.extend(x.row(r).iter().copied());
                    order_independent_sum(&mut row) / n as f64
                });
                Ok((pooled, Vec::new()))
            }
            Pooling::Max => {
                let mut argmax = Vec::with_capacity(x.nrows());
                let pooled = DVector::from_fn(x.nrows(), |r, _| {
                    let (k, v) = x.row(r).iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |best, (k, v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    });
                    argmax.push(k);
                    v
                });
                Ok((pooled, argmax))
            }
        }
    }

    pub(crate) fn backward(self, d_pooled: &DVector<f64>, n: usize, argmax: &[usize]) -> DMatrix<f64> {
        match self {
            Pooling::Mean => DMatrix::from_fn(d_pooled.len(), n, |r, _| d_pooled[r] / n as f64),
            Pooling::Max => {
                let mut d = DMatrix::zeros(d_pooled.len(), n);
                for (r, &k) in argmax.iter().enumerate() {
                    d[(r, k)] = d_pooled[r];
                }
                d
            }
        }
    }
}

/// Fully connected layer `act(W h + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self, ModelError> {
        if bias.len() != weight.nrows() {
            return Err(ModelError::Shape(format!("dense layer: weight {:?}, bias {}", weight.shape(), bias.len())));
        }
        Ok(Self { weight, bias, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Returns `(z, act(z))`.
    pub(crate) fn forward_traced(&self, h: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let z = &self.weight * h + &self.bias;
        let y = z.map(|v| self.activation.apply(v));
        (z, y)
    }

    /// Returns `(dW, db, dh)`.
    pub(crate) fn backward(
        &self,
        h: &DVector<f64>,
        z: &DVector<f64>,
        d_out: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let dz = d_out.zip_map(z, |g, zv| g * self.activation.derivative(zv));
        let dw = &dz * h.transpose();
        let dh = self.weight.transpose() * &dz;
        (dw, dz, dh)
    }
}
