//! Double-double arithmetic and an independent forward pass, used as a
//! finite-difference oracle with roundoff far below the step size.

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use crystalnet::{Activation, FeaturizedAtoms, Model, Pooling};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };
    const LN2: DD = DD { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

    pub fn from(v: f64) -> DD {
        DD { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale_pow2(self, k: i32) -> DD {
        let f = 2f64.powi(k);
        DD { hi: self.hi * f, lo: self.lo * f }
    }

    pub fn exp(self) -> DD {
        if self.hi < -700.0 {
            return DD::ZERO;
        }
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = (self - DD::LN2 * DD::from(k)).scale_pow2(-4);
        let mut term = DD::ONE;
        let mut sum = DD::ONE;
        for n in 1..=24 {
            term = term * r / DD::from(f64::from(n));
            sum = sum + term;
        }
        for _ in 0..4 {
            sum = sum * sum;
        }
        sum.scale_pow2(k as i32)
    }

    /// Natural log of a positive value by Newton steps on `exp`.
    pub fn ln(self) -> DD {
        let mut x = DD::from(self.hi.ln());
        for _ in 0..3 {
            x = x + self * (-x).exp() - DD::ONE;
        }
        x
    }

    pub fn max0(self) -> DD {
        if self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0) {
            self
        } else {
            DD::ZERO
        }
    }

    pub fn abs(self) -> DD {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, b: DD) -> DD {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, b: DD) -> DD {
        self + (-b)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, b: DD) -> DD {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p) + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, b: DD) -> DD {
        let q1 = self.hi / b.hi;
        let r = self - b * DD::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * DD::from(q2);
        let q3 = r.hi / b.hi;
        DD::from(q1) + DD::from(q2) + DD::from(q3)
    }
}

fn activate(a: Activation, z: DD) -> DD {
    match a {
        Activation::Identity => z,
        Activation::Relu => z.max0(),
        Activation::Softplus => z.max0() + (DD::ONE + (-z.abs()).exp()).ln(),
    }
}

type Mat = Vec<Vec<DD>>;

/// Column-major `rows × cols` block taken from `params` starting at `at`.
fn take(params: &[DD], at: &mut usize, rows: usize, cols: usize) -> Mat {
    let m = (0..rows).map(|r| (0..cols).map(|c| params[*at + c * rows + r]).collect()).collect();
    *at += rows * cols;
    m
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| (0..cols).map(|c| (0..inner).fold(DD::ZERO, |acc, k| acc + row[k] * b[k][c])).collect())
        .collect()
}

/// Prediction for `fa` with the model's architecture and the flat
/// parameter vector `params` (same order as `Model::parameters`).
pub fn predict(model: &Model, params: &[DD], fa: &FeaturizedAtoms) -> DD {
    let lap = crystalnet::normalized_laplacian(fa.graph());
    let n = lap.nrows();
    let l: Mat = (0..n).map(|i| (0..n).map(|j| DD::from(lap[(i, j)])).collect()).collect();
    let x0 = fa.matrix();
    let mut x: Mat = (0..x0.nrows()).map(|r| (0..n).map(|c| DD::from(x0[(r, c)])).collect()).collect();
    let mut at = 0;
    for layer in model.conv_layers() {
        let (o, i) = (layer.out_dim(), layer.in_dim());
        let ws = take(params, &mut at, o, i);
        let wc = take(params, &mut at, o, i);
        let b = take(params, &mut at, o, 1);
        let a = matmul(&ws, &x);
        let c = matmul(&wc, &matmul(&x, &l));
        x = (0..o).map(|r| (0..n).map(|k| activate(layer.activation, a[r][k] + c[r][k] + b[r][0])).collect()).collect();
    }
    let mut h: Vec<DD> = x
        .iter()
        .map(|row| match model.pooling() {
            Pooling::Mean => row.iter().fold(DD::ZERO, |s, &v| s + v) / DD::from(n as f64),
            Pooling::Max => row.iter().copied().fold(row[0], |m, v| if v.hi > m.hi { v } else { m }),
        })
        .collect();
    for layer in model.dense_layers() {
        let (o, i) = (layer.out_dim(), layer.in_dim());
        let w = take(params, &mut at, o, i);
        let b = take(params, &mut at, o, 1);
        h = (0..o).map(|r| activate(layer.activation, (0..i).fold(b[r][0], |s, k| s + w[r][k] * h[k]))).collect();
    }
    h[0]
}

pub fn mse(model: &Model, params: &[DD], batch: &[(FeaturizedAtoms, f64)]) -> DD {
    let sum = batch.iter().fold(DD::ZERO, |s, (fa, t)| {
        let r = predict(model, params, fa) - DD::from(*t);
        s + r * r
    });
    sum / DD::from(batch.len() as f64)
}

/// Central differences `(L(θ + h e_k) − L(θ − h e_k)) / 2h` for every
/// parameter, evaluated in double-double.
pub fn central_differences(model: &Model, batch: &[(FeaturizedAtoms, f64)], h: f64) -> Vec<f64> {
    let theta: Vec<DD> = model.parameters().into_iter().map(DD::from).collect();
    let step = DD::from(h);
    (0..theta.len())
        .map(|k| {
            let mut p = theta.clone();
            p[k] = theta[k] + step;
            let up = mse(model, &p, batch);
            p[k] = theta[k] - step;
            let down = mse(model, &p, batch);
            ((up - down) / (step + step)).to_f64()
        })
        .collect()
}
