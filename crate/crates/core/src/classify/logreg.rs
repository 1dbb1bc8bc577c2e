use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{check_xy, Scorer};

/// L2-regularized logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

impl LinearModel {
    /// All-zero weights over `d` features: every score is 0.5.
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            bias: 0.0,
            feature_means: vec![0.0; d],
            feature_stds: vec![1.0; d],
        }
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        self.bias
            + row
                .iter()
                .zip(&self.weights)
                .zip(self.feature_means.iter().zip(&self.feature_stds))
                .map(|((x, w), (m, s))| w * (x - m) / s)
                .sum::<f64>()
    }
}

impl Scorer for LinearModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub epochs: usize,
    pub lr: f64,
    /// Inverse regularization strength `1 / C`; the penalty is
    /// `l2 / (2n) * |w|^2` next to the mean log-loss.
    pub l2: f64,
    /// Stop once the full gradient norm drops below this.
    pub grad_tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            epochs: 20_000,
            lr: 0.25,
            l2: 1.0,
            grad_tol: 1e-6,
        }
    }
}

/// Regularized mean log-loss of `(weights, bias)` on already standardized rows.
pub fn logreg_objective(z: &[Vec<f64>], y: &[bool], weights: &[f64], bias: f64, l2: f64) -> f64 {
    let n = z.len() as f64;
    let data: f64 = z
        .iter()
        .zip(y)
        .map(|(row, &t)| {
            let s = bias + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
            softplus(s) - if t { s } else { 0.0 }
        })
        .sum::<f64>()
        / n;
    data + l2 / (2.0 * n) * weights.iter().map(|w| w * w).sum::<f64>()
}

fn standardize(x: &[Vec<f64>], d: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for j in 0..d {
        let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let v = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
        means[j] = m;
        stds[j] = if v.sqrt() < 1e-12 { 1.0 } else { v.sqrt() };
    }
    let z = x
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - means[j]) / stds[j]).collect())
        .collect();
    (z, means, stds)
}

pub fn train_logreg(x: &[Vec<f64>], y: &[bool], params: &LogRegParams) -> Result<LinearModel> {
    train_logreg_traced(x, y, params).map(|(m, _)| m)
}

/// Full-batch gradient descent from zero weights. Also returns the objective
/// value before every step and after the last one.
pub fn train_logreg_traced(
    x: &[Vec<f64>],
    y: &[bool],
    params: &LogRegParams,
) -> Result<(LinearModel, Vec<f64>)> {
    let d = check_xy(x, y)?;
    let positives = y.iter().filter(|&&t| t).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Training(
            "logistic regression needs samples of both classes".into(),
        ));
    }
    if params.lr.is_nan() || params.lr <= 0.0 || params.l2 < 0.0 {
        return Err(Error::arg("learning rate must be > 0 and l2 >= 0"));
    }
    let (z, means, stds) = standardize(x, d);
    let n = x.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut trace = Vec::new();
    let mut gw = vec![0.0; d];
    for _ in 0..params.epochs {
        trace.push(logreg_objective(&z, y, &w, b, params.l2));
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &t) in z.iter().zip(y) {
            let s = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let r = sigmoid(s) - if t { 1.0 } else { 0.0 };
            gb += r;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        gb /= n;
        for (g, wj) in gw.iter_mut().zip(&w) {
            *g = *g / n + params.l2 / n * wj;
        }
        let norm = (gb * gb + gw.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if norm < params.grad_tol {
            break;
        }
        b -= params.lr * gb;
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= params.lr * g;
        }
    }
    trace.push(logreg_objective(&z, y, &w, b, params.l2));
    Ok((
        LinearModel {
            weights: w,
            bias: b,
            feature_means: means,
            feature_stds: stds,
        },
        trace,
    ))
}
