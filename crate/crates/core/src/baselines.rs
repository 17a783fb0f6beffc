//! Reference predictors: a per-horizon ridge regression on the flattened
//! integration window, and the per-horizon training-set mean with its
//! standard-deviation band.

use crate::error::{Error, Result};
use crate::features::{WindowSample, FEATURE_DIM, MOTOR_DIM};
use crate::nn::Mat;
use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

/// Linear map from a flattened window (L * 16 features plus a bias term) to
/// the 8 motor outputs at one prediction distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub horizon_frames: usize,
    pub integration_ms: f64,
    pub ridge_lambda: f64,
    /// (L * 16 + 1) x 8, bias weights in the last row.
    pub weights: Mat,
}

/// Fit by normal equations with an unpenalized bias:
/// (X^T X + lambda I') W = X^T Y.
pub fn fit_linear(windows: &[WindowSample], ridge_lambda: f64) -> Result<LinearPredictor> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no windows to fit".into()));
    }
    if ridge_lambda < 0.0 {
        return Err(Error::InvalidArgument("ridge lambda must be >= 0".into()));
    }
    let steps = windows[0].input.len();
    let dim = steps * FEATURE_DIM + 1;
    let n = windows.len();

    let mut x = DMatrix::<f64>::zeros(n, dim);
    let mut y = DMatrix::<f64>::zeros(n, MOTOR_DIM);
    for (r, w) in windows.iter().enumerate() {
        for (t, frame) in w.input.iter().enumerate() {
            for (j, v) in frame.iter().enumerate() {
                x[(r, t * FEATURE_DIM + j)] = *v;
            }
        }
        x[(r, dim - 1)] = 1.0;
        for (j, v) in w.target.iter().enumerate() {
            y[(r, j)] = *v;
        }
    }

    let mut a = x.transpose() * &x;
    for i in 0..dim - 1 {
        a[(i, i)] += ridge_lambda;
    }
    let b = x.transpose() * &y;

    let chol = Cholesky::new(a).ok_or_else(|| {
        if ridge_lambda == 0.0 {
            Error::IllConditioned(
                "X^T X is singular with lambda = 0; refit with a small ridge_lambda".into(),
            )
        } else {
            Error::IllConditioned(format!(
                "normal matrix not positive definite even with lambda = {ridge_lambda}"
            ))
        }
    })?;
    let w = chol.solve(&b);

    let mut weights = Mat::zeros(dim, MOTOR_DIM);
    for i in 0..dim {
        for j in 0..MOTOR_DIM {
            *weights.at_mut(i, j) = w[(i, j)];
        }
    }
    Ok(LinearPredictor {
        horizon_frames: windows[0].horizon_frames,
        integration_ms: windows[0].integration_ms,
        ridge_lambda,
        weights,
    })
}

pub fn predict_linear(p: &LinearPredictor, input: &[[f64; FEATURE_DIM]]) -> [f64; MOTOR_DIM] {
    let mut out = [0.0; MOTOR_DIM];
    let dim = p.weights.rows;
    debug_assert_eq!(input.len() * FEATURE_DIM + 1, dim);
    for (t, frame) in input.iter().enumerate() {
        for (j, v) in frame.iter().enumerate() {
            let row = p.weights.row(t * FEATURE_DIM + j);
            for (o, w) in row.iter().enumerate() {
                out[o] += v * w;
            }
        }
    }
    for (o, w) in p.weights.row(dim - 1).iter().enumerate() {
        out[o] += w;
    }
    out
}

/// Per-horizon mean motor state and population standard deviation, computed
/// on training targets. Predicting the mean at every trial is the
/// "ignores trial-by-trial variation" reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanPredictor {
    pub horizons: Vec<usize>,
    pub means: Vec<[f64; MOTOR_DIM]>,
    pub sds: Vec<[f64; MOTOR_DIM]>,
}

pub fn fit_mean(targets_by_horizon: &[(usize, Vec<[f64; MOTOR_DIM]>)]) -> Result<MeanPredictor> {
    let mut pred = MeanPredictor { horizons: Vec::new(), means: Vec::new(), sds: Vec::new() };
    for (horizon, targets) in targets_by_horizon {
        if targets.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no targets for horizon {horizon}"
            )));
        }
        let n = targets.len() as f64;
        let mut mean = [0.0; MOTOR_DIM];
        let mut sumsq = [0.0; MOTOR_DIM];
        for t in targets {
            for j in 0..MOTOR_DIM {
                mean[j] += t[j];
                sumsq[j] += t[j] * t[j];
            }
        }
        let mut sd = [0.0; MOTOR_DIM];
        for j in 0..MOTOR_DIM {
            mean[j] /= n;
            sd[j] = (sumsq[j] / n - mean[j] * mean[j]).max(0.0).sqrt();
        }
        pred.horizons.push(*horizon);
        pred.means.push(mean);
        pred.sds.push(sd);
    }
    Ok(pred)
}

impl MeanPredictor {
    pub fn band(&self, horizon_frames: usize) -> Option<([f64; MOTOR_DIM], [f64; MOTOR_DIM])> {
        let idx = self.horizons.iter().position(|h| *h == horizon_frames)?;
        Some((self.means[idx], self.sds[idx]))
    }
}
