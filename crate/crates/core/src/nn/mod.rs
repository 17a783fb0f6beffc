//! From-scratch LSTM with a dense readout: 64-bit arithmetic throughout,
//! exact backpropagation through time, and an Adam optimizer. The reference
//! forward/backward path is deterministic with a fixed reduction order.

mod adam;
mod lstm;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use lstm::{
    backward_batch, forward_batch, lstm_forward, mse_loss, predict_head, predict_head_batch,
    BatchCache,
};

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl NetShape {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        NetShape { input, hidden, output }
    }
}

/// Gate order used everywhere: input, forget, cell candidate, output.
pub const GATE_NAMES: [&str; 4] = ["input", "forget", "cell", "output"];

/// All trainable parameters of one subnetwork. The same struct doubles as a
/// gradient container (one slot per parameter tensor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub shape: NetShape,
    /// Per gate: hidden x input.
    pub w_input: [Mat; 4],
    /// Per gate: hidden x hidden.
    pub w_recur: [Mat; 4],
    /// Per gate: hidden.
    pub bias: [Vec<f64>; 4],
    /// Dense readout: output x hidden. No output nonlinearity.
    pub w_head: Mat,
    pub b_head: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(shape: NetShape) -> Self {
        let (i, h, o) = (shape.input, shape.hidden, shape.output);
        LstmParams {
            shape,
            w_input: std::array::from_fn(|_| Mat::zeros(h, i)),
            w_recur: std::array::from_fn(|_| Mat::zeros(h, h)),
            bias: std::array::from_fn(|_| vec![0.0; h]),
            w_head: Mat::zeros(o, h),
            b_head: vec![0.0; o],
        }
    }

    /// Seeded initialization: each weight matrix uniform in
    /// [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero except the forget gate
    /// bias at 1.0.
    pub fn init(shape: NetShape, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = LstmParams::zeros(shape);
        let fill = |m: &mut Mat, fan_in: usize, rng: &mut ChaCha12Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut m.data {
                *v = rng.gen_range(-bound..=bound);
            }
        };
        for g in 0..4 {
            fill(&mut params.w_input[g], shape.input, &mut rng);
        }
        for g in 0..4 {
            fill(&mut params.w_recur[g], shape.hidden, &mut rng);
        }
        fill(&mut params.w_head, shape.hidden, &mut rng);
        for b in &mut params.bias[1] {
            *b = 1.0;
        }
        params
    }

    /// Parameter tensors in a fixed order (gradients, moments, and
    /// serialization all walk this order).
    pub fn tensor_names() -> Vec<String> {
        let mut names = Vec::new();
        for g in GATE_NAMES {
            names.push(format!("w_input_{g}"));
        }
        for g in GATE_NAMES {
            names.push(format!("w_recur_{g}"));
        }
        for g in GATE_NAMES {
            names.push(format!("bias_{g}"));
        }
        names.push("w_head".into());
        names.push("b_head".into());
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = Vec::with_capacity(14);
        t.extend(self.w_input.iter().map(|m| m.data.as_slice()));
        t.extend(self.w_recur.iter().map(|m| m.data.as_slice()));
        t.extend(self.bias.iter().map(|b| b.as_slice()));
        t.push(self.w_head.data.as_slice());
        t.push(self.b_head.as_slice());
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut t: Vec<&mut Vec<f64>> = Vec::with_capacity(14);
        t.extend(self.w_input.iter_mut().map(|m| &mut m.data));
        t.extend(self.w_recur.iter_mut().map(|m| &mut m.data));
        t.extend(self.bias.iter_mut());
        t.push(&mut self.w_head.data);
        t.push(&mut self.b_head);
        t
    }

    /// (name, rows, cols) of each tensor; bias vectors report cols = len,
    /// rows = 1.
    pub fn tensor_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut shapes = Vec::new();
        for (name, m) in Self::tensor_names().iter().zip(self.tensors()) {
            let (r, c) = self.shape_of(name, m.len());
            shapes.push((name.clone(), r, c));
        }
        shapes
    }

    fn shape_of(&self, name: &str, len: usize) -> (usize, usize) {
        let h = self.shape.hidden;
        if name.starts_with("w_input_") {
            (h, self.shape.input)
        } else if name.starts_with("w_recur_") {
            (h, h)
        } else if name == "w_head" {
            (self.shape.output, h)
        } else {
            (1, len)
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Max |a - b| over all parameters; shapes must match.
    pub fn max_abs_diff(&self, other: &LstmParams) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::InvalidArgument("parameter shape mismatch".into()));
        }
        let mut max = 0.0f64;
        for (a, b) in self.tensors().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter().zip(b) {
                max = max.max((x - y).abs());
            }
        }
        Ok(max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let shape = NetShape::new(16, 25, 8);
        let a = LstmParams::init(shape, 42);
        let b = LstmParams::init(shape, 42);
        assert_eq!(a, b);
        let c = LstmParams::init(shape, 43);
        assert_ne!(a, c);
        let bound = 1.0 / 16f64.sqrt();
        assert!(a.w_input[0].data.iter().all(|v| v.abs() <= bound));
        // forget gate bias starts at 1
        assert!(a.bias[1].iter().all(|v| *v == 1.0));
        assert!(a.bias[0].iter().all(|v| *v == 0.0));
        assert_eq!(a.num_parameters(), 4 * (25 * 16 + 25 * 25 + 25) + 8 * 25 + 8);
    }

    #[test]
    fn tensor_walk_covers_everything() {
        let shape = NetShape::new(3, 4, 2);
        let p = LstmParams::zeros(shape);
        assert_eq!(p.tensors().len(), 14);
        assert_eq!(LstmParams::tensor_names().len(), 14);
        let total: usize = p.tensors().iter().map(|t| t.len()).sum();
        assert_eq!(total, p.num_parameters());
    }
}
