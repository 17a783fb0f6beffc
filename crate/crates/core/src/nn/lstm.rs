//! Batched LSTM forward pass, dense readout, MSE loss, and exact BPTT
//! gradients. Batches are step-major: one B x input matrix per timestep.
//!
//! Internally the four gate weight matrices are packed into concatenated
//! (and for the forward path, transposed) scratch buffers so the per-step
//! products run as single wide GEMMs.

use super::{LstmParams, Mat};
use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// C = A * B^T for A: m x k, B: n x k.
fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols);
    let mut c = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        let cr = c.row_mut(i);
        for j in 0..b.rows {
            let br = b.row(j);
            let mut acc = 0.0;
            for k in 0..a.cols {
                acc += ar[k] * br[k];
            }
            cr[j] = acc;
        }
    }
    c
}

/// C += A^T * B for A: b x m, B: b x n (sum of row outer products).
fn acc_tn(c: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.rows, b.rows);
    assert_eq!(c.rows, a.cols);
    assert_eq!(c.cols, b.cols);
    for r in 0..a.rows {
        let ar = a.row(r);
        let br = b.row(r);
        for i in 0..a.cols {
            let s = ar[i];
            let cr = c.row_mut(i);
            for j in 0..b.cols {
                cr[j] += s * br[j];
            }
        }
    }
}

/// C += A * B for A: m x k, B: k x n, with the j loop innermost over
/// contiguous rows of B and C.
fn acc_nn(c: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.cols, b.rows);
    assert_eq!(c.rows, a.rows);
    assert_eq!(c.cols, b.cols);
    for i in 0..a.rows {
        let ar = a.row(i);
        let cr = c.row_mut(i);
        for k in 0..a.cols {
            let s = ar[k];
            let br = b.row(k);
            for j in 0..b.cols {
                cr[j] += s * br[j];
            }
        }
    }
}

/// Gate weights packed for the hot loops: `wx_t` and `wh_t` are transposed
/// concatenations (input x 4h, hidden x 4h), `wh_cat` keeps the recurrent
/// rows in native orientation (4h x hidden) for the backward pass.
struct CatWeights {
    wx_t: Mat,
    wh_t: Mat,
    wh_cat: Mat,
    bias: Vec<f64>,
}

fn cat_weights(params: &LstmParams) -> CatWeights {
    let h = params.shape.hidden;
    let input = params.shape.input;
    let mut wx_t = Mat::zeros(input, 4 * h);
    let mut wh_t = Mat::zeros(h, 4 * h);
    let mut wh_cat = Mat::zeros(4 * h, h);
    let mut bias = vec![0.0; 4 * h];
    for g in 0..4 {
        for j in 0..h {
            for k in 0..input {
                *wx_t.at_mut(k, g * h + j) = params.w_input[g].at(j, k);
            }
            for k in 0..h {
                *wh_t.at_mut(k, g * h + j) = params.w_recur[g].at(j, k);
            }
            wh_cat.row_mut(g * h + j).copy_from_slice(params.w_recur[g].row(j));
            bias[g * h + j] = params.bias[g][j];
        }
    }
    CatWeights { wx_t, wh_t, wh_cat, bias }
}

/// Per-step activations retained for backpropagation through time.
#[derive(Debug, Clone)]
pub struct BatchCache {
    pub xs: Vec<Mat>,
    /// Post-activation gates per step: input, forget, cell candidate, output.
    pub gates: Vec<[Mat; 4]>,
    pub cells: Vec<Mat>,
    pub tanh_cells: Vec<Mat>,
    pub hiddens: Vec<Mat>,
}

impl BatchCache {
    pub fn batch_size(&self) -> usize {
        self.xs.first().map_or(0, |x| x.rows)
    }

    pub fn steps(&self) -> usize {
        self.xs.len()
    }
}

/// Standard LSTM recurrence over a batch of equal-length sequences with
/// h_0 = c_0 = 0. Returns the final hidden state (B x hidden) and the cache
/// for BPTT.
pub fn forward_batch(xs: &[Mat], params: &LstmParams) -> Result<(Mat, BatchCache)> {
    let shape = params.shape;
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty input sequence".into()));
    }
    let batch = xs[0].rows;
    for x in xs {
        if x.rows != batch || x.cols != shape.input {
            return Err(Error::InvalidArgument(format!(
                "step shape {}x{} does not match batch {} x input {}",
                x.rows, x.cols, batch, shape.input
            )));
        }
        if !x.is_finite() {
            return Err(Error::NumericInput("non-finite value in input sequence".into()));
        }
    }

    let h = shape.hidden;
    let cat = cat_weights(params);
    let mut cache = BatchCache {
        xs: xs.to_vec(),
        gates: Vec::with_capacity(xs.len()),
        cells: Vec::with_capacity(xs.len()),
        tanh_cells: Vec::with_capacity(xs.len()),
        hiddens: Vec::with_capacity(xs.len()),
    };

    let mut h_prev = Mat::zeros(batch, h);
    let mut c_prev = Mat::zeros(batch, h);
    for x in xs {
        let mut pre = Mat::zeros(batch, 4 * h);
        for r in 0..batch {
            pre.row_mut(r).copy_from_slice(&cat.bias);
        }
        acc_nn(&mut pre, x, &cat.wx_t);
        acc_nn(&mut pre, &h_prev, &cat.wh_t);

        let mut gates: [Mat; 4] = std::array::from_fn(|_| Mat::zeros(batch, h));
        for r in 0..batch {
            let row = pre.row(r);
            for g in 0..4 {
                let dst = gates[g].row_mut(r);
                let src = &row[g * h..(g + 1) * h];
                if g == 2 {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s.tanh();
                    }
                } else {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = sigmoid(*s);
                    }
                }
            }
        }
        let [i_g, f_g, g_g, o_g] = gates;

        let mut c = Mat::zeros(batch, h);
        let mut tanh_c = Mat::zeros(batch, h);
        let mut h_new = Mat::zeros(batch, h);
        for idx in 0..batch * h {
            c.data[idx] = f_g.data[idx] * c_prev.data[idx] + i_g.data[idx] * g_g.data[idx];
            tanh_c.data[idx] = c.data[idx].tanh();
            h_new.data[idx] = o_g.data[idx] * tanh_c.data[idx];
        }

        h_prev = h_new.clone();
        c_prev = c.clone();
        cache.gates.push([i_g, f_g, g_g, o_g]);
        cache.cells.push(c);
        cache.tanh_cells.push(tanh_c);
        cache.hiddens.push(h_new);
    }

    Ok((h_prev, cache))
}

/// Single-sequence forward pass: `seq` is L x input, returns the final
/// hidden state.
pub fn lstm_forward(seq: &Mat, params: &LstmParams) -> Result<(Vec<f64>, BatchCache)> {
    let xs: Vec<Mat> = (0..seq.rows)
        .map(|t| Mat { rows: 1, cols: seq.cols, data: seq.row(t).to_vec() })
        .collect();
    let (h, cache) = forward_batch(&xs, params)?;
    Ok((h.data, cache))
}

/// Affine readout for a batch of hidden states, no output nonlinearity.
pub fn predict_head_batch(hidden: &Mat, params: &LstmParams) -> Mat {
    let mut y = matmul_nt(hidden, &params.w_head);
    for r in 0..y.rows {
        let row = y.row_mut(r);
        for (j, b) in params.b_head.iter().enumerate() {
            row[j] += b;
        }
    }
    y
}

pub fn predict_head(hidden: &[f64], params: &LstmParams) -> Vec<f64> {
    let h = Mat { rows: 1, cols: hidden.len(), data: hidden.to_vec() };
    predict_head_batch(&h, params).data
}

/// Mean over all N x D entries of the squared difference.
pub fn mse_loss(predictions: &Mat, targets: &Mat) -> Result<f64> {
    if predictions.rows != targets.rows || predictions.cols != targets.cols {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            predictions.rows, predictions.cols, targets.rows, targets.cols
        )));
    }
    let n = (predictions.rows * predictions.cols) as f64;
    let sum: f64 = predictions
        .data
        .iter()
        .zip(&targets.data)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n)
}

/// Exact gradients of the batch MSE with respect to every parameter, by
/// backpropagation through time over the cached activations.
pub fn backward_batch(
    cache: &BatchCache,
    params: &LstmParams,
    predictions: &Mat,
    targets: &Mat,
) -> LstmParams {
    let shape = params.shape;
    let batch = cache.batch_size();
    let h = shape.hidden;
    let steps = cache.steps();
    let cat = cat_weights(params);
    let mut grads = LstmParams::zeros(shape);

    // d loss / d predictions for loss = mean over (batch * output) entries
    let scale = 2.0 / (predictions.rows * predictions.cols) as f64;
    let mut d_y = Mat::zeros(predictions.rows, predictions.cols);
    for idx in 0..d_y.data.len() {
        d_y.data[idx] = scale * (predictions.data[idx] - targets.data[idx]);
    }

    // readout layer
    let h_last = &cache.hiddens[steps - 1];
    acc_tn(&mut grads.w_head, &d_y, h_last);
    for r in 0..d_y.rows {
        let row = d_y.row(r);
        for (j, g) in grads.b_head.iter_mut().enumerate() {
            *g += row[j];
        }
    }
    let mut dh_next = Mat::zeros(batch, h);
    acc_nn(&mut dh_next, &d_y, &params.w_head);
    let mut dc_next = Mat::zeros(batch, h);

    let mut dwx_cat = Mat::zeros(4 * h, shape.input);
    let mut dwh_cat = Mat::zeros(4 * h, h);
    let mut db_cat = vec![0.0; 4 * h];

    let zeros = Mat::zeros(batch, h);
    for t in (0..steps).rev() {
        let [i_g, f_g, g_g, o_g] = &cache.gates[t];
        let tanh_c = &cache.tanh_cells[t];
        let c_prev = if t == 0 { &zeros } else { &cache.cells[t - 1] };
        let h_prev = if t == 0 { &zeros } else { &cache.hiddens[t - 1] };

        let dh = dh_next;
        let mut d_pre = Mat::zeros(batch, 4 * h);
        let mut dc = Mat::zeros(batch, h);
        for r in 0..batch {
            let dh_r = dh.row(r);
            let pre_r = d_pre.row_mut(r);
            for j in 0..h {
                let idx = r * h + j;
                let tc = tanh_c.data[idx];
                let o = o_g.data[idx];
                let d = dh_r[j] * o * (1.0 - tc * tc) + dc_next.data[idx];
                dc.data[idx] = d;
                let (i, f, g) = (i_g.data[idx], f_g.data[idx], g_g.data[idx]);
                pre_r[j] = d * g * i * (1.0 - i);
                pre_r[h + j] = d * c_prev.data[idx] * f * (1.0 - f);
                pre_r[2 * h + j] = d * i * (1.0 - g * g);
                pre_r[3 * h + j] = dh_r[j] * tc * o * (1.0 - o);
            }
        }

        acc_tn(&mut dwx_cat, &d_pre, &cache.xs[t]);
        acc_tn(&mut dwh_cat, &d_pre, h_prev);
        for r in 0..batch {
            let row = d_pre.row(r);
            for (j, b) in db_cat.iter_mut().enumerate() {
                *b += row[j];
            }
        }

        let mut dh_prev = Mat::zeros(batch, h);
        acc_nn(&mut dh_prev, &d_pre, &cat.wh_cat);
        dh_next = dh_prev;
        for idx in 0..batch * h {
            dc_next.data[idx] = dc.data[idx] * f_g.data[idx];
        }
    }

    for g in 0..4 {
        for j in 0..h {
            grads.w_input[g].row_mut(j).copy_from_slice(dwx_cat.row(g * h + j));
            grads.w_recur[g].row_mut(j).copy_from_slice(dwh_cat.row(g * h + j));
            grads.bias[g][j] = db_cat[g * h + j];
        }
    }

    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetShape;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_batch(
        shape: NetShape,
        steps: usize,
        batch: usize,
        seed: u64,
    ) -> (Vec<Mat>, Mat) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let xs = (0..steps)
            .map(|_| {
                let mut m = Mat::zeros(batch, shape.input);
                for v in &mut m.data {
                    *v = rng.gen_range(-1.5..1.5);
                }
                m
            })
            .collect();
        let mut targets = Mat::zeros(batch, shape.output);
        for v in &mut targets.data {
            *v = rng.gen_range(-1.5..1.5);
        }
        (xs, targets)
    }

    fn batch_loss(xs: &[Mat], targets: &Mat, params: &LstmParams) -> f64 {
        let (h, _) = forward_batch(xs, params).unwrap();
        let y = predict_head_batch(&h, params);
        mse_loss(&y, targets).unwrap()
    }

    #[test]
    fn zero_params_give_zero_hidden() {
        let shape = NetShape::new(4, 6, 3);
        let params = LstmParams::zeros(shape);
        let (xs, _) = random_batch(shape, 5, 3, 1);
        let (h, _) = forward_batch(&xs, &params).unwrap();
        assert!(h.data.iter().all(|v| *v == 0.0));
        let y = predict_head_batch(&h, &params);
        assert!(y.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_cell_hand_oracle() {
        // One cell, one step, scalar input, all weights zero: with
        // i = sigmoid(b_i), g = tanh(b_g), o = sigmoid(b_o) and c_0 = 0,
        // h_1 = o * tanh(i * g).
        let shape = NetShape::new(1, 1, 1);
        let mut params = LstmParams::zeros(shape);
        let (b_i, b_g, b_o) = (10.0, 0.5f64.atanh(), 0.3);
        params.bias[0][0] = b_i;
        params.bias[2][0] = b_g;
        params.bias[3][0] = b_o;
        let x = Mat { rows: 1, cols: 1, data: vec![0.7] };
        let (h, _) = forward_batch(&[x], &params).unwrap();
        let i = 1.0 / (1.0 + (-b_i as f64).exp());
        let expected = (1.0 / (1.0 + (-b_o as f64).exp())) * (i * 0.5f64).tanh();
        assert!((h.data[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn hidden_state_bounded_by_one() {
        let shape = NetShape::new(5, 7, 2);
        let params = LstmParams::init(shape, 3);
        for seed in 0..20 {
            let (xs, _) = random_batch(shape, 8, 4, seed);
            let (h, _) = forward_batch(&xs, &params).unwrap();
            assert!(h.data.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn forward_rejects_non_finite_input() {
        let shape = NetShape::new(2, 3, 1);
        let params = LstmParams::init(shape, 0);
        let mut x = Mat::zeros(2, 2);
        x.data[1] = f64::NAN;
        assert!(matches!(
            forward_batch(&[x], &params),
            Err(Error::NumericInput(_))
        ));
    }

    #[test]
    fn head_is_affine() {
        let shape = NetShape::new(2, 5, 3);
        let mut params = LstmParams::init(shape, 9);
        // zero weights: output equals the bias
        let zero_w = LstmParams::zeros(shape);
        let mut biased = zero_w.clone();
        biased.b_head = vec![0.5, -1.0, 2.0];
        let h = vec![0.3, -0.2, 0.9, 0.0, 1.0];
        assert_eq!(predict_head(&h, &biased), vec![0.5, -1.0, 2.0]);
        // zero bias: linear in the hidden state
        params.b_head = vec![0.0; 3];
        let y1 = predict_head(&h, &params);
        let h2: Vec<f64> = h.iter().map(|v| v * 3.0).collect();
        let y2 = predict_head(&h2, &params);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a * 3.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_examples() {
        let a = Mat { rows: 1, cols: 1, data: vec![0.0] };
        let b = Mat { rows: 1, cols: 1, data: vec![2.0] };
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&a, &b).unwrap(), 4.0);
        let p = Mat { rows: 2, cols: 2, data: vec![1.0, 2.0, 3.0, 4.0] };
        let t = Mat { rows: 2, cols: 2, data: vec![0.0, 0.0, 0.0, 0.0] };
        let p2 = Mat { rows: 2, cols: 2, data: vec![2.0, 4.0, 6.0, 8.0] };
        assert!((mse_loss(&p2, &t).unwrap() - 4.0 * mse_loss(&p, &t).unwrap()).abs() < 1e-12);
        let bad = Mat::zeros(1, 3);
        assert!(mse_loss(&p, &bad).is_err());
    }

    #[test]
    fn zero_error_batch_gives_zero_gradients() {
        let shape = NetShape::new(3, 4, 2);
        let params = LstmParams::init(shape, 5);
        let (xs, _) = random_batch(shape, 3, 4, 7);
        let (h, cache) = forward_batch(&xs, &params).unwrap();
        let y = predict_head_batch(&h, &params);
        let grads = backward_batch(&cache, &params, &y, &y);
        for t in grads.tensors() {
            assert!(t.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn dense_bias_gradient_matches_hand_derivation() {
        // For loss = mean over (batch * output) squared errors, the readout
        // bias gradient is the batch mean of 2 * (prediction - target)
        // divided by the output count.
        let shape = NetShape::new(3, 4, 2);
        let params = LstmParams::init(shape, 11);
        let (xs, targets) = random_batch(shape, 4, 6, 13);
        let (h, cache) = forward_batch(&xs, &params).unwrap();
        let y = predict_head_batch(&h, &params);
        let grads = backward_batch(&cache, &params, &y, &targets);
        for j in 0..shape.output {
            let mut hand = 0.0;
            for b in 0..y.rows {
                hand += 2.0 * (y.at(b, j) - targets.at(b, j));
            }
            hand /= (y.rows * shape.output) as f64;
            assert!((grads.b_head[j] - hand).abs() < 1e-14);
        }
    }

    #[test]
    fn bptt_matches_central_finite_differences() {
        // Mandatory gradient oracle on a reduced network: hidden 3, input 2,
        // 4 steps, batch 5, epsilon 1e-5, max relative error < 1e-4.
        let shape = NetShape::new(2, 3, 2);
        let mut params = LstmParams::init(shape, 21);
        let (xs, targets) = random_batch(shape, 4, 5, 23);

        let (h, cache) = forward_batch(&xs, &params).unwrap();
        let y = predict_head_batch(&h, &params);
        let grads = backward_batch(&cache, &params, &y, &targets);

        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        let n_tensors = params.tensors().len();
        for ti in 0..n_tensors {
            for i in 0..params.tensors()[ti].len() {
                let orig = params.tensors()[ti][i];
                params.tensors_mut()[ti][i] = orig + eps;
                let up = batch_loss(&xs, &targets, &params);
                params.tensors_mut()[ti][i] = orig - eps;
                let down = batch_loss(&xs, &targets, &params);
                params.tensors_mut()[ti][i] = orig;
                let fd = (up - down) / (2.0 * eps);
                let analytic = grads.tensors()[ti][i];
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }
}
