//! Dataset splitting and training of the multi-horizon subnetwork ensemble:
//! one independent LSTM per prediction distance, all consuming the same
//! integration window, trained with mini-batch Adam and early stopping on
//! validation loss.

use crate::error::{Error, Result};
use crate::features::{
    window_dataset, window_len, FeaturizedTrial, Normalizer, Partition, WindowSample, FEATURE_DIM,
    MOTOR_DIM,
};
use crate::nn::{
    backward_batch, forward_batch, mse_loss, predict_head_batch, AdamConfig, AdamState,
    LstmParams, Mat, NetShape,
};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_HIDDEN_UNITS: usize = 25;
pub const DEFAULT_HORIZON_COUNT: usize = 37;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub integration_ms: f64,
    /// Prediction distances in frames, sorted ascending.
    pub horizons: Vec<usize>,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Optional exponential learning-rate decay: the rate halves every this
    /// many epochs. `None` keeps it constant.
    #[serde(default)]
    pub lr_halflife_epochs: Option<usize>,
    /// Independent training restarts per subnetwork; the run with the best
    /// validation loss wins. 1 means a single run.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    pub seed: u64,
}

fn default_restarts() -> usize {
    1
}

impl ModelSpec {
    /// The standard configuration: 37 horizons covering the whole blank,
    /// batch 128, up to 2000 epochs, patience 100, learning rate 1e-4.
    pub fn standard(integration_ms: f64, seed: u64) -> Self {
        ModelSpec {
            integration_ms,
            horizons: (1..=DEFAULT_HORIZON_COUNT).collect(),
            hidden_units: DEFAULT_HIDDEN_UNITS,
            batch_size: 128,
            max_epochs: 2000,
            patience: 100,
            learning_rate: 1e-4,
            lr_halflife_epochs: None,
            restarts: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one horizon".into()));
        }
        if !self.horizons.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("horizons must be sorted and unique".into()));
        }
        if *self.horizons.first().unwrap() < 1
            || *self.horizons.last().unwrap() > DEFAULT_HORIZON_COUNT
        {
            return Err(Error::InvalidArgument(format!(
                "horizons must lie in 1..={DEFAULT_HORIZON_COUNT}"
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.hidden_units == 0 {
            return Err(Error::InvalidArgument("hidden units must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> NetShape {
        NetShape::new(FEATURE_DIM, self.hidden_units, MOTOR_DIM)
    }

    /// Deterministic per-horizon seed, independent of training order.
    pub fn subnetwork_seed(&self, horizon_frames: usize) -> u64 {
        self.seed ^ (horizon_frames as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch with the lowest validation loss; the returned parameters.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedSubnetwork {
    pub horizon_frames: usize,
    pub params: LstmParams,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub subnetworks: Vec<TrainedSubnetwork>,
    pub normalizer: Normalizer,
}

impl TrainedModel {
    pub fn subnetwork(&self, horizon_frames: usize) -> Option<&TrainedSubnetwork> {
        self.subnetworks.iter().find(|s| s.horizon_frames == horizon_frames)
    }
}

/// Trial-level 68/12/20 split, rounded to nearest with ties toward train.
/// Returns disjoint, exhaustive index sets, deterministic per seed.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 trials to split, got {n}"
        )));
    }
    let n_train = (n as f64 * 0.68).round() as usize;
    let n_val = (n as f64 * 0.12).round() as usize;
    let n_test = n - n_train - n_val;
    if n_test == 0 {
        return Err(Error::InvalidArgument("test partition would be empty".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    Ok((train, val, test))
}

/// Step-major batch matrices for the selected samples.
fn batch_inputs(samples: &[WindowSample], idxs: &[usize]) -> (Vec<Mat>, Mat) {
    let steps = samples[idxs[0]].input.len();
    let batch = idxs.len();
    let mut xs: Vec<Mat> = (0..steps).map(|_| Mat::zeros(batch, FEATURE_DIM)).collect();
    let mut targets = Mat::zeros(batch, MOTOR_DIM);
    for (row, &si) in idxs.iter().enumerate() {
        let s = &samples[si];
        for (t, frame) in s.input.iter().enumerate() {
            xs[t].row_mut(row).copy_from_slice(frame);
        }
        targets.row_mut(row).copy_from_slice(&s.target);
    }
    (xs, targets)
}

fn full_batch(samples: &[WindowSample]) -> (Vec<Mat>, Mat) {
    let idxs: Vec<usize> = (0..samples.len()).collect();
    batch_inputs(samples, &idxs)
}

fn check_partition(samples: &[WindowSample], expected: Partition, role: &str) -> Result<()> {
    if samples.iter().any(|s| s.partition != expected) {
        return Err(Error::InvalidArgument(format!(
            "{role} windows contain samples from outside the {expected} partition"
        )));
    }
    Ok(())
}

/// Train one subnetwork with mini-batch Adam, seeded per-epoch shuffling,
/// and early stopping on validation loss. Runs `spec.restarts` independent
/// initializations and returns the parameters of the restart (and epoch)
/// with the lowest validation loss.
pub fn train_subnetwork(
    train: &[WindowSample],
    val: &[WindowSample],
    spec: &ModelSpec,
    horizon_frames: usize,
    seed: u64,
) -> Result<(LstmParams, TrainingHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("train and validation windows must be non-empty".into()));
    }
    check_partition(train, Partition::Train, "training")?;
    check_partition(val, Partition::Validation, "validation")?;

    let mut best: Option<(f64, LstmParams, TrainingHistory)> = None;
    for restart in 0..spec.restarts {
        let run_seed = seed.wrapping_add((restart as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        let (params, history) = train_once(train, val, spec, horizon_frames, run_seed)?;
        let val_loss = history.val_loss[history.best_epoch];
        if best.as_ref().map_or(true, |(v, _, _)| val_loss < *v) {
            best = Some((val_loss, params, history));
        }
    }
    let (_, params, history) = best.expect("restarts >= 1");
    Ok((params, history))
}

fn train_once(
    train: &[WindowSample],
    val: &[WindowSample],
    spec: &ModelSpec,
    horizon_frames: usize,
    seed: u64,
) -> Result<(LstmParams, TrainingHistory)> {
    let shape = spec.shape();
    let mut params = LstmParams::init(shape, seed);
    let mut adam = AdamState::new(
        shape,
        AdamConfig { learning_rate: spec.learning_rate, ..AdamConfig::default() },
    );
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(1);

    let (val_xs, val_targets) = full_batch(val);

    let mut history = TrainingHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..spec.max_epochs {
        if let Some(halflife) = spec.lr_halflife_epochs {
            adam.config.learning_rate =
                spec.learning_rate * 0.5f64.powf(epoch as f64 / halflife as f64);
        }
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(spec.batch_size) {
            let (xs, targets) = batch_inputs(train, chunk);
            let (h, cache) = forward_batch(&xs, &params)?;
            let y = predict_head_batch(&h, &params);
            let loss = mse_loss(&y, &targets)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, horizon_frames });
            }
            let grads = backward_batch(&cache, &params, &y, &targets);
            adam.apply(&mut params, &grads)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        epoch_loss /= train.len() as f64;

        let (vh, _) = forward_batch(&val_xs, &params)?;
        let vy = predict_head_batch(&vh, &params);
        let val_loss = mse_loss(&vy, &val_targets)?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, horizon_frames });
        }

        history.train_loss.push(epoch_loss);
        history.val_loss.push(val_loss);
        history.stopped_epoch = epoch;

        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            history.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best > spec.patience {
                break;
            }
        }
    }

    Ok((best_params, history))
}

/// Train every subnetwork of the model: same input windows, different
/// targets, independent parameters and optimizers. Subnetworks train
/// concurrently; results are gathered in horizon order so the outcome is
/// identical for any worker count.
pub fn train_model(
    spec: &ModelSpec,
    trials: &[FeaturizedTrial],
    normalizer: &Normalizer,
) -> Result<TrainedModel> {
    spec.validate()?;
    let train_trials: Vec<FeaturizedTrial> =
        trials.iter().filter(|t| t.partition == Partition::Train).cloned().collect();
    let val_trials: Vec<FeaturizedTrial> =
        trials.iter().filter(|t| t.partition == Partition::Validation).cloned().collect();

    let subnetworks: Vec<Result<TrainedSubnetwork>> = spec
        .horizons
        .par_iter()
        .map(|&dt| {
            let train = window_dataset(&train_trials, spec.integration_ms, dt)?;
            let val = window_dataset(&val_trials, spec.integration_ms, dt)?;
            let (params, history) =
                train_subnetwork(&train, &val, spec, dt, spec.subnetwork_seed(dt))?;
            Ok(TrainedSubnetwork { horizon_frames: dt, params, history })
        })
        .collect();

    let subnetworks: Vec<TrainedSubnetwork> =
        subnetworks.into_iter().collect::<Result<_>>()?;
    Ok(TrainedModel { spec: spec.clone(), subnetworks, normalizer: normalizer.clone() })
}

/// Feed the shared blank-onset window to every subnetwork and de-normalize
/// the predictions: row k is the motor state predicted at horizon
/// `spec.horizons[k]`, in physical units.
pub fn predict_blank(
    model: &TrainedModel,
    trial: &FeaturizedTrial,
) -> Result<Vec<[f64; MOTOR_DIM]>> {
    let rate = 1000.0 / trial.frame_interval_ms;
    let len = window_len(model.spec.integration_ms, rate);
    if len > trial.blank_onset + 1 {
        return Err(Error::InvalidArgument(format!(
            "trial {} has {} pre-blank frames, window needs {len}",
            trial.trial_id,
            trial.blank_onset + 1
        )));
    }
    let window: Vec<Mat> = trial.frames[trial.blank_onset + 1 - len..=trial.blank_onset]
        .iter()
        .map(|f| Mat { rows: 1, cols: FEATURE_DIM, data: f.to_array().to_vec() })
        .collect();

    let mut out = Vec::with_capacity(model.subnetworks.len());
    for sub in &model.subnetworks {
        let (h, _) = forward_batch(&window, &sub.params)?;
        let y = predict_head_batch(&h, &sub.params);
        let mut motor = [0.0; MOTOR_DIM];
        motor.copy_from_slice(y.row(0));
        out.push(model.normalizer.denormalize_motor(motor));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn split_counts_for_paper_sizes() {
        let (tr, va, te) = split_indices(1350, 0).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (918, 162, 270));
        let (tr, va, te) = split_indices(10, 0).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (7, 1, 2));
        assert!(split_indices(9, 0).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_deterministic() {
        let (tr, va, te) = split_indices(100, 7).unwrap();
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let set: BTreeSet<usize> = all.into_iter().collect();
        assert_eq!(set.len(), 100);
        let again = split_indices(100, 7).unwrap();
        assert_eq!((tr, va, te), again);
        let other = split_indices(100, 8).unwrap();
        assert_ne!(other.0, split_indices(100, 7).unwrap().0);
    }

    #[test]
    fn spec_validation() {
        let spec = ModelSpec::standard(27.0, 0);
        assert!(spec.validate().is_ok());
        assert_eq!(spec.horizons.len(), 37);
        let mut bad = spec.clone();
        bad.horizons = vec![3, 2];
        assert!(bad.validate().is_err());
        bad.horizons = vec![0];
        assert!(bad.validate().is_err());
        bad.horizons = vec![38];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn leakage_guard_rejects_wrong_partition() {
        let sample = WindowSample {
            input: vec![[0.0; FEATURE_DIM]; 2],
            target: [0.0; MOTOR_DIM],
            trial_id: 0,
            subject_id: 0,
            integration_ms: 27.0,
            horizon_frames: 1,
            partition: Partition::Test,
        };
        let spec = ModelSpec::standard(27.0, 0);
        let err = train_subnetwork(&[sample.clone()], &[sample], &spec, 1, 0);
        assert!(err.is_err());
    }
}
