//! Metrics behind the result figures: MSE-by-prediction-distance curves,
//! per-output RMSE curves against the mean-predictor band, blank-period
//! behavioral statistics, and the post-training feature-ablation study.

use crate::agent::Trial;
use crate::baselines::{predict_linear, LinearPredictor, MeanPredictor};
use crate::ensemble::TrainedModel;
use crate::error::{Error, Result};
use crate::features::{
    ball_angles, window_dataset, FeaturizedTrial, Normalizer, WindowSample, FEATURE_DIM,
    FEATURE_LABELS, MOTOR_DIM,
};
use crate::geometry::HeadPose;
use crate::nn::{forward_batch, predict_head_batch, Mat};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub label: String,
    /// One of the 8 motor outputs, or "aggregate".
    pub output_component: String,
    pub horizon_ms: Vec<f64>,
    pub value: Vec<f64>,
    /// Standard deviation across test trials.
    pub dispersion: Vec<f64>,
}

impl ErrorCurve {
    fn new(label: &str, component: &str) -> Self {
        ErrorCurve {
            label: label.to_string(),
            output_component: component.to_string(),
            horizon_ms: Vec::new(),
            value: Vec::new(),
            dispersion: Vec::new(),
        }
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Normalized-space predictions of one subnetwork over a window set.
pub fn subnetwork_predictions(
    params: &crate::nn::LstmParams,
    windows: &[WindowSample],
) -> Result<Mat> {
    let steps = windows[0].input.len();
    let mut xs: Vec<Mat> = (0..steps).map(|_| Mat::zeros(windows.len(), FEATURE_DIM)).collect();
    for (row, w) in windows.iter().enumerate() {
        for (t, frame) in w.input.iter().enumerate() {
            xs[t].row_mut(row).copy_from_slice(frame);
        }
    }
    let (h, _) = forward_batch(&xs, params)?;
    Ok(predict_head_batch(&h, params))
}

fn horizon_ms(dt: usize, frame_interval_ms: f64) -> f64 {
    dt as f64 * frame_interval_ms
}

/// Aggregate MSE (normalized space, mean over the 8 outputs) by prediction
/// distance for a trained ensemble.
pub fn mse_by_distance_lstm(
    model: &TrainedModel,
    test: &[FeaturizedTrial],
) -> Result<ErrorCurve> {
    let mut curve = ErrorCurve::new(
        &format!("lstm_i{}", model.spec.integration_ms),
        "aggregate",
    );
    let fi = test.first().map_or(1000.0 / 75.0, |t| t.frame_interval_ms);
    for sub in &model.subnetworks {
        let windows = window_dataset(test, model.spec.integration_ms, sub.horizon_frames)?;
        let preds = subnetwork_predictions(&sub.params, &windows)?;
        let per_trial: Vec<f64> = windows
            .iter()
            .enumerate()
            .map(|(r, w)| {
                let row = preds.row(r);
                row.iter().zip(&w.target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
                    / MOTOR_DIM as f64
            })
            .collect();
        let (mean, sd) = mean_sd(&per_trial);
        curve.horizon_ms.push(horizon_ms(sub.horizon_frames, fi));
        curve.value.push(mean);
        curve.dispersion.push(sd);
    }
    Ok(curve)
}

pub fn mse_by_distance_linear(
    predictors: &[LinearPredictor],
    test: &[FeaturizedTrial],
) -> Result<ErrorCurve> {
    let mut curve = ErrorCurve::new("linear", "aggregate");
    let fi = test.first().map_or(1000.0 / 75.0, |t| t.frame_interval_ms);
    for p in predictors {
        let windows = window_dataset(test, p.integration_ms, p.horizon_frames)?;
        let per_trial: Vec<f64> = windows
            .iter()
            .map(|w| {
                let pred = predict_linear(p, &w.input);
                pred.iter().zip(&w.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    / MOTOR_DIM as f64
            })
            .collect();
        let (mean, sd) = mean_sd(&per_trial);
        curve.horizon_ms.push(horizon_ms(p.horizon_frames, fi));
        curve.value.push(mean);
        curve.dispersion.push(sd);
    }
    Ok(curve)
}

pub fn mse_by_distance_mean(
    predictor: &MeanPredictor,
    integration_ms: f64,
    test: &[FeaturizedTrial],
) -> Result<ErrorCurve> {
    let mut curve = ErrorCurve::new("mean", "aggregate");
    let fi = test.first().map_or(1000.0 / 75.0, |t| t.frame_interval_ms);
    for (idx, &dt) in predictor.horizons.iter().enumerate() {
        let windows = window_dataset(test, integration_ms, dt)?;
        let mean_row = predictor.means[idx];
        let per_trial: Vec<f64> = windows
            .iter()
            .map(|w| {
                mean_row
                    .iter()
                    .zip(&w.target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / MOTOR_DIM as f64
            })
            .collect();
        let (mean, sd) = mean_sd(&per_trial);
        curve.horizon_ms.push(horizon_ms(dt, fi));
        curve.value.push(mean);
        curve.dispersion.push(sd);
    }
    Ok(curve)
}

/// Per-output RMSE curves in physical units (degrees for gaze, meters for
/// paddle position), de-normalized through the model's normalizer.
pub fn rmse_components(
    model: &TrainedModel,
    test: &[FeaturizedTrial],
) -> Result<Vec<ErrorCurve>> {
    let mut curves: Vec<ErrorCurve> = FEATURE_LABELS[..MOTOR_DIM]
        .iter()
        .map(|label| ErrorCurve::new(&format!("lstm_i{}", model.spec.integration_ms), label))
        .collect();
    let fi = test.first().map_or(1000.0 / 75.0, |t| t.frame_interval_ms);
    let norm = &model.normalizer;
    for sub in &model.subnetworks {
        let windows = window_dataset(test, model.spec.integration_ms, sub.horizon_frames)?;
        let preds = subnetwork_predictions(&sub.params, &windows)?;
        for j in 0..MOTOR_DIM {
            let per_trial_abs: Vec<f64> = windows
                .iter()
                .enumerate()
                .map(|(r, w)| {
                    let p = preds.at(r, j) * norm.sd[j] + norm.mean[j];
                    let t = w.target[j] * norm.sd[j] + norm.mean[j];
                    (p - t).abs()
                })
                .collect();
            let mse = per_trial_abs.iter().map(|e| e * e).sum::<f64>()
                / per_trial_abs.len() as f64;
            let (_, sd) = mean_sd(&per_trial_abs);
            curves[j].horizon_ms.push(horizon_ms(sub.horizon_frames, fi));
            curves[j].value.push(mse.sqrt());
            curves[j].dispersion.push(sd);
        }
    }
    Ok(curves)
}

/// The mean-predictor standard-deviation band per output, in physical units:
/// the RMSE expected from always answering the per-horizon mean.
pub fn mean_band_curves(
    predictor: &MeanPredictor,
    normalizer: &Normalizer,
    frame_interval_ms: f64,
) -> Vec<ErrorCurve> {
    let mut curves: Vec<ErrorCurve> = FEATURE_LABELS[..MOTOR_DIM]
        .iter()
        .map(|label| ErrorCurve::new("mean_band", label))
        .collect();
    for (idx, &dt) in predictor.horizons.iter().enumerate() {
        for j in 0..MOTOR_DIM {
            curves[j].horizon_ms.push(horizon_ms(dt, frame_interval_ms));
            // z-space sd scales by the feature sd to reach physical units
            curves[j].value.push(predictor.sds[idx][j] * normalizer.sd[j]);
            curves[j].dispersion.push(0.0);
        }
    }
    curves
}

/// Mean of curve values over consecutive bands of `band` horizons.
pub fn banded_means(values: &[f64], band: usize) -> Vec<f64> {
    values
        .chunks(band.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// blank-period behavioral statistics
// ---------------------------------------------------------------------------

struct BlankSpan {
    /// First invisible frame.
    start: usize,
    /// First visible frame after the blank.
    reappearance: usize,
}

fn blank_span(trial: &Trial) -> Result<BlankSpan> {
    let flags: Vec<bool> = trial.trajectory.frames.iter().map(|f| f.visible).collect();
    let start = flags
        .iter()
        .position(|v| !v)
        .ok_or_else(|| Error::MalformedTrial("trial has no blank".into()))?;
    let reappearance = start
        + flags[start..]
            .iter()
            .position(|v| *v)
            .ok_or_else(|| Error::MalformedTrial("blank never ends".into()))?;
    if reappearance >= trial.motor.len() {
        return Err(Error::MalformedTrial("missing motor data over the blank".into()));
    }
    Ok(BlankSpan { start, reappearance })
}

fn ball_angle_series(trial: &Trial, head: &HeadPose) -> Result<Vec<(f64, f64)>> {
    trial
        .trajectory
        .frames
        .iter()
        .map(|f| ball_angles(head.to_head(f.position)))
        .collect()
}

/// Gaze angular displacement over the blank divided by the (invisible)
/// ball's angular displacement, measured between the first blanked frame and
/// the reappearance frame. `None` when the ball did not move.
pub fn displacement_ratio(trial: &Trial, head: &HeadPose) -> Result<Option<f64>> {
    let span = blank_span(trial)?;
    let ball = ball_angle_series(trial, head)?;
    let (a, r) = (span.start, span.reappearance);
    let ball_sweep = (ball[r].0 - ball[a].0).hypot(ball[r].1 - ball[a].1);
    if ball_sweep == 0.0 {
        return Ok(None);
    }
    let ga = &trial.motor[a];
    let gr = &trial.motor[r];
    let gaze_sweep = (gr.gaze_azimuth_deg - ga.gaze_azimuth_deg)
        .hypot(gr.gaze_elevation_deg - ga.gaze_elevation_deg);
    Ok(Some(gaze_sweep / ball_sweep))
}

/// Gaze angular velocity over ball angular velocity at the reappearance
/// frame, both via backward differences of azimuth/elevation.
pub fn pursuit_gain(trial: &Trial, head: &HeadPose) -> Result<Option<f64>> {
    let span = blank_span(trial)?;
    let ball = ball_angle_series(trial, head)?;
    let r = span.reappearance;
    let ball_step = (ball[r].0 - ball[r - 1].0).hypot(ball[r].1 - ball[r - 1].1);
    if ball_step == 0.0 {
        return Ok(None);
    }
    let g1 = &trial.motor[r - 1];
    let g2 = &trial.motor[r];
    let gaze_step = (g2.gaze_azimuth_deg - g1.gaze_azimuth_deg)
        .hypot(g2.gaze_elevation_deg - g1.gaze_elevation_deg);
    Ok(Some(gaze_step / ball_step))
}

/// Ball angular speed (deg/s) at the reappearance frame.
pub fn reappearance_speed_dps(trial: &Trial, head: &HeadPose) -> Result<f64> {
    let span = blank_span(trial)?;
    let ball = ball_angle_series(trial, head)?;
    let r = span.reappearance;
    let dt_s =
        (trial.trajectory.frames[r].time_ms - trial.trajectory.frames[r - 1].time_ms) / 1000.0;
    Ok((ball[r].0 - ball[r - 1].0).hypot(ball[r].1 - ball[r - 1].1) / dt_s)
}

/// Angular distance the invisible ball travels across the blank, degrees.
pub fn blank_sweep_deg(trial: &Trial, head: &HeadPose) -> Result<f64> {
    let span = blank_span(trial)?;
    let ball = ball_angle_series(trial, head)?;
    let (a, r) = (span.start, span.reappearance);
    Ok((ball[r].0 - ball[a].0).hypot(ball[r].1 - ball[a].1))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorStats {
    pub n_trials: usize,
    pub catch_rate: f64,
    pub displacement_ratio_mean: f64,
    pub displacement_ratio_sd: f64,
    pub pursuit_gain_mean: f64,
    pub pursuit_gain_sd: f64,
    pub reappearance_speed_mean_dps: f64,
    pub reappearance_speed_sd_dps: f64,
    pub blank_sweep_mean_deg: f64,
}

pub fn behavior_stats(trials: &[Trial], head: &HeadPose) -> Result<BehaviorStats> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument("no trials".into()));
    }
    let mut ratios = Vec::new();
    let mut gains = Vec::new();
    let mut speeds = Vec::new();
    let mut sweeps = Vec::new();
    let mut caught = 0usize;
    for t in trials {
        if t.caught {
            caught += 1;
        }
        if let Some(r) = displacement_ratio(t, head)? {
            ratios.push(r);
        }
        if let Some(g) = pursuit_gain(t, head)? {
            gains.push(g);
        }
        speeds.push(reappearance_speed_dps(t, head)?);
        sweeps.push(blank_sweep_deg(t, head)?);
    }
    let (ratio_mean, ratio_sd) = mean_sd(&ratios);
    let (gain_mean, gain_sd) = mean_sd(&gains);
    let (speed_mean, speed_sd) = mean_sd(&speeds);
    let (sweep_mean, _) = mean_sd(&sweeps);
    Ok(BehaviorStats {
        n_trials: trials.len(),
        catch_rate: caught as f64 / trials.len() as f64,
        displacement_ratio_mean: ratio_mean,
        displacement_ratio_sd: ratio_sd,
        pursuit_gain_mean: gain_mean,
        pursuit_gain_sd: gain_sd,
        reappearance_speed_mean_dps: speed_mean,
        reappearance_speed_sd_dps: speed_sd,
        blank_sweep_mean_deg: sweep_mean,
    })
}

// ---------------------------------------------------------------------------
// feature ablation
// ---------------------------------------------------------------------------

/// Replace one input feature with its training-set mean (zero in normalized
/// space) at every timestep of every window. The trained model is untouched.
pub fn ablate_feature(
    windows: &[WindowSample],
    feature_index: usize,
    _normalizer: &Normalizer,
) -> Result<Vec<WindowSample>> {
    if feature_index >= FEATURE_DIM {
        return Err(Error::InvalidArgument(format!(
            "feature index {feature_index} out of range 0..{FEATURE_DIM}"
        )));
    }
    let mut out = windows.to_vec();
    for w in &mut out {
        for frame in &mut w.input {
            frame[feature_index] = 0.0;
        }
    }
    Ok(out)
}

/// Error increase per (ablated input, output) cell, floored at zero and
/// max-normalized per output column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationMatrix {
    pub integration_ms: f64,
    pub horizon_ms: f64,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// 16 rows x 8 columns.
    pub values: Vec<[f64; MOTOR_DIM]>,
}

fn per_output_mae(preds: &Mat, windows: &[WindowSample]) -> [f64; MOTOR_DIM] {
    let mut mae = [0.0; MOTOR_DIM];
    for (r, w) in windows.iter().enumerate() {
        let row = preds.row(r);
        for j in 0..MOTOR_DIM {
            mae[j] += (row[j] - w.target[j]).abs();
        }
    }
    for v in &mut mae {
        *v /= windows.len() as f64;
    }
    mae
}

/// One matrix per requested prediction distance: cell (i, j) is the increase
/// in output j's mean absolute error when input i is mean-substituted.
pub fn ablation_matrix(
    model: &TrainedModel,
    test: &[FeaturizedTrial],
    horizons_frames: &[usize],
) -> Result<Vec<AblationMatrix>> {
    let fi = test.first().map_or(1000.0 / 75.0, |t| t.frame_interval_ms);
    let mut out = Vec::with_capacity(horizons_frames.len());
    for &dt in horizons_frames {
        let sub = model.subnetwork(dt).ok_or_else(|| {
            Error::InvalidArgument(format!("model has no subnetwork for horizon {dt}"))
        })?;
        let windows = window_dataset(test, model.spec.integration_ms, dt)?;
        let base_preds = subnetwork_predictions(&sub.params, &windows)?;
        let base_mae = per_output_mae(&base_preds, &windows);

        let mut values = vec![[0.0; MOTOR_DIM]; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            let ablated = ablate_feature(&windows, i, &model.normalizer)?;
            let preds = subnetwork_predictions(&sub.params, &ablated)?;
            let mae = per_output_mae(&preds, &ablated);
            for j in 0..MOTOR_DIM {
                values[i][j] = (mae[j] - base_mae[j]).max(0.0);
            }
        }
        // max-normalize per output column
        for j in 0..MOTOR_DIM {
            let max = values.iter().map(|r| r[j]).fold(0.0f64, f64::max);
            if max > 1e-12 {
                for row in &mut values {
                    row[j] /= max;
                }
            }
        }
        out.push(AblationMatrix {
            integration_ms: model.spec.integration_ms,
            horizon_ms: horizon_ms(dt, fi),
            row_labels: FEATURE_LABELS.iter().map(|s| s.to_string()).collect(),
            col_labels: FEATURE_LABELS[..MOTOR_DIM].iter().map(|s| s.to_string()).collect(),
            values,
        })
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{simulate_trial, AgentParams};
    use crate::ballistics::{sample_trajectory, TrajectoryConfig};
    use crate::features::Partition;
    use crate::trial_rng;

    fn locked_gaze_trial(id: u64) -> Trial {
        let config = TrajectoryConfig::default();
        let params = AgentParams {
            pursuit_gain_target: 1.0,
            gaze_lag_ms: 0.0,
            gaze_noise_sd_deg: 0.0,
            reach_noise_sd_m: 0.0,
            ..AgentParams::default()
        };
        let traj = sample_trajectory(&config, id, &mut trial_rng(31, id));
        simulate_trial(traj, &params, &HeadPose::default(), &mut trial_rng(32, id)).unwrap()
    }

    #[test]
    fn locked_gaze_gives_unit_ratios() {
        let head = HeadPose::default();
        for id in 0..10 {
            let trial = locked_gaze_trial(id);
            let r = displacement_ratio(&trial, &head).unwrap().unwrap();
            let g = pursuit_gain(&trial, &head).unwrap().unwrap();
            assert!((r - 1.0).abs() < 1e-9, "displacement ratio {r}");
            assert!((g - 1.0).abs() < 1e-9, "pursuit gain {g}");
        }
    }

    #[test]
    fn stationary_gaze_gives_zero_ratio() {
        let head = HeadPose::default();
        let mut trial = locked_gaze_trial(3);
        for m in &mut trial.motor {
            m.gaze_azimuth_deg = 5.0;
            m.gaze_elevation_deg = 10.0;
        }
        let r = displacement_ratio(&trial, &head).unwrap().unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn banded_means_grouping() {
        let v: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        assert_eq!(banded_means(&v, 5), vec![3.0, 8.0]);
        assert_eq!(banded_means(&v, 4), vec![2.5, 6.5, 9.5]);
    }

    #[test]
    fn ablation_zeroes_column_and_checks_range() {
        let windows = vec![WindowSample {
            input: vec![[1.5; FEATURE_DIM]; 3],
            target: [0.0; MOTOR_DIM],
            trial_id: 0,
            subject_id: 0,
            integration_ms: 40.0,
            horizon_frames: 1,
            partition: Partition::Test,
        }];
        let norm = crate::features::fit_normalizer(
            &[
                crate::features::FeatureFrame::from_array([0.0; FEATURE_DIM]),
                crate::features::FeatureFrame::from_array([2.0; FEATURE_DIM]),
            ],
            "train",
        )
        .unwrap();
        let ablated = ablate_feature(&windows, 4, &norm).unwrap();
        for frame in &ablated[0].input {
            assert_eq!(frame[4], 0.0);
            assert_eq!(frame[3], 1.5);
        }
        assert!(ablate_feature(&windows, 16, &norm).is_err());
    }
}
