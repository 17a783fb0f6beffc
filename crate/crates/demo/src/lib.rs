//! Browser demo: sample a trial and watch the synthetic subject track the
//! blanked ball, inspect the 16 input feature traces, and train one
//! subnetwork in the page against its linear baseline.
//!
//! Functions return JSON strings so the static page needs no generated
//! bindings beyond wasm-bindgen's. Everything is seeded and deterministic.

use blankcatch_core::agent::AgentParams;
use blankcatch_core::analysis::{
    blank_sweep_deg, displacement_ratio, pursuit_gain, reappearance_speed_dps,
    subnetwork_predictions,
};
use blankcatch_core::ballistics::{sample_trajectory, TrajectoryConfig};
use blankcatch_core::baselines::{fit_linear, predict_linear};
use blankcatch_core::ensemble::{train_subnetwork, ModelSpec};
use blankcatch_core::features::{
    ball_angles, extract_features, window_dataset, Partition, FEATURE_LABELS,
};
use blankcatch_core::geometry::HeadPose;
use blankcatch_core::pipeline::{featurize, generate_trials};
use blankcatch_core::trial_rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn agent_from_knobs(
    seed: u32,
    pursuit_gain_target: f64,
    gaze_lag_ms: f64,
    gaze_noise_sd_deg: f64,
    reach_noise_sd_m: f64,
) -> AgentParams {
    AgentParams {
        pursuit_gain_target,
        gaze_lag_ms,
        gaze_noise_sd_deg,
        reach_noise_sd_m,
        rng_seed: seed as u64,
        ..AgentParams::default()
    }
}

fn json_or_error<T: Serialize>(value: Result<T, blankcatch_core::Error>) -> String {
    match value {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(message: &str) -> String {
    let mut out = String::from("{\"error\":");
    out.push_str(&serde_json::to_string(message).unwrap_or_else(|_| "\"error\"".into()));
    out.push('}');
    out
}

#[derive(Serialize)]
struct TrialPayload {
    time_ms: Vec<f64>,
    visible: Vec<bool>,
    ball_az: Vec<f64>,
    ball_el: Vec<f64>,
    gaze_az: Vec<f64>,
    gaze_el: Vec<f64>,
    paddle_x: Vec<f64>,
    paddle_y: Vec<f64>,
    paddle_z: Vec<f64>,
    ball_x: Vec<f64>,
    ball_y: Vec<f64>,
    ball_z: Vec<f64>,
    blank_onset: usize,
    reappearance: usize,
    caught: bool,
    pre_blank_ms: f64,
    post_blank_ms: f64,
    displacement_ratio: Option<f64>,
    pursuit_gain: Option<f64>,
    reappearance_speed_dps: f64,
    blank_sweep_deg: f64,
}

fn simulate_trial_payload(
    seed: u32,
    trial_index: u32,
    pursuit_gain_target: f64,
    gaze_lag_ms: f64,
    gaze_noise_sd_deg: f64,
    reach_noise_sd_m: f64,
) -> Result<TrialPayload, blankcatch_core::Error> {
    let config = TrajectoryConfig { rng_seed: seed as u64, ..TrajectoryConfig::default() };
    let agent = agent_from_knobs(
        seed,
        pursuit_gain_target,
        gaze_lag_ms,
        gaze_noise_sd_deg,
        reach_noise_sd_m,
    );
    agent.validate()?;
    let head = HeadPose::default();
    let id = trial_index as u64;
    let traj = sample_trajectory(&config, id, &mut trial_rng(config.rng_seed, id));
    let trial = blankcatch_core::agent::simulate_trial(
        traj,
        &agent,
        &head,
        &mut trial_rng(agent.rng_seed, (1 << 40) + id),
    )?;

    let n = trial.trajectory.frames.len();
    let mut p = TrialPayload {
        time_ms: Vec::with_capacity(n),
        visible: Vec::with_capacity(n),
        ball_az: Vec::with_capacity(n),
        ball_el: Vec::with_capacity(n),
        gaze_az: Vec::with_capacity(n),
        gaze_el: Vec::with_capacity(n),
        paddle_x: Vec::with_capacity(n),
        paddle_y: Vec::with_capacity(n),
        paddle_z: Vec::with_capacity(n),
        ball_x: Vec::with_capacity(n),
        ball_y: Vec::with_capacity(n),
        ball_z: Vec::with_capacity(n),
        blank_onset: trial.trajectory.blank_onset_index(),
        reappearance: trial.trajectory.reappearance_index(),
        caught: trial.caught,
        pre_blank_ms: trial.trajectory.pre_blank_ms,
        post_blank_ms: trial.trajectory.post_blank_ms,
        displacement_ratio: displacement_ratio(&trial, &head)?,
        pursuit_gain: pursuit_gain(&trial, &head)?,
        reappearance_speed_dps: reappearance_speed_dps(&trial, &head)?,
        blank_sweep_deg: blank_sweep_deg(&trial, &head)?,
    };
    for (frame, motor) in trial.trajectory.frames.iter().zip(&trial.motor) {
        let (az, el) = ball_angles(head.to_head(frame.position))?;
        p.time_ms.push(frame.time_ms);
        p.visible.push(frame.visible);
        p.ball_az.push(az);
        p.ball_el.push(el);
        p.gaze_az.push(motor.gaze_azimuth_deg);
        p.gaze_el.push(motor.gaze_elevation_deg);
        p.paddle_x.push(motor.paddle_position.x);
        p.paddle_y.push(motor.paddle_position.y);
        p.paddle_z.push(motor.paddle_position.z);
        p.ball_x.push(frame.position.x);
        p.ball_y.push(frame.position.y);
        p.ball_z.push(frame.position.z);
    }
    Ok(p)
}

/// One synthetic trial with ball, gaze, and paddle series plus the
/// blank-period statistics. Returns JSON.
#[wasm_bindgen]
pub fn simulate_trial(
    seed: u32,
    trial_index: u32,
    pursuit_gain_target: f64,
    gaze_lag_ms: f64,
    gaze_noise_sd_deg: f64,
    reach_noise_sd_m: f64,
) -> String {
    json_or_error(simulate_trial_payload(
        seed,
        trial_index,
        pursuit_gain_target,
        gaze_lag_ms,
        gaze_noise_sd_deg,
        reach_noise_sd_m,
    ))
}

#[derive(Serialize)]
struct TracesPayload {
    labels: Vec<String>,
    time_ms: Vec<f64>,
    /// 16 rows of per-frame values, physical units.
    traces: Vec<Vec<f64>>,
    blank_onset: usize,
    reappearance: usize,
}

fn feature_traces_payload(
    seed: u32,
    trial_index: u32,
    pursuit_gain_target: f64,
    gaze_lag_ms: f64,
    gaze_noise_sd_deg: f64,
    reach_noise_sd_m: f64,
) -> Result<TracesPayload, blankcatch_core::Error> {
    let config = TrajectoryConfig { rng_seed: seed as u64, ..TrajectoryConfig::default() };
    let agent = agent_from_knobs(
        seed,
        pursuit_gain_target,
        gaze_lag_ms,
        gaze_noise_sd_deg,
        reach_noise_sd_m,
    );
    agent.validate()?;
    let head = HeadPose::default();
    let id = trial_index as u64;
    let traj = sample_trajectory(&config, id, &mut trial_rng(config.rng_seed, id));
    let trial = blankcatch_core::agent::simulate_trial(
        traj,
        &agent,
        &head,
        &mut trial_rng(agent.rng_seed, (1 << 40) + id),
    )?;
    let frames = extract_features(&trial, config.ball_radius, &head)?;
    let mut traces = vec![Vec::with_capacity(frames.len()); FEATURE_LABELS.len()];
    for f in &frames {
        for (i, v) in f.to_array().into_iter().enumerate() {
            traces[i].push(v);
        }
    }
    Ok(TracesPayload {
        labels: FEATURE_LABELS.iter().map(|s| s.to_string()).collect(),
        time_ms: trial.trajectory.frames.iter().map(|f| f.time_ms).collect(),
        traces,
        blank_onset: trial.trajectory.blank_onset_index(),
        reappearance: trial.trajectory.reappearance_index(),
    })
}

/// The 16-dimensional input feature traces for one trial, physical units.
/// Returns JSON.
#[wasm_bindgen]
pub fn feature_traces(
    seed: u32,
    trial_index: u32,
    pursuit_gain_target: f64,
    gaze_lag_ms: f64,
    gaze_noise_sd_deg: f64,
    reach_noise_sd_m: f64,
) -> String {
    json_or_error(feature_traces_payload(
        seed,
        trial_index,
        pursuit_gain_target,
        gaze_lag_ms,
        gaze_noise_sd_deg,
        reach_noise_sd_m,
    ))
}

#[derive(Serialize)]
struct TrainPayload {
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    best_epoch: usize,
    stopped_epoch: usize,
    lstm_gaze_rmse_deg: f64,
    linear_gaze_rmse_deg: f64,
    horizon_ms: f64,
    n_train: usize,
    n_test: usize,
    /// Test-trial gaze azimuth/elevation: truth and both predictors.
    truth_az: Vec<f64>,
    truth_el: Vec<f64>,
    lstm_az: Vec<f64>,
    lstm_el: Vec<f64>,
    linear_az: Vec<f64>,
    linear_el: Vec<f64>,
}

fn train_demo_payload(
    seed: u32,
    n_trials: u32,
    horizon_frames: u32,
    epochs: u32,
    gaze_noise_sd_deg: f64,
) -> Result<TrainPayload, blankcatch_core::Error> {
    let n_trials = n_trials.clamp(20, 400);
    let epochs = epochs.clamp(10, 4000) as usize;
    let dt = (horizon_frames.clamp(1, 37)) as usize;

    let config = TrajectoryConfig { rng_seed: seed as u64, ..TrajectoryConfig::default() };
    let agent = AgentParams {
        gaze_noise_sd_deg,
        rng_seed: seed as u64,
        ..AgentParams::default()
    };
    let trials = generate_trials(&config, &agent, 1, n_trials)?;
    let dataset = featurize(&trials, config.ball_radius, &HeadPose::default(), seed as u64)?;

    let spec = ModelSpec {
        integration_ms: 27.0,
        horizons: vec![dt],
        hidden_units: 25,
        batch_size: 16,
        max_epochs: epochs,
        patience: epochs,
        learning_rate: 6e-3,
        lr_halflife_epochs: Some((epochs / 3).max(1)),
        restarts: 1,
        seed: seed as u64,
    };
    let train = window_dataset(&dataset.partition(Partition::Train), 27.0, dt)?;
    let val = window_dataset(&dataset.partition(Partition::Validation), 27.0, dt)?;
    let test = window_dataset(&dataset.partition(Partition::Test), 27.0, dt)?;

    let (params, history) = train_subnetwork(&train, &val, &spec, dt, spec.seed)?;
    let linear = fit_linear(&train, 1e-6)?;

    let preds = subnetwork_predictions(&params, &test)?;
    let norm = &dataset.normalizer;
    let mut payload = TrainPayload {
        train_loss: history.train_loss,
        val_loss: history.val_loss,
        best_epoch: history.best_epoch,
        stopped_epoch: history.stopped_epoch,
        lstm_gaze_rmse_deg: 0.0,
        linear_gaze_rmse_deg: 0.0,
        horizon_ms: dt as f64 * 1000.0 / 75.0,
        n_train: train.len(),
        n_test: test.len(),
        truth_az: Vec::new(),
        truth_el: Vec::new(),
        lstm_az: Vec::new(),
        lstm_el: Vec::new(),
        linear_az: Vec::new(),
        linear_el: Vec::new(),
    };
    let mut lstm_sq = 0.0;
    let mut lin_sq = 0.0;
    for (r, w) in test.iter().enumerate() {
        let lin = predict_linear(&linear, &w.input);
        // motor components 0, 1 are gaze elevation and azimuth
        let t_el = w.target[0] * norm.sd[0] + norm.mean[0];
        let t_az = w.target[1] * norm.sd[1] + norm.mean[1];
        let m_el = preds.at(r, 0) * norm.sd[0] + norm.mean[0];
        let m_az = preds.at(r, 1) * norm.sd[1] + norm.mean[1];
        let l_el = lin[0] * norm.sd[0] + norm.mean[0];
        let l_az = lin[1] * norm.sd[1] + norm.mean[1];
        lstm_sq += (m_el - t_el).powi(2) + (m_az - t_az).powi(2);
        lin_sq += (l_el - t_el).powi(2) + (l_az - t_az).powi(2);
        payload.truth_el.push(t_el);
        payload.truth_az.push(t_az);
        payload.lstm_el.push(m_el);
        payload.lstm_az.push(m_az);
        payload.linear_el.push(l_el);
        payload.linear_az.push(l_az);
    }
    let denom = (2 * test.len()) as f64;
    payload.lstm_gaze_rmse_deg = (lstm_sq / denom).sqrt();
    payload.linear_gaze_rmse_deg = (lin_sq / denom).sqrt();
    Ok(payload)
}

/// Train one subnetwork in the browser and compare it with the linear
/// baseline on held-out trials. Returns JSON.
#[wasm_bindgen]
pub fn train_demo(
    seed: u32,
    n_trials: u32,
    horizon_frames: u32,
    epochs: u32,
    gaze_noise_sd_deg: f64,
) -> String {
    json_or_error(train_demo_payload(seed, n_trials, horizon_frames, epochs, gaze_noise_sd_deg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_payload_parses_and_is_consistent() {
        let json = simulate_trial(7, 3, 0.95, 60.0, 0.03, 0.1);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v.get("error").is_none(), "{json}");
        let n = v["time_ms"].as_array().unwrap().len();
        assert_eq!(v["gaze_az"].as_array().unwrap().len(), n);
        assert!(v["blank_onset"].as_u64().unwrap() < v["reappearance"].as_u64().unwrap());
    }

    #[test]
    fn traces_payload_has_sixteen_rows() {
        let json = feature_traces(7, 3, 0.95, 60.0, 0.03, 0.1);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["traces"].as_array().unwrap().len(), 16);
        assert_eq!(v["labels"].as_array().unwrap().len(), 16);
    }

    #[test]
    fn invalid_knobs_surface_as_error_json() {
        let json = simulate_trial(7, 3, 5.0, 60.0, 0.03, 0.1);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v.get("error").is_some());
    }

    #[test]
    fn train_demo_runs_small() {
        let json = train_demo(5, 30, 1, 15, 0.0);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v.get("error").is_none(), "{json}");
        assert_eq!(v["train_loss"].as_array().unwrap().len(), 15);
        assert!(v["lstm_gaze_rmse_deg"].as_f64().unwrap() > 0.0);
    }
}
