//! End-to-end dataset assembly: a population of synthetic subjects, trial
//! generation, feature extraction, trial-level splitting, and normalization
//! fit on the training partition only.

use crate::agent::{simulate_trial, AgentParams, Trial};
use crate::analysis::{behavior_stats, BehaviorStats};
use crate::ballistics::{sample_trajectory, TrajectoryConfig};
use crate::ensemble::split_indices;
use crate::error::Result;
use crate::features::{
    extract_features, fit_normalizer, FeatureFrame, FeaturizedTrial, Normalizer, Partition,
};
use crate::geometry::HeadPose;
use crate::trial_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// RNG stream indices are partitioned so that trajectory sampling, behavior
/// noise, and subject jitter never collide even when the same seed is used
/// for everything: trajectories use the trial id, behavior uses
/// BEHAVIOR_STREAM + trial id, subject jitter uses SUBJECT_STREAM + subject.
const BEHAVIOR_STREAM: u64 = 1 << 40;
const SUBJECT_STREAM: u64 = 1 << 41;

/// Per-subject parameter jitter around the base agent, mirroring the
/// between-subject variability of a ten-person population.
pub fn subject_params(base: &AgentParams, subject: u32) -> AgentParams {
    let mut rng = trial_rng(base.rng_seed, SUBJECT_STREAM + subject as u64);
    let gain_jitter: f64 = {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.02 * z.clamp(-2.0, 2.0)
    };
    AgentParams {
        pursuit_gain_target: (base.pursuit_gain_target + gain_jitter).clamp(0.85, 1.05),
        gaze_lag_ms: base.gaze_lag_ms * rng.gen_range(0.7..1.3),
        gaze_noise_sd_deg: base.gaze_noise_sd_deg * rng.gen_range(0.8..1.25),
        reach_onset_ms: base.reach_onset_ms * rng.gen_range(0.8..1.2),
        reach_noise_sd_m: base.reach_noise_sd_m * rng.gen_range(0.8..1.25),
        paddle_radius_m: base.paddle_radius_m,
        rng_seed: base.rng_seed,
    }
}

/// Generate `n_subjects * trials_per_subject` trials with globally unique
/// trial ids. Fully determined by the two seeds in the configs.
pub fn generate_trials(
    config: &TrajectoryConfig,
    agent: &AgentParams,
    n_subjects: u32,
    trials_per_subject: u32,
) -> Result<Vec<Trial>> {
    config.validate()?;
    agent.validate()?;
    let head = HeadPose::default();
    let mut trials = Vec::with_capacity((n_subjects * trials_per_subject) as usize);
    for subject in 0..n_subjects {
        let params = if n_subjects > 1 { subject_params(agent, subject) } else { agent.clone() };
        for i in 0..trials_per_subject {
            let trial_id = (subject * trials_per_subject + i) as u64;
            let traj =
                sample_trajectory(config, trial_id, &mut trial_rng(config.rng_seed, trial_id));
            let mut trial = simulate_trial(
                traj,
                &params,
                &head,
                &mut trial_rng(agent.rng_seed, BEHAVIOR_STREAM + trial_id),
            )?;
            trial.subject_id = subject;
            trials.push(trial);
        }
    }
    Ok(trials)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturizedDataset {
    pub trials: Vec<FeaturizedTrial>,
    pub normalizer: Normalizer,
}

impl FeaturizedDataset {
    pub fn partition(&self, p: Partition) -> Vec<FeaturizedTrial> {
        self.trials.iter().filter(|t| t.partition == p).cloned().collect()
    }
}

/// Extract features for every trial, split at trial level, fit the
/// normalizer on training-partition frames only, and z-score everything.
pub fn featurize(
    trials: &[Trial],
    ball_radius: f64,
    head: &HeadPose,
    split_seed: u64,
) -> Result<FeaturizedDataset> {
    let (train_idx, val_idx, test_idx) = split_indices(trials.len(), split_seed)?;
    let mut partitions = vec![Partition::Train; trials.len()];
    for &i in &val_idx {
        partitions[i] = Partition::Validation;
    }
    for &i in &test_idx {
        partitions[i] = Partition::Test;
    }
    debug_assert_eq!(train_idx.len() + val_idx.len() + test_idx.len(), trials.len());

    let raw: Vec<Vec<FeatureFrame>> = trials
        .iter()
        .map(|t| extract_features(t, ball_radius, head))
        .collect::<Result<_>>()?;

    let train_frames = raw
        .iter()
        .zip(&partitions)
        .filter(|(_, p)| **p == Partition::Train)
        .flat_map(|(frames, _)| frames.iter());
    let normalizer = fit_normalizer(train_frames, "train")?;

    let featurized = trials
        .iter()
        .zip(raw)
        .zip(partitions)
        .map(|((trial, frames), partition)| {
            let traj = &trial.trajectory;
            FeaturizedTrial {
                trial_id: traj.trial_id,
                subject_id: trial.subject_id,
                partition,
                frames: normalizer.apply(&frames),
                blank_onset: traj.blank_onset_index(),
                blank_frames: traj.blank_frames(),
                frame_interval_ms: 1000.0 / (1000.0 / (traj.frames[1].time_ms - traj.frames[0].time_ms)),
            }
        })
        .collect();

    Ok(FeaturizedDataset { trials: featurized, normalizer })
}

/// Behavioral summary of a trial set with the default head pose.
pub fn dataset_behavior(trials: &[Trial]) -> Result<BehaviorStats> {
    behavior_stats(trials, &HeadPose::default())
}
