//! Workbench for the blanked-ball catching task: parabolic trajectory
//! generation, a synthetic gaze/paddle behavior agent, 16-dimensional
//! sensorimotor feature extraction, multi-horizon LSTM subnetwork ensembles
//! trained from scratch, linear/mean baselines, and the error-curve and
//! feature-ablation analyses built on top of them.
//!
//! Everything is seed-deterministic: the same configuration and seeds
//! reproduce bit-identical trajectories, behavior, and trained parameters.

pub mod agent;
pub mod analysis;
pub mod ballistics;
pub mod baselines;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG for one trial: a fixed seed with the trial id as the stream index,
/// so trials can be sampled from any number of workers in any order.
pub fn trial_rng(seed: u64, trial_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(trial_id);
    rng
}
