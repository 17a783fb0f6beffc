//! The 16-dimensional sensorimotor input representation: 8 motor dimensions
//! copied from the actor's own state and 8 optical dimensions computed from
//! head-centered ball geometry, plus z-score normalization and the
//! blank-onset windowing that produces training samples.

use crate::agent::Trial;
use crate::ballistics::frames_for;
use crate::error::{Error, Result};
use crate::geometry::{HeadPose, Vec3};
use serde::{Deserialize, Serialize};

pub const MOTOR_DIM: usize = 8;
pub const OPTICAL_DIM: usize = 8;
pub const FEATURE_DIM: usize = MOTOR_DIM + OPTICAL_DIM;

/// Canonical feature ordering, the single source of truth across the whole
/// workbench: motor block first, optical block second. The motor ordering
/// equals the model output ordering.
pub const FEATURE_LABELS: [&str; FEATURE_DIM] = [
    "gaze_el",
    "gaze_az",
    "paddle_x",
    "paddle_y",
    "paddle_z",
    "paddle_roll",
    "paddle_pitch",
    "paddle_yaw",
    "ball_az",
    "ball_el",
    "ball_az_rate",
    "ball_el_rate",
    "ball_depth",
    "ball_depth_rate",
    "ball_angular_size",
    "ball_expansion_rate",
];

pub fn motor_labels() -> &'static [&'static str] {
    &FEATURE_LABELS[..MOTOR_DIM]
}

/// Head-centered angular position of a point: azimuth = atan2(x, z),
/// elevation = atan2(y, hypot(x, z)), both in degrees.
pub fn ball_angles(head_frame_position: Vec3) -> Result<(f64, f64)> {
    let p = head_frame_position;
    if p.norm() == 0.0 {
        return Err(Error::DegenerateGeometry("ball position at the eye origin".into()));
    }
    let az = p.x.atan2(p.z).to_degrees();
    let el = p.y.atan2(p.x.hypot(p.z)).to_degrees();
    Ok((az, el))
}

/// Optical angle subtended by a ball of `radius` at `depth` meters:
/// 2 atan(radius / depth), degrees.
pub fn angular_size(radius: f64, depth: f64) -> Result<f64> {
    if depth <= radius {
        return Err(Error::DegenerateGeometry(format!(
            "ball depth {depth} m at or inside the eye (radius {radius} m)"
        )));
    }
    Ok(2.0 * (radius / depth).atan().to_degrees())
}

/// Time-to-contact estimate: optical angle over its expansion rate. Not one
/// of the 16 model inputs; produced for analysis output only. Returns `None`
/// when the expansion rate is zero (tau undefined).
pub fn optical_tau(angle_deg: f64, expansion_rate_dps: f64) -> Option<f64> {
    if expansion_rate_dps == 0.0 {
        None
    } else {
        Some(angle_deg / expansion_rate_dps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    /// Actor state in canonical motor ordering.
    pub motor: [f64; MOTOR_DIM],
    /// ball_az, ball_el (deg), their rates (deg/s), depth (m), depth rate
    /// (m/s), angular size (deg), expansion rate (deg/s).
    pub optical: [f64; OPTICAL_DIM],
}

impl FeatureFrame {
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..MOTOR_DIM].copy_from_slice(&self.motor);
        out[MOTOR_DIM..].copy_from_slice(&self.optical);
        out
    }

    pub fn from_array(values: [f64; FEATURE_DIM]) -> Self {
        let mut motor = [0.0; MOTOR_DIM];
        let mut optical = [0.0; OPTICAL_DIM];
        motor.copy_from_slice(&values[..MOTOR_DIM]);
        optical.copy_from_slice(&values[MOTOR_DIM..]);
        FeatureFrame { motor, optical }
    }
}

/// One feature frame per trial frame. Rates at frame k are backward
/// differences over frames k-1..k; frame 0 rates are zero.
pub fn extract_features(trial: &Trial, ball_radius: f64, head: &HeadPose) -> Result<Vec<FeatureFrame>> {
    let frames = &trial.trajectory.frames;
    let mut out = Vec::with_capacity(frames.len());
    let mut prev: Option<(f64, f64, f64, f64)> = None; // az, el, depth, size
    for (k, frame) in frames.iter().enumerate() {
        let rel = head.to_head(frame.position);
        let (az, el) = ball_angles(rel)?;
        let depth = rel.norm();
        let size = angular_size(ball_radius, depth)?;
        let (az_rate, el_rate, depth_rate, expansion) = match prev {
            None => (0.0, 0.0, 0.0, 0.0),
            Some((paz, pel, pdepth, psize)) => {
                let dt_s = (frame.time_ms - frames[k - 1].time_ms) / 1000.0;
                (
                    (az - paz) / dt_s,
                    (el - pel) / dt_s,
                    (depth - pdepth) / dt_s,
                    (size - psize) / dt_s,
                )
            }
        };
        prev = Some((az, el, depth, size));
        out.push(FeatureFrame {
            motor: trial.motor[k].to_array(),
            optical: [az, el, az_rate, el_rate, depth, depth_rate, size, expansion],
        });
    }
    Ok(out)
}

pub const SD_FLOOR: f64 = 1e-8;

/// Per-feature z-score statistics, fit on the training partition only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; FEATURE_DIM],
    /// Population standard deviation, floored at `SD_FLOOR`.
    pub sd: [f64; FEATURE_DIM],
    /// Tag of the dataset partition the statistics came from.
    pub computed_from: String,
    /// Features whose sd hit the floor (constant columns): callers should
    /// surface these as a warning.
    pub floored_features: Vec<usize>,
}

pub fn fit_normalizer<'a, I>(frames: I, computed_from: &str) -> Result<Normalizer>
where
    I: IntoIterator<Item = &'a FeatureFrame>,
{
    let mut n = 0usize;
    let mut sum = [0.0; FEATURE_DIM];
    let mut sumsq = [0.0; FEATURE_DIM];
    for frame in frames {
        let v = frame.to_array();
        for i in 0..FEATURE_DIM {
            sum[i] += v[i];
            sumsq[i] += v[i] * v[i];
        }
        n += 1;
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalizer needs at least 2 frames, got {n}"
        )));
    }
    let mut mean = [0.0; FEATURE_DIM];
    let mut sd = [0.0; FEATURE_DIM];
    let mut floored = Vec::new();
    for i in 0..FEATURE_DIM {
        mean[i] = sum[i] / n as f64;
        let var = (sumsq[i] / n as f64 - mean[i] * mean[i]).max(0.0);
        sd[i] = var.sqrt();
        if sd[i] < SD_FLOOR {
            sd[i] = SD_FLOOR;
            floored.push(i);
        }
    }
    Ok(Normalizer {
        mean,
        sd,
        computed_from: computed_from.to_string(),
        floored_features: floored,
    })
}

impl Normalizer {
    pub fn apply_frame(&self, frame: &FeatureFrame) -> FeatureFrame {
        let v = frame.to_array();
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = (v[i] - self.mean[i]) / self.sd[i];
        }
        FeatureFrame::from_array(out)
    }

    pub fn apply(&self, frames: &[FeatureFrame]) -> Vec<FeatureFrame> {
        frames.iter().map(|f| self.apply_frame(f)).collect()
    }

    /// Map a normalized motor vector back to physical units (degrees, meters).
    pub fn denormalize_motor(&self, motor: [f64; MOTOR_DIM]) -> [f64; MOTOR_DIM] {
        let mut out = [0.0; MOTOR_DIM];
        for i in 0..MOTOR_DIM {
            out[i] = motor[i] * self.sd[i] + self.mean[i];
        }
        out
    }

    pub fn normalize_motor(&self, motor: [f64; MOTOR_DIM]) -> [f64; MOTOR_DIM] {
        let mut out = [0.0; MOTOR_DIM];
        for i in 0..MOTOR_DIM {
            out[i] = (motor[i] - self.mean[i]) / self.sd[i];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Partition::Train => write!(f, "train"),
            Partition::Validation => write!(f, "validation"),
            Partition::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(Error::parse("partition", format!("unknown partition `{other}`"))),
        }
    }
}

/// A trial reduced to its normalized feature frames plus the indices needed
/// for windowing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturizedTrial {
    pub trial_id: u64,
    pub subject_id: u32,
    pub partition: Partition,
    pub frames: Vec<FeatureFrame>,
    /// Index of the last visible frame before the blank.
    pub blank_onset: usize,
    pub blank_frames: usize,
    pub frame_interval_ms: f64,
}

/// One training sample: an integration window of normalized feature frames
/// ending at blank onset, and the normalized motor state `horizon_frames`
/// frames into the blank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSample {
    pub input: Vec<[f64; FEATURE_DIM]>,
    pub target: [f64; MOTOR_DIM],
    pub trial_id: u64,
    pub subject_id: u32,
    pub integration_ms: f64,
    pub horizon_frames: usize,
    pub partition: Partition,
}

/// Window length in frames for an integration duration, minimum 1.
pub fn window_len(integration_ms: f64, frame_rate_hz: f64) -> usize {
    frames_for(integration_ms, frame_rate_hz).max(1)
}

/// One `WindowSample` per trial for the given integration duration and
/// prediction horizon. No padding: a window that would reach before the
/// first frame is an error.
pub fn window_dataset(
    trials: &[FeaturizedTrial],
    integration_ms: f64,
    horizon_frames: usize,
) -> Result<Vec<WindowSample>> {
    let mut out = Vec::with_capacity(trials.len());
    for trial in trials {
        let rate = 1000.0 / trial.frame_interval_ms;
        let len = window_len(integration_ms, rate);
        let onset = trial.blank_onset;
        if len > onset + 1 {
            return Err(Error::InvalidArgument(format!(
                "integration {integration_ms} ms needs {len} frames but trial {} has only {} pre-blank frames",
                trial.trial_id,
                onset + 1
            )));
        }
        if horizon_frames < 1 || horizon_frames > trial.blank_frames {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon_frames} frames outside the blank (1..={})",
                trial.blank_frames
            )));
        }
        let input: Vec<[f64; FEATURE_DIM]> = trial.frames[onset + 1 - len..=onset]
            .iter()
            .map(|f| f.to_array())
            .collect();
        let target = trial.frames[onset + horizon_frames].motor;
        out.push(WindowSample {
            input,
            target,
            trial_id: trial.trial_id,
            subject_id: trial.subject_id,
            integration_ms,
            horizon_frames,
            partition: trial.partition,
        });
    }
    Ok(out)
}
