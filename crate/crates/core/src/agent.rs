//! Synthetic subject behavior: smooth pursuit of the ball with a first-order
//! lag, gain-scaled continuation along the (extrapolated) ball path during
//! the blank, and a minimum-jerk paddle reach toward the arrival point.
//!
//! The agent reacts to visibility changes one frame late: the update rule at
//! frame k is chosen by the visibility of frame k-1. Gaze therefore still
//! carries its blank-mode velocity on the reappearance frame itself, the way
//! pursuit under sensory delay does.

use crate::ballistics::Trajectory;
use crate::error::{Error, Result};
use crate::features::{ball_angles, MOTOR_DIM};
use crate::geometry::{HeadPose, Vec3};

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerDeg {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

/// The actor's own state at one frame. `to_array` fixes the canonical motor
/// ordering used everywhere: (gaze_el, gaze_az, paddle_x, paddle_y, paddle_z,
/// roll, pitch, yaw).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotorState {
    pub gaze_azimuth_deg: f64,
    pub gaze_elevation_deg: f64,
    /// Head-centered paddle position, meters.
    pub paddle_position: Vec3,
    pub paddle_rotation: EulerDeg,
}

impl MotorState {
    pub fn to_array(&self) -> [f64; MOTOR_DIM] {
        [
            self.gaze_elevation_deg,
            self.gaze_azimuth_deg,
            self.paddle_position.x,
            self.paddle_position.y,
            self.paddle_position.z,
            self.paddle_rotation.roll,
            self.paddle_rotation.pitch,
            self.paddle_rotation.yaw,
        ]
    }

    pub fn from_array(v: [f64; MOTOR_DIM]) -> Self {
        MotorState {
            gaze_elevation_deg: v[0],
            gaze_azimuth_deg: v[1],
            paddle_position: Vec3::new(v[2], v[3], v[4]),
            paddle_rotation: EulerDeg { roll: v[5], pitch: v[6], yaw: v[7] },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentParams {
    /// Fraction of the ball's angular displacement the gaze covers during
    /// the blank.
    pub pursuit_gain_target: f64,
    /// Time constant of the first-order pursuit lag while the ball is
    /// visible, ms.
    pub gaze_lag_ms: f64,
    /// Per-frame gaze step noise, degrees (truncated at 4 sd).
    pub gaze_noise_sd_deg: f64,
    /// Time at which the reach starts, ms from trial onset.
    pub reach_onset_ms: f64,
    /// Per-trial reach endpoint scatter in the target plane, meters per axis.
    pub reach_noise_sd_m: f64,
    pub paddle_radius_m: f64,
    pub rng_seed: u64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            pursuit_gain_target: 0.95,
            gaze_lag_ms: 60.0,
            gaze_noise_sd_deg: 0.03,
            reach_onset_ms: 300.0,
            reach_noise_sd_m: 0.10,
            paddle_radius_m: 0.15,
            rng_seed: 0,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if self.gaze_noise_sd_deg < 0.0 || self.reach_noise_sd_m < 0.0 {
            return Err(Error::InvalidArgument("noise sd must be >= 0".into()));
        }
        if !(self.pursuit_gain_target > 0.0 && self.pursuit_gain_target <= 1.2) {
            return Err(Error::InvalidArgument(format!(
                "pursuit gain {} outside (0, 1.2]",
                self.pursuit_gain_target
            )));
        }
        if self.gaze_lag_ms < 0.0 || self.reach_onset_ms < 0.0 {
            return Err(Error::InvalidArgument("lag and reach onset must be >= 0".into()));
        }
        Ok(())
    }
}

/// Paddle rest pose, head-centered: held low at the right side, facing the
/// launch plane.
const PADDLE_REST: Vec3 = Vec3 { x: 0.3, y: -0.4, z: 0.35 };

fn truncated_gauss(rng: &mut ChaCha12Rng, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sd * z.clamp(-2.5, 2.5)
}

/// Gaze azimuth/elevation per frame. Visible spans use a first-order lag
/// toward the ball's head-frame angles; during the blank the gaze continues
/// along the extrapolated ball path scaled by `pursuit_gain_target`.
pub fn simulate_gaze(
    trajectory: &Trajectory,
    params: &AgentParams,
    head: &HeadPose,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<(f64, f64)>> {
    let frames = &trajectory.frames;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let angles: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| ball_angles(head.to_head(f.position)))
        .collect::<Result<_>>()?;

    let fi_ms = frames.get(1).map_or(1000.0 / 75.0, |f| f.time_ms - frames[0].time_ms);
    let alpha = fi_ms / (params.gaze_lag_ms + fi_ms);
    let gain = params.pursuit_gain_target;
    let sd = params.gaze_noise_sd_deg;

    let mut out = Vec::with_capacity(frames.len());
    let (az0, el0) = angles[0];
    out.push((az0 + truncated_gauss(rng, sd), el0 + truncated_gauss(rng, sd)));
    for k in 1..frames.len() {
        let (prev_az, prev_el) = out[k - 1];
        let saw_ball = frames[k - 1].visible;
        let ball_step = (angles[k].0 - angles[k - 1].0, angles[k].1 - angles[k - 1].1);
        let (mut d_az, mut d_el) = if saw_ball {
            (alpha * (angles[k].0 - prev_az), alpha * (angles[k].1 - prev_el))
        } else {
            (gain * ball_step.0, gain * ball_step.1)
        };
        // pursuit slews no faster than the (gain-scaled) ball, so catch-up
        // after the blank or under target acceleration stays smooth
        let speed_cap = gain * ball_step.0.hypot(ball_step.1) + sd;
        let raw = d_az.hypot(d_el);
        if raw > speed_cap {
            d_az *= speed_cap / raw;
            d_el *= speed_cap / raw;
        }
        out.push((
            prev_az + d_az + truncated_gauss(rng, sd),
            prev_el + d_el + truncated_gauss(rng, sd),
        ));
    }
    Ok(out)
}

/// Minimum-jerk displacement fraction at normalized time `tau` in [0, 1].
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Paddle pose per frame: rest until `reach_onset_ms`, then a minimum-jerk
/// reach toward the arrival point (plus a per-trial Gaussian endpoint
/// offset in the target plane). Rotation turns the paddle normal toward the
/// incoming ball direction over the same profile.
pub fn simulate_paddle(
    trajectory: &Trajectory,
    params: &AgentParams,
    head: &HeadPose,
    rng: &mut ChaCha12Rng,
) -> Vec<(Vec3, EulerDeg)> {
    let frames = &trajectory.frames;
    if frames.is_empty() {
        return Vec::new();
    }
    let offset = Vec3::new(
        truncated_gauss(rng, params.reach_noise_sd_m),
        truncated_gauss(rng, params.reach_noise_sd_m),
        0.0,
    );
    let target = head.to_head(trajectory.arrival_point + offset);

    let arrival_ms = frames.last().unwrap().time_ms;
    let onset_ms = params.reach_onset_ms.min(arrival_ms - 1.0);
    let span_ms = arrival_ms - onset_ms;

    let incoming = frames.last().unwrap().velocity.normalized();
    let normal = -incoming;
    let final_rot = EulerDeg {
        roll: 0.0,
        pitch: normal.y.atan2(normal.x.hypot(normal.z)).to_degrees(),
        yaw: normal.x.atan2(normal.z).to_degrees(),
    };

    frames
        .iter()
        .map(|f| {
            let s = min_jerk((f.time_ms - onset_ms) / span_ms);
            let pos = PADDLE_REST + (target - PADDLE_REST) * s;
            let rot = EulerDeg {
                roll: 0.0,
                pitch: final_rot.pitch * s,
                yaw: final_rot.yaw * s,
            };
            (pos, rot)
        })
        .collect()
}

/// A trajectory joined with the synthetic motor states and catch outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub trajectory: Trajectory,
    pub motor: Vec<MotorState>,
    pub subject_id: u32,
    pub caught: bool,
}

/// True iff the ball center lies within `paddle_radius` of the paddle center
/// in the target plane at the frame where the ball crosses that plane.
pub fn catch_outcome(trial: &Trial, paddle_radius: f64, head: &HeadPose) -> Result<bool> {
    let plane_z = trial.trajectory.arrival_point.z;
    let crossing = trial
        .trajectory
        .frames
        .iter()
        .position(|f| f.position.z <= plane_z + 1e-9)
        .ok_or_else(|| {
            Error::MalformedTrial(format!(
                "trial {} never reaches the target plane",
                trial.trajectory.trial_id
            ))
        })?;
    if crossing >= trial.motor.len() {
        return Err(Error::MalformedTrial("no motor state at the arrival frame".into()));
    }
    let ball = trial.trajectory.frames[crossing].position;
    let paddle = trial.motor[crossing].paddle_position + head.position;
    let offset = (ball.x - paddle.x).hypot(ball.y - paddle.y);
    Ok(offset <= paddle_radius)
}

/// Run the full agent on one trajectory. Gaze noise is drawn first, then the
/// reach offset, so the stream layout is stable.
pub fn simulate_trial(
    trajectory: Trajectory,
    params: &AgentParams,
    head: &HeadPose,
    rng: &mut ChaCha12Rng,
) -> Result<Trial> {
    let gaze = simulate_gaze(&trajectory, params, head, rng)?;
    let paddle = simulate_paddle(&trajectory, params, head, rng);
    let motor = gaze
        .into_iter()
        .zip(paddle)
        .map(|((az, el), (pos, rot))| MotorState {
            gaze_azimuth_deg: az,
            gaze_elevation_deg: el,
            paddle_position: pos,
            paddle_rotation: rot,
        })
        .collect();
    let mut trial = Trial { trajectory, motor, subject_id: 0, caught: false };
    trial.caught = catch_outcome(&trial, params.paddle_radius_m, head)?;
    Ok(trial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballistics::{sample_trajectory, TrajectoryConfig};
    use crate::trial_rng;

    fn noiseless_params() -> AgentParams {
        AgentParams {
            pursuit_gain_target: 1.0,
            gaze_lag_ms: 0.0,
            gaze_noise_sd_deg: 0.0,
            reach_noise_sd_m: 0.0,
            ..AgentParams::default()
        }
    }

    #[test]
    fn noiseless_unity_gaze_equals_ball_angles() {
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        for id in 0..20 {
            let traj = sample_trajectory(&config, id, &mut trial_rng(1, id));
            let gaze =
                simulate_gaze(&traj, &noiseless_params(), &head, &mut trial_rng(2, id)).unwrap();
            for (k, f) in traj.frames.iter().enumerate() {
                let (az, el) = ball_angles(head.to_head(f.position)).unwrap();
                assert!((gaze[k].0 - az).abs() < 1e-9, "frame {k} azimuth");
                assert!((gaze[k].1 - el).abs() < 1e-9, "frame {k} elevation");
            }
        }
    }

    #[test]
    fn min_jerk_profile_midpoint_and_peak_velocity() {
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        assert!((min_jerk(0.5) - 0.5).abs() < 1e-15);
        // velocity 30 t^2 - 60 t^3 + 30 t^4 peaks at the midpoint
        let vel = |t: f64| 30.0 * t * t - 60.0 * t * t * t + 30.0 * t * t * t * t;
        let peak = vel(0.5);
        for t in [0.1, 0.3, 0.7, 0.9] {
            assert!(vel(t) < peak);
        }
    }

    #[test]
    fn noiseless_reach_terminates_at_arrival_point() {
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        for id in 0..20 {
            let traj = sample_trajectory(&config, id, &mut trial_rng(3, id));
            let arrival = traj.arrival_point;
            let paddle =
                simulate_paddle(&traj, &noiseless_params(), &head, &mut trial_rng(4, id));
            let terminal = paddle.last().unwrap().0 + head.position;
            assert!((terminal - arrival).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_agent_catches_everything() {
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        for id in 0..50 {
            let traj = sample_trajectory(&config, id, &mut trial_rng(5, id));
            let trial =
                simulate_trial(traj, &noiseless_params(), &head, &mut trial_rng(6, id)).unwrap();
            assert!(trial.caught, "trial {id}");
        }
    }

    #[test]
    fn catch_boundary_is_paddle_radius() {
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        let traj = sample_trajectory(&config, 0, &mut trial_rng(7, 0));
        let mut trial =
            simulate_trial(traj, &noiseless_params(), &head, &mut trial_rng(8, 0)).unwrap();
        let last = trial.motor.len() - 1;
        let ball = trial.trajectory.frames[last].position;
        // coincident centers catch
        assert!(catch_outcome(&trial, 0.15, &head).unwrap());
        // offset exactly radius + 1e-6 misses
        trial.motor[last].paddle_position.x = ball.x - head.position.x + 0.15 + 1e-6;
        trial.motor[last].paddle_position.y = ball.y - head.position.y;
        assert!(!catch_outcome(&trial, 0.15, &head).unwrap());
        // just inside the rim is still a catch
        trial.motor[last].paddle_position.x = ball.x - head.position.x + 0.15 - 1e-9;
        assert!(catch_outcome(&trial, 0.15, &head).unwrap());
    }

    #[test]
    fn catch_requires_arrival_frame() {
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        let traj = sample_trajectory(&config, 0, &mut trial_rng(7, 0));
        let mut trial =
            simulate_trial(traj, &noiseless_params(), &head, &mut trial_rng(8, 0)).unwrap();
        trial.trajectory.frames.truncate(40);
        trial.motor.truncate(40);
        assert!(matches!(
            catch_outcome(&trial, 0.15, &head),
            Err(Error::MalformedTrial(_))
        ));
    }

    #[test]
    fn deterministic_motor_sequences() {
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        let params = AgentParams::default();
        let traj = sample_trajectory(&config, 9, &mut trial_rng(10, 9));
        let a = simulate_trial(traj.clone(), &params, &head, &mut trial_rng(11, 9)).unwrap();
        let b = simulate_trial(traj, &params, &head, &mut trial_rng(11, 9)).unwrap();
        assert_eq!(a.motor, b.motor);
        assert_eq!(a.caught, b.caught);
    }

    #[test]
    fn gaze_steps_stay_continuous() {
        // Step bound: ball angular step * gain + 5 * noise sd. No teleporting.
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        let params = AgentParams::default();
        for id in 0..100 {
            let traj = sample_trajectory(&config, id, &mut trial_rng(12, id));
            let gaze = simulate_gaze(&traj, &params, &head, &mut trial_rng(13, id)).unwrap();
            let angles: Vec<(f64, f64)> = traj
                .frames
                .iter()
                .map(|f| ball_angles(head.to_head(f.position)).unwrap())
                .collect();
            for k in 1..gaze.len() {
                let step = (gaze[k].0 - gaze[k - 1].0).hypot(gaze[k].1 - gaze[k - 1].1);
                let ball_step =
                    (angles[k].0 - angles[k - 1].0).hypot(angles[k].1 - angles[k - 1].1);
                let bound = ball_step * params.pursuit_gain_target
                    + 5.0 * params.gaze_noise_sd_deg
                    + 1e-9;
                assert!(
                    step <= bound.max(ball_step),
                    "trial {id} frame {k}: step {step} > bound {bound}"
                );
            }
        }
    }

    #[test]
    fn gaze_angles_stay_in_open_range() {
        let config = TrajectoryConfig::default();
        let head = HeadPose::default();
        let params = AgentParams::default();
        for id in 0..100 {
            let traj = sample_trajectory(&config, id, &mut trial_rng(14, id));
            let gaze = simulate_gaze(&traj, &params, &head, &mut trial_rng(15, id)).unwrap();
            for (az, el) in gaze {
                assert!(az.abs() < 90.0 && el.abs() < 90.0);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(AgentParams::default().validate().is_ok());
        let mut p = AgentParams::default();
        p.pursuit_gain_target = 1.5;
        assert!(p.validate().is_err());
        p = AgentParams::default();
        p.gaze_noise_sd_deg = -0.1;
        assert!(p.validate().is_err());
    }
}
