//! Parabolic ball trajectories and blanking schedules.
//!
//! Each trial launches a ball from a random point on a wide launch plane so
//! that it arrives, after a fixed flight time, at a random point on a small
//! target plane near the subject. Mid-flight the ball is blanked (made
//! invisible) for a fixed span, splitting the flight into pre-blank, blank,
//! and post-blank phases.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Convert a duration in milliseconds to a frame count at `rate` Hz,
/// rounding halves down. The 500 ms blank at 75 Hz is 37.5 frames and must
/// come out as 37 so that one prediction horizon exists per blank frame.
pub fn frames_for(duration_ms: f64, rate_hz: f64) -> usize {
    let frames = duration_ms * rate_hz / 1000.0;
    let n = (frames - 0.5).ceil();
    if n <= 0.0 {
        0
    } else {
        n as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Width (room X span) of the launch plane, meters.
    pub launch_plane_width: f64,
    /// Height (room Y span) of the launch plane, meters.
    pub launch_plane_height: f64,
    /// Distance of the launch plane from the subject origin along +Z, meters.
    pub launch_distance: f64,
    /// Height of the launch plane center, meters.
    pub launch_center_height: f64,
    /// Side length of the square target plane, meters.
    pub target_plane_side: f64,
    /// Center of the target plane in the room frame.
    pub target_center: Vec3,
    /// Gravity magnitude, m/s^2, acting along -Y.
    pub gravity: f64,
    pub frame_rate_hz: f64,
    pub pre_blank_options_ms: Vec<f64>,
    pub blank_duration_ms: f64,
    pub post_blank_options_ms: Vec<f64>,
    pub ball_radius: f64,
    pub rng_seed: u64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            launch_plane_width: 6.0,
            launch_plane_height: 1.5,
            launch_distance: 4.5,
            launch_center_height: 1.75,
            target_plane_side: 1.0,
            target_center: Vec3::new(0.0, 1.3, 0.3),
            gravity: 9.81,
            frame_rate_hz: 75.0,
            pre_blank_options_ms: vec![600.0, 800.0, 1000.0],
            blank_duration_ms: 500.0,
            post_blank_options_ms: vec![300.0, 400.0, 500.0],
            ball_radius: 0.03,
            rng_seed: 0,
        }
    }
}

impl TrajectoryConfig {
    pub fn frame_interval_ms(&self) -> f64 {
        1000.0 / self.frame_rate_hz
    }

    pub fn gravity_vector(&self) -> Vec3 {
        Vec3::new(0.0, -self.gravity, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_hz > 0.0) {
            return Err(Error::InvalidArgument("frame rate must be positive".into()));
        }
        if self.pre_blank_options_ms.is_empty() || self.post_blank_options_ms.is_empty() {
            return Err(Error::InvalidArgument("duration option sets must be non-empty".into()));
        }
        let all = self
            .pre_blank_options_ms
            .iter()
            .chain(self.post_blank_options_ms.iter())
            .chain(std::iter::once(&self.blank_duration_ms));
        for &d in all {
            if frames_for(d, self.frame_rate_hz) == 0 {
                return Err(Error::InvalidArgument(format!(
                    "duration {d} ms is shorter than one frame interval"
                )));
            }
        }
        if self.launch_distance <= self.target_center.z {
            return Err(Error::InvalidArgument(
                "launch plane must sit beyond the target plane".into(),
            ));
        }
        if !(self.ball_radius > 0.0) {
            return Err(Error::InvalidArgument("ball radius must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub time_ms: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub visible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub trial_id: u64,
    pub frames: Vec<TrajectoryFrame>,
    pub pre_blank_ms: f64,
    pub blank_ms: f64,
    pub post_blank_ms: f64,
    pub launch_point: Vec3,
    pub arrival_point: Vec3,
}

impl Trajectory {
    /// Index of the last visible frame before the blank (the blank onset in
    /// window terms: the integration window's right edge).
    pub fn blank_onset_index(&self) -> usize {
        self.frames.iter().position(|f| !f.visible).expect("trajectory has a blank") - 1
    }

    /// Number of invisible frames.
    pub fn blank_frames(&self) -> usize {
        self.frames.iter().filter(|f| !f.visible).count()
    }

    /// Index of the first visible frame after the blank.
    pub fn reappearance_index(&self) -> usize {
        self.blank_onset_index() + self.blank_frames() + 1
    }

    pub fn total_flight_ms(&self) -> f64 {
        self.pre_blank_ms + self.blank_ms + self.post_blank_ms
    }
}

/// Initial velocity so that a point mass launched from `launch` under
/// constant acceleration `gravity` passes through `target` after
/// `flight_time` seconds: v0 = (target - launch - g t^2 / 2) / t.
pub fn solve_ballistic(
    launch: Vec3,
    target: Vec3,
    flight_time: f64,
    gravity: Vec3,
) -> Result<Vec3> {
    if !(flight_time > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "flight time must be positive, got {flight_time}"
        )));
    }
    let t = flight_time;
    Ok((target - launch - gravity * (0.5 * t * t)) * (1.0 / t))
}

/// Per-frame visibility flags for one trial: `true` while the ball is
/// visible, `false` during the blank. The total length is the rounded frame
/// count of the whole flight; the trailing visible run absorbs the rounding
/// remainder.
pub fn blanking_schedule(
    pre_ms: f64,
    blank_ms: f64,
    post_ms: f64,
    rate_hz: f64,
) -> Result<Vec<bool>> {
    for (name, d) in [("pre-blank", pre_ms), ("blank", blank_ms), ("post-blank", post_ms)] {
        if frames_for(d, rate_hz) == 0 {
            return Err(Error::InvalidArgument(format!(
                "{name} duration {d} ms is shorter than one frame interval"
            )));
        }
    }
    let n_total = frames_for(pre_ms + blank_ms + post_ms, rate_hz);
    let n_pre = frames_for(pre_ms, rate_hz);
    let n_blank = frames_for(blank_ms, rate_hz);
    if n_pre + n_blank >= n_total {
        return Err(Error::InvalidArgument(
            "post-blank span rounds to zero frames".into(),
        ));
    }
    let mut flags = vec![true; n_total];
    for f in flags.iter_mut().skip(n_pre).take(n_blank) {
        *f = false;
    }
    Ok(flags)
}

/// Draw one trial: launch point uniform on the launch plane, arrival point
/// uniform on the target plane, pre/post-blank durations uniform over their
/// option sets, frames sampled from the analytic parabola at the frame rate.
///
/// Frame k carries time (k+1) * frame_interval, so the final frame lands
/// exactly on the arrival point at the end of the flight.
pub fn sample_trajectory(
    config: &TrajectoryConfig,
    trial_id: u64,
    rng: &mut ChaCha12Rng,
) -> Trajectory {
    let pre = config.pre_blank_options_ms
        [rng.gen_range(0..config.pre_blank_options_ms.len())];
    let post = config.post_blank_options_ms
        [rng.gen_range(0..config.post_blank_options_ms.len())];
    let blank = config.blank_duration_ms;

    let half_w = config.launch_plane_width / 2.0;
    let half_h = config.launch_plane_height / 2.0;
    let launch = Vec3::new(
        rng.gen_range(-half_w..=half_w),
        config.launch_center_height + rng.gen_range(-half_h..=half_h),
        config.launch_distance,
    );
    let half_s = config.target_plane_side / 2.0;
    let arrival = config.target_center
        + Vec3::new(
            rng.gen_range(-half_s..=half_s),
            rng.gen_range(-half_s..=half_s),
            0.0,
        );

    let flags = blanking_schedule(pre, blank, post, config.frame_rate_hz)
        .expect("config durations validated");
    let fi_s = 1.0 / config.frame_rate_hz;
    // The flight is quantized to the frame grid so the final frame lands
    // exactly on the arrival point; nominal durations whose total is a half
    // frame (e.g. 1500 ms at 75 Hz) lose that half frame from the tail.
    let flight_s = flags.len() as f64 * fi_s;
    let gravity = config.gravity_vector();
    let v0 = solve_ballistic(launch, arrival, flight_s, gravity)
        .expect("flight time is positive by construction");
    let frames = flags
        .iter()
        .enumerate()
        .map(|(k, &visible)| {
            let t = (k + 1) as f64 * fi_s;
            TrajectoryFrame {
                time_ms: t * 1000.0,
                position: launch + v0 * t + gravity * (0.5 * t * t),
                velocity: v0 + gravity * t,
                visible,
            }
        })
        .collect();

    Trajectory {
        trial_id,
        frames,
        pre_blank_ms: pre,
        blank_ms: blank,
        post_blank_ms: post,
        launch_point: launch,
        arrival_point: arrival,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_rng;
    use std::collections::BTreeMap;

    /// Independent check: integrate the flight forward with velocity-Verlet
    /// steps (exact for constant acceleration up to rounding) and return the
    /// terminal position.
    pub(crate) fn integrate_forward(
        launch: Vec3,
        v0: Vec3,
        gravity: Vec3,
        flight_time: f64,
        steps: usize,
    ) -> Vec3 {
        let dt = flight_time / steps as f64;
        let mut p = launch;
        let mut v = v0;
        for _ in 0..steps {
            p = p + v * dt + gravity * (0.5 * dt * dt);
            v = v + gravity * dt;
        }
        p
    }

    #[test]
    fn solve_identity_case() {
        let v0 = solve_ballistic(Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, 3.0), 1.0, Vec3::ZERO)
            .unwrap();
        assert_eq!(v0, Vec3::ZERO);
    }

    #[test]
    fn solve_matches_closed_form_oracle() {
        // v0 = (dp - g T^2 / 2) / T for launch (-2,2,-8) -> target (0.3,1.2,0), T = 1.4.
        let launch = Vec3::new(-2.0, 2.0, -8.0);
        let target = Vec3::new(0.3, 1.2, 0.0);
        let g = Vec3::new(0.0, -9.81, 0.0);
        let v0 = solve_ballistic(launch, target, 1.4, g).unwrap();
        assert!((v0.x - 1.642857142857143).abs() < 1e-12);
        assert!((v0.y - 6.295571428571429).abs() < 1e-12);
        assert!((v0.z - 5.714285714285714).abs() < 1e-12);

        let terminal = integrate_forward(launch, v0, g, 1.4, 14_000);
        assert!((terminal - target).norm() < 1e-9);
    }

    #[test]
    fn solve_symmetric_apex_case() {
        // Level launch and target over T = 2 s: v_y = gT/2.
        let v0 = solve_ballistic(
            Vec3::new(0.0, 1.0, -8.0),
            Vec3::new(0.0, 1.0, 0.0),
            2.0,
            Vec3::new(0.0, -9.81, 0.0),
        )
        .unwrap();
        assert!((v0.x).abs() < 1e-12);
        assert!((v0.y - 9.81).abs() < 1e-12);
        assert!((v0.z - 4.0).abs() < 1e-12);
    }

    #[test]
    fn solve_rejects_nonpositive_flight_time() {
        assert!(matches!(
            solve_ballistic(Vec3::ZERO, Vec3::ZERO, 0.0, Vec3::ZERO),
            Err(Error::InvalidArgument(_))
        ));
        assert!(solve_ballistic(Vec3::ZERO, Vec3::ZERO, -1.0, Vec3::ZERO).is_err());
    }

    #[test]
    fn schedule_counts_for_default_combos() {
        // 600/500/300 at 75 Hz: 105 flags, 45 visible, 37 blank, 23 visible.
        let flags = blanking_schedule(600.0, 500.0, 300.0, 75.0).unwrap();
        assert_eq!(flags.len(), 105);
        assert_eq!(flags.iter().take_while(|v| **v).count(), 45);
        assert_eq!(flags.iter().filter(|v| !**v).count(), 37);
        assert!(flags[105 - 23..].iter().all(|v| *v));
    }

    #[test]
    fn schedule_single_frame_spans() {
        let flags = blanking_schedule(13.33, 13.33, 13.33, 75.0).unwrap();
        assert_eq!(flags, vec![true, false, true]);
    }

    #[test]
    fn schedule_blank_run_position() {
        let flags = blanking_schedule(1000.0, 500.0, 500.0, 75.0).unwrap();
        assert_eq!(flags.len(), 150);
        assert_eq!(flags.iter().position(|v| !*v), Some(75));
    }

    #[test]
    fn schedule_rejects_subframe_duration() {
        assert!(blanking_schedule(5.0, 500.0, 300.0, 75.0).is_err());
        assert!(blanking_schedule(600.0, 500.0, 6.0, 75.0).is_err());
    }

    #[test]
    fn sampled_frame_count_and_arrival() {
        let config = TrajectoryConfig::default();
        let mut rng = trial_rng(7, 0);
        for id in 0..200 {
            let t = sample_trajectory(&config, id, &mut rng);
            let expected = frames_for(t.total_flight_ms(), config.frame_rate_hz);
            assert_eq!(t.frames.len(), expected);
            if (t.pre_blank_ms, t.post_blank_ms) == (600.0, 500.0) {
                assert_eq!(t.frames.len(), 120);
            }
            let last = t.frames.last().unwrap();
            assert!((last.position - t.arrival_point).norm() < 1e-6);
        }
    }

    #[test]
    fn duration_distribution_uniform() {
        let config = TrajectoryConfig::default();
        let mut counts: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        let n = 10_000;
        for id in 0..n {
            let mut rng = trial_rng(3, id);
            let t = sample_trajectory(&config, id, &mut rng);
            *counts.entry((t.pre_blank_ms as u64, t.post_blank_ms as u64)).or_default() += 1;
        }
        assert_eq!(counts.len(), 9);
        let expected = n as f64 / 9.0;
        let mut chi2 = 0.0;
        for &c in counts.values() {
            let diff = c as f64 - expected;
            chi2 += diff * diff / expected;
            assert!(
                (c as f64 / n as f64 - 1.0 / 9.0).abs() < 0.02,
                "combination frequency off by more than 2% absolute"
            );
        }
        // chi-square critical value, 8 dof, alpha = 0.001
        assert!(chi2 < 26.12, "chi2 = {chi2}");
    }

    #[test]
    fn seven_distinct_flight_durations() {
        let config = TrajectoryConfig::default();
        let mut durations = std::collections::BTreeSet::new();
        for id in 0..2000 {
            let mut rng = trial_rng(11, id);
            durations.insert(sample_trajectory(&config, id, &mut rng).total_flight_ms() as u64);
        }
        let expected: std::collections::BTreeSet<u64> =
            [1400, 1500, 1600, 1700, 1800, 1900, 2000].into_iter().collect();
        assert_eq!(durations, expected);
    }

    #[test]
    fn energy_consistency_and_constant_horizontal_velocity() {
        let config = TrajectoryConfig::default();
        let mut rng = trial_rng(5, 42);
        let t = sample_trajectory(&config, 42, &mut rng);
        let fi_s = 1.0 / config.frame_rate_hz;
        for pair in t.frames.windows(2) {
            let dv = pair[1].velocity.y - pair[0].velocity.y;
            assert!((dv + config.gravity * fi_s).abs() < 1e-9);
            assert!((pair[1].velocity.x - pair[0].velocity.x).abs() < 1e-12);
            assert!((pair[1].velocity.z - pair[0].velocity.z).abs() < 1e-12);
            assert!((pair[1].time_ms - pair[0].time_ms - config.frame_interval_ms()).abs() < 1e-9);
        }
    }

    #[test]
    fn resolve_from_interior_frame_reproduces_velocity() {
        let config = TrajectoryConfig::default();
        let mut rng = trial_rng(9, 3);
        let t = sample_trajectory(&config, 3, &mut rng);
        let total_s = t.frames.last().unwrap().time_ms / 1000.0;
        let g = config.gravity_vector();
        for k in [0, 10, 50, t.frames.len() - 2] {
            let f = &t.frames[k];
            let remaining = total_s - f.time_ms / 1000.0;
            let v = solve_ballistic(f.position, t.arrival_point, remaining, g).unwrap();
            assert!((v - f.velocity).norm() < 1e-9, "frame {k}");
        }
    }

    #[test]
    fn deterministic_replay() {
        let config = TrajectoryConfig::default();
        for id in [0u64, 17, 999] {
            let a = sample_trajectory(&config, id, &mut trial_rng(123, id));
            let b = sample_trajectory(&config, id, &mut trial_rng(123, id));
            assert_eq!(a.frames, b.frames);
            assert_eq!(a.launch_point, b.launch_point);
        }
    }

    #[test]
    fn visibility_forms_three_runs() {
        let config = TrajectoryConfig::default();
        let mut rng = trial_rng(2, 8);
        let t = sample_trajectory(&config, 8, &mut rng);
        let mut runs = 1;
        for pair in t.frames.windows(2) {
            if pair[0].visible != pair[1].visible {
                runs += 1;
            }
        }
        assert_eq!(runs, 3);
        assert!(t.frames.first().unwrap().visible);
        assert!(t.frames.last().unwrap().visible);
    }

    #[test]
    fn config_validation() {
        assert!(TrajectoryConfig::default().validate().is_ok());
        let mut bad = TrajectoryConfig::default();
        bad.pre_blank_options_ms = vec![4.0];
        assert!(bad.validate().is_err());
    }
}
