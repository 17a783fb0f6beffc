//! Text-first persistence: delimited trial and feature tables, key-value
//! normalizer files, versioned parameter files, training histories, error
//! curves, and ablation grids. Floats are written in Rust's shortest
//! round-trip form, so identical data produces identical bytes.

use crate::agent::{EulerDeg, MotorState, Trial};
use crate::analysis::{AblationMatrix, ErrorCurve};
use crate::ballistics::{Trajectory, TrajectoryFrame};
use crate::baselines::{LinearPredictor, MeanPredictor};
use crate::ensemble::{ModelSpec, TrainedModel, TrainedSubnetwork, TrainingHistory};
use crate::error::{Error, Result};
use crate::features::{
    FeatureFrame, FeaturizedTrial, Normalizer, Partition, FEATURE_DIM, FEATURE_LABELS, MOTOR_DIM,
};
use crate::geometry::Vec3;
use crate::nn::{LstmParams, Mat, NetShape};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

// ---------------------------------------------------------------------------
// trial tables
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TrialRow {
    trial_id: u64,
    frame_idx: usize,
    time_ms: f64,
    visible: bool,
    ball_x: f64,
    ball_y: f64,
    ball_z: f64,
    ball_vx: f64,
    ball_vy: f64,
    ball_vz: f64,
    pre_blank_ms: f64,
    post_blank_ms: f64,
    gaze_az: f64,
    gaze_el: f64,
    paddle_x: f64,
    paddle_y: f64,
    paddle_z: f64,
    paddle_roll: f64,
    paddle_pitch: f64,
    paddle_yaw: f64,
    subject_id: u32,
    caught: bool,
}

pub fn write_trials_csv(path: &Path, trials: &[Trial]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::csv(format!("opening {}", path.display()), e))?;
    for t in trials {
        for (k, (frame, motor)) in t.trajectory.frames.iter().zip(&t.motor).enumerate() {
            w.serialize(TrialRow {
                trial_id: t.trajectory.trial_id,
                frame_idx: k,
                time_ms: frame.time_ms,
                visible: frame.visible,
                ball_x: frame.position.x,
                ball_y: frame.position.y,
                ball_z: frame.position.z,
                ball_vx: frame.velocity.x,
                ball_vy: frame.velocity.y,
                ball_vz: frame.velocity.z,
                pre_blank_ms: t.trajectory.pre_blank_ms,
                post_blank_ms: t.trajectory.post_blank_ms,
                gaze_az: motor.gaze_azimuth_deg,
                gaze_el: motor.gaze_elevation_deg,
                paddle_x: motor.paddle_position.x,
                paddle_y: motor.paddle_position.y,
                paddle_z: motor.paddle_position.z,
                paddle_roll: motor.paddle_rotation.roll,
                paddle_pitch: motor.paddle_rotation.pitch,
                paddle_yaw: motor.paddle_rotation.yaw,
                subject_id: t.subject_id,
                caught: t.caught,
            })
            .map_err(|e| Error::csv(format!("writing {}", path.display()), e))?;
        }
    }
    w.flush().map_err(|e| Error::io(format!("flushing {}", path.display()), e))?;
    Ok(())
}

/// Rebuild trials from the delimited table. The launch point is recovered by
/// extrapolating the first frame back to t = 0 with the gravity implied by
/// the velocity series; the arrival point is the final frame.
pub fn read_trials_csv(path: &Path) -> Result<Vec<Trial>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::csv(format!("opening {}", path.display()), e))?;
    let mut trials: Vec<Trial> = Vec::new();
    let mut current: Option<(u64, Vec<TrialRow>)> = None;

    let finish = |rows: Vec<TrialRow>, trials: &mut Vec<Trial>| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        trials.push(trial_from_rows(rows)?);
        Ok(())
    };

    for record in r.deserialize() {
        let row: TrialRow =
            record.map_err(|e| Error::csv(format!("reading {}", path.display()), e))?;
        match &mut current {
            Some((id, rows)) if *id == row.trial_id => rows.push(row),
            _ => {
                if let Some((_, rows)) = current.take() {
                    finish(rows, &mut trials)?;
                }
                current = Some((row.trial_id, vec![row]));
            }
        }
    }
    if let Some((_, rows)) = current.take() {
        finish(rows, &mut trials)?;
    }
    Ok(trials)
}

fn trial_from_rows(rows: Vec<TrialRow>) -> Result<Trial> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::MalformedTrial(format!(
            "trial {} has only {n} frames",
            rows[0].trial_id
        )));
    }
    let frames: Vec<TrajectoryFrame> = rows
        .iter()
        .map(|r| TrajectoryFrame {
            time_ms: r.time_ms,
            position: Vec3::new(r.ball_x, r.ball_y, r.ball_z),
            velocity: Vec3::new(r.ball_vx, r.ball_vy, r.ball_vz),
            visible: r.visible,
        })
        .collect();
    let motor: Vec<MotorState> = rows
        .iter()
        .map(|r| MotorState {
            gaze_azimuth_deg: r.gaze_az,
            gaze_elevation_deg: r.gaze_el,
            paddle_position: Vec3::new(r.paddle_x, r.paddle_y, r.paddle_z),
            paddle_rotation: EulerDeg {
                roll: r.paddle_roll,
                pitch: r.paddle_pitch,
                yaw: r.paddle_yaw,
            },
        })
        .collect();

    let dt_s = (frames[1].time_ms - frames[0].time_ms) / 1000.0;
    let gravity = (frames[1].velocity - frames[0].velocity) * (1.0 / dt_s);
    let t0 = frames[0].time_ms / 1000.0;
    let v0 = frames[0].velocity - gravity * t0;
    let launch = frames[0].position - v0 * t0 - gravity * (0.5 * t0 * t0);
    let arrival = frames[n - 1].position;
    let blank_ms = frames.iter().filter(|f| !f.visible).count() as f64 * (dt_s * 1000.0);

    Ok(Trial {
        trajectory: Trajectory {
            trial_id: rows[0].trial_id,
            frames,
            pre_blank_ms: rows[0].pre_blank_ms,
            blank_ms,
            post_blank_ms: rows[0].post_blank_ms,
            launch_point: launch,
            arrival_point: arrival,
        },
        motor,
        subject_id: rows[0].subject_id,
        caught: rows[0].caught,
    })
}

// ---------------------------------------------------------------------------
// feature tables
// ---------------------------------------------------------------------------

pub fn write_features_csv(
    path: &Path,
    trials: &[FeaturizedTrial],
    normalizer: &Normalizer,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::csv(format!("opening {}", path.display()), e))?;

    let mut header: Vec<String> =
        vec!["trial_id".into(), "subject_id".into(), "frame_idx".into(), "time_ms".into(), "visible".into(), "partition".into()];
    header.extend(FEATURE_LABELS.iter().map(|l| format!("f_{l}")));
    header.extend(FEATURE_LABELS[..MOTOR_DIM].iter().map(|l| format!("out_{l}")));
    w.write_record(&header)
        .map_err(|e| Error::csv(format!("writing {}", path.display()), e))?;

    for t in trials {
        for (k, frame) in t.frames.iter().enumerate() {
            let visible = k <= t.blank_onset || k > t.blank_onset + t.blank_frames;
            let mut record: Vec<String> = vec![
                t.trial_id.to_string(),
                t.subject_id.to_string(),
                k.to_string(),
                ((k + 1) as f64 * t.frame_interval_ms).to_string(),
                visible.to_string(),
                t.partition.to_string(),
            ];
            for v in frame.to_array() {
                record.push(v.to_string());
            }
            for v in normalizer.denormalize_motor(frame.motor) {
                record.push(v.to_string());
            }
            w.write_record(&record)
                .map_err(|e| Error::csv(format!("writing {}", path.display()), e))?;
        }
    }
    w.flush().map_err(|e| Error::io(format!("flushing {}", path.display()), e))?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeaturizedTrial>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::csv(format!("opening {}", path.display()), e))?;
    struct Partial {
        trial_id: u64,
        subject_id: u32,
        partition: Partition,
        frames: Vec<FeatureFrame>,
        visibles: Vec<bool>,
        times: Vec<f64>,
    }
    let mut trials: Vec<FeaturizedTrial> = Vec::new();
    let mut current: Option<Partial> = None;

    let finish = |p: Partial, trials: &mut Vec<FeaturizedTrial>| -> Result<()> {
        let blank_onset = p
            .visibles
            .iter()
            .position(|v| !v)
            .ok_or_else(|| Error::MalformedTrial(format!("trial {} has no blank", p.trial_id)))?
            - 1;
        let blank_frames = p.visibles.iter().filter(|v| !**v).count();
        let fi = if p.times.len() > 1 { p.times[1] - p.times[0] } else { 1000.0 / 75.0 };
        trials.push(FeaturizedTrial {
            trial_id: p.trial_id,
            subject_id: p.subject_id,
            partition: p.partition,
            frames: p.frames,
            blank_onset,
            blank_frames,
            frame_interval_ms: fi,
        });
        Ok(())
    };

    for record in r.records() {
        let rec = record.map_err(|e| Error::csv(format!("reading {}", path.display()), e))?;
        let ctx = || format!("features file {}", path.display());
        let trial_id: u64 = rec[0].parse().map_err(|_| Error::parse(ctx(), "trial_id"))?;
        let subject_id: u32 = rec[1].parse().map_err(|_| Error::parse(ctx(), "subject_id"))?;
        let time_ms: f64 = rec[3].parse().map_err(|_| Error::parse(ctx(), "time_ms"))?;
        let visible: bool = rec[4].parse().map_err(|_| Error::parse(ctx(), "visible"))?;
        let partition = Partition::from_str(&rec[5])?;
        let mut values = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            values[i] = rec[6 + i]
                .parse()
                .map_err(|_| Error::parse(ctx(), format!("feature column {i}")))?;
        }
        let frame = FeatureFrame::from_array(values);

        match &mut current {
            Some(p) if p.trial_id == trial_id => {
                p.frames.push(frame);
                p.visibles.push(visible);
                p.times.push(time_ms);
            }
            _ => {
                if let Some(p) = current.take() {
                    finish(p, &mut trials)?;
                }
                current = Some(Partial {
                    trial_id,
                    subject_id,
                    partition,
                    frames: vec![frame],
                    visibles: vec![visible],
                    times: vec![time_ms],
                });
            }
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut trials)?;
    }
    Ok(trials)
}

// ---------------------------------------------------------------------------
// normalizer
// ---------------------------------------------------------------------------

pub fn write_normalizer(path: &Path, n: &Normalizer) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "normalizer v1");
    let _ = writeln!(s, "computed_from {}", n.computed_from);
    let floored: Vec<String> = n.floored_features.iter().map(|i| i.to_string()).collect();
    let _ = writeln!(s, "floored {}", floored.join(","));
    for (i, label) in FEATURE_LABELS.iter().enumerate() {
        let _ = writeln!(s, "{label} {} {}", n.mean[i], n.sd[i]);
    }
    write_string(path, &s)
}

pub fn read_normalizer(path: &Path) -> Result<Normalizer> {
    let text = read_to_string(path)?;
    let ctx = || format!("normalizer file {}", path.display());
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != "normalizer v1" {
        return Err(Error::parse(ctx(), format!("bad magic line `{magic}`")));
    }
    let from_line = lines.next().unwrap_or_default();
    let computed_from = from_line
        .strip_prefix("computed_from ")
        .ok_or_else(|| Error::parse(ctx(), "missing computed_from"))?
        .to_string();
    let floored_line = lines.next().unwrap_or_default();
    let floored_str =
        floored_line.strip_prefix("floored ").ok_or_else(|| Error::parse(ctx(), "missing floored"))?;
    let floored_features: Vec<usize> = if floored_str.is_empty() {
        Vec::new()
    } else {
        floored_str
            .split(',')
            .map(|v| v.parse().map_err(|_| Error::parse(ctx(), "floored index")))
            .collect::<Result<_>>()?
    };
    let mut mean = [0.0; FEATURE_DIM];
    let mut sd = [0.0; FEATURE_DIM];
    for (i, label) in FEATURE_LABELS.iter().enumerate() {
        let line = lines.next().ok_or_else(|| Error::parse(ctx(), "truncated file"))?;
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default();
        if name != *label {
            return Err(Error::parse(ctx(), format!("expected feature `{label}`, found `{name}`")));
        }
        mean[i] = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(ctx(), format!("mean for {label}")))?;
        sd[i] = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(ctx(), format!("sd for {label}")))?;
    }
    Ok(Normalizer { mean, sd, computed_from, floored_features })
}

// ---------------------------------------------------------------------------
// network parameters
// ---------------------------------------------------------------------------

/// Versioned flat text layout: magic line, shape, then one `tensor` header
/// per parameter tensor followed by its row-major values, one row per line.
/// Documented so another implementation can load the same files.
pub fn write_lstm_params(path: &Path, params: &LstmParams) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "lstm-params v1");
    let _ = writeln!(s, "input {}", params.shape.input);
    let _ = writeln!(s, "hidden {}", params.shape.hidden);
    let _ = writeln!(s, "output {}", params.shape.output);
    for ((name, rows, cols), tensor) in params.tensor_shapes().into_iter().zip(params.tensors()) {
        let _ = writeln!(s, "tensor {name} {rows} {cols}");
        for row in tensor.chunks(cols) {
            let joined: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", joined.join(" "));
        }
    }
    write_string(path, &s)
}

pub fn read_lstm_params(path: &Path) -> Result<LstmParams> {
    let text = read_to_string(path)?;
    let ctx = || format!("params file {}", path.display());
    let mut lines = text.lines();
    if lines.next() != Some("lstm-params v1") {
        return Err(Error::parse(ctx(), "bad magic line"));
    }
    let dim = |name: &str, lines: &mut std::str::Lines| -> Result<usize> {
        let line = lines.next().ok_or_else(|| Error::parse(ctx(), "truncated header"))?;
        line.strip_prefix(&format!("{name} "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(ctx(), format!("bad {name} line")))
    };
    let input = dim("input", &mut lines)?;
    let hidden = dim("hidden", &mut lines)?;
    let output = dim("output", &mut lines)?;
    let shape = NetShape::new(input, hidden, output);
    let mut params = LstmParams::zeros(shape);

    let expected = params.tensor_shapes();
    for (idx, (name, rows, cols)) in expected.into_iter().enumerate() {
        let header = lines.next().ok_or_else(|| Error::parse(ctx(), "missing tensor header"))?;
        if header != format!("tensor {name} {rows} {cols}") {
            return Err(Error::parse(ctx(), format!("unexpected tensor header `{header}`")));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| Error::parse(ctx(), "truncated tensor"))?;
            for v in line.split_whitespace() {
                values.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(ctx(), format!("bad value in {name}")))?,
                );
            }
        }
        if values.len() != rows * cols {
            return Err(Error::parse(ctx(), format!("tensor {name} has wrong size")));
        }
        params.tensors_mut()[idx].copy_from_slice(&values);
    }
    Ok(params)
}

// ---------------------------------------------------------------------------
// histories, curves, matrices
// ---------------------------------------------------------------------------

pub fn write_history_csv(path: &Path, history: &TrainingHistory) -> Result<()> {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for (e, (tr, va)) in history.train_loss.iter().zip(&history.val_loss).enumerate() {
        let _ = writeln!(s, "{e},{tr},{va}");
    }
    write_string(path, &s)
}

pub fn read_history_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = read_to_string(path)?;
    let ctx = || format!("history file {}", path.display());
    let mut train = Vec::new();
    let mut val = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let _epoch = parts.next();
        train.push(
            parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(ctx(), "train_loss"))?,
        );
        val.push(
            parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(ctx(), "val_loss"))?,
        );
    }
    Ok((train, val))
}

/// Long-format curve table shared by every predictor: one row per
/// (curve, horizon) point.
pub fn write_curves_csv(path: &Path, curves: &[ErrorCurve]) -> Result<()> {
    let mut s = String::from("label,output_component,horizon_ms,value,dispersion\n");
    for c in curves {
        for i in 0..c.horizon_ms.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.label, c.output_component, c.horizon_ms[i], c.value[i], c.dispersion[i]
            );
        }
    }
    write_string(path, &s)
}

pub fn write_ablation_csv(path: &Path, matrix: &AblationMatrix) -> Result<()> {
    let mut s = String::from("feature");
    for col in &matrix.col_labels {
        let _ = write!(s, ",{col}");
    }
    s.push('\n');
    for (row_label, row) in matrix.row_labels.iter().zip(&matrix.values) {
        let _ = write!(s, "{row_label}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    write_string(path, &s)
}

// ---------------------------------------------------------------------------
// model directories
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct SubnetworkSummary {
    pub horizon_frames: usize,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub dataset_hash: String,
    pub subnetworks: Vec<SubnetworkSummary>,
}

fn subnet_file(dt: usize) -> String {
    format!("subnet_{dt:02}.txt")
}

fn history_file(dt: usize) -> String {
    format!("history_{dt:02}.csv")
}

/// Persist a trained model as a directory: JSON manifest, normalizer, one
/// parameter file and one history file per subnetwork.
pub fn save_model(dir: &Path, model: &TrainedModel, dataset_hash: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let manifest = ModelManifest {
        format_version: 1,
        spec: model.spec.clone(),
        dataset_hash: dataset_hash.to_string(),
        subnetworks: model
            .subnetworks
            .iter()
            .map(|s| SubnetworkSummary {
                horizon_frames: s.horizon_frames,
                best_epoch: s.history.best_epoch,
                stopped_epoch: s.history.stopped_epoch,
                best_val_loss: s.history.val_loss[s.history.best_epoch],
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::parse("manifest", e.to_string()))?;
    write_string(&dir.join("manifest.json"), &(json + "\n"))?;
    write_normalizer(&dir.join("normalizer.txt"), &model.normalizer)?;
    for sub in &model.subnetworks {
        write_lstm_params(&dir.join(subnet_file(sub.horizon_frames)), &sub.params)?;
        write_history_csv(&dir.join(history_file(sub.horizon_frames)), &sub.history)?;
    }
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<TrainedModel> {
    let manifest_path = dir.join("manifest.json");
    let manifest: ModelManifest = serde_json::from_str(&read_to_string(&manifest_path)?)
        .map_err(|e| Error::parse(format!("manifest {}", manifest_path.display()), e.to_string()))?;
    let normalizer = read_normalizer(&dir.join("normalizer.txt"))?;
    let mut subnetworks = Vec::with_capacity(manifest.subnetworks.len());
    for summary in &manifest.subnetworks {
        let dt = summary.horizon_frames;
        let params = read_lstm_params(&dir.join(subnet_file(dt)))?;
        let (train_loss, val_loss) = read_history_csv(&dir.join(history_file(dt)))?;
        subnetworks.push(TrainedSubnetwork {
            horizon_frames: dt,
            params,
            history: TrainingHistory {
                train_loss,
                val_loss,
                best_epoch: summary.best_epoch,
                stopped_epoch: summary.stopped_epoch,
            },
        });
    }
    Ok(TrainedModel { spec: manifest.spec, subnetworks, normalizer })
}

// ---------------------------------------------------------------------------
// baseline predictors
// ---------------------------------------------------------------------------

pub fn write_linear_predictor(path: &Path, p: &LinearPredictor) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "linear-params v1");
    let _ = writeln!(s, "horizon_frames {}", p.horizon_frames);
    let _ = writeln!(s, "integration_ms {}", p.integration_ms);
    let _ = writeln!(s, "ridge_lambda {}", p.ridge_lambda);
    let _ = writeln!(s, "rows {}", p.weights.rows);
    let _ = writeln!(s, "cols {}", p.weights.cols);
    for r in 0..p.weights.rows {
        let joined: Vec<String> = p.weights.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", joined.join(" "));
    }
    write_string(path, &s)
}

pub fn read_linear_predictor(path: &Path) -> Result<LinearPredictor> {
    let text = read_to_string(path)?;
    let ctx = || format!("linear params {}", path.display());
    let mut lines = text.lines();
    if lines.next() != Some("linear-params v1") {
        return Err(Error::parse(ctx(), "bad magic line"));
    }
    let field = |name: &str, lines: &mut std::str::Lines| -> Result<String> {
        let line = lines.next().ok_or_else(|| Error::parse(ctx(), "truncated header"))?;
        line.strip_prefix(&format!("{name} "))
            .map(|v| v.to_string())
            .ok_or_else(|| Error::parse(ctx(), format!("bad {name}")))
    };
    let horizon_frames =
        field("horizon_frames", &mut lines)?.parse().map_err(|_| Error::parse(ctx(), "horizon"))?;
    let integration_ms =
        field("integration_ms", &mut lines)?.parse().map_err(|_| Error::parse(ctx(), "integration"))?;
    let ridge_lambda =
        field("ridge_lambda", &mut lines)?.parse().map_err(|_| Error::parse(ctx(), "lambda"))?;
    let rows: usize = field("rows", &mut lines)?.parse().map_err(|_| Error::parse(ctx(), "rows"))?;
    let cols: usize = field("cols", &mut lines)?.parse().map_err(|_| Error::parse(ctx(), "cols"))?;
    let mut weights = Mat::zeros(rows, cols);
    let mut idx = 0;
    for line in lines {
        for v in line.split_whitespace() {
            if idx >= rows * cols {
                return Err(Error::parse(ctx(), "too many values"));
            }
            weights.data[idx] =
                v.parse().map_err(|_| Error::parse(ctx(), "bad weight value"))?;
            idx += 1;
        }
    }
    if idx != rows * cols {
        return Err(Error::parse(ctx(), "too few values"));
    }
    Ok(LinearPredictor { horizon_frames, integration_ms, ridge_lambda, weights })
}

pub fn write_mean_predictor(path: &Path, p: &MeanPredictor) -> Result<()> {
    let mut header: Vec<String> = vec!["horizon_frames".into()];
    header.extend(FEATURE_LABELS[..MOTOR_DIM].iter().map(|l| format!("mean_{l}")));
    header.extend(FEATURE_LABELS[..MOTOR_DIM].iter().map(|l| format!("sd_{l}")));
    let mut s = header.join(",") + "\n";
    for (idx, dt) in p.horizons.iter().enumerate() {
        let mut row: Vec<String> = vec![dt.to_string()];
        row.extend(p.means[idx].iter().map(|v| v.to_string()));
        row.extend(p.sds[idx].iter().map(|v| v.to_string()));
        let _ = writeln!(s, "{}", row.join(","));
    }
    write_string(path, &s)
}

pub fn read_mean_predictor(path: &Path) -> Result<MeanPredictor> {
    let text = read_to_string(path)?;
    let ctx = || format!("mean predictor {}", path.display());
    let mut pred = MeanPredictor { horizons: Vec::new(), means: Vec::new(), sds: Vec::new() };
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 1 + 2 * MOTOR_DIM {
            return Err(Error::parse(ctx(), "wrong column count"));
        }
        pred.horizons
            .push(parts[0].parse().map_err(|_| Error::parse(ctx(), "horizon"))?);
        let mut mean = [0.0; MOTOR_DIM];
        let mut sd = [0.0; MOTOR_DIM];
        for j in 0..MOTOR_DIM {
            mean[j] = parts[1 + j].parse().map_err(|_| Error::parse(ctx(), "mean"))?;
            sd[j] = parts[1 + MOTOR_DIM + j].parse().map_err(|_| Error::parse(ctx(), "sd"))?;
        }
        pred.means.push(mean);
        pred.sds.push(sd);
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentParams;
    use crate::ballistics::{sample_trajectory, TrajectoryConfig};
    use crate::geometry::HeadPose;
    use crate::trial_rng;

    fn tempdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("blankcatch_io_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn make_trials(n: u64) -> Vec<Trial> {
        let config = TrajectoryConfig::default();
        let params = AgentParams::default();
        (0..n)
            .map(|id| {
                let traj = sample_trajectory(&config, id, &mut trial_rng(51, id));
                let mut trial = crate::agent::simulate_trial(
                    traj,
                    &params,
                    &HeadPose::default(),
                    &mut trial_rng(52, id),
                )
                .unwrap();
                trial.subject_id = (id % 3) as u32;
                trial
            })
            .collect()
    }

    #[test]
    fn trials_roundtrip_bitexact() {
        let dir = tempdir("trials");
        let trials = make_trials(4);
        let path = dir.join("trials.csv");
        write_trials_csv(&path, &trials).unwrap();
        let back = read_trials_csv(&path).unwrap();
        assert_eq!(back.len(), trials.len());
        for (a, b) in trials.iter().zip(&back) {
            assert_eq!(a.trajectory.frames, b.trajectory.frames);
            assert_eq!(a.motor, b.motor);
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.caught, b.caught);
            assert!((a.trajectory.arrival_point - b.trajectory.arrival_point).norm() < 1e-12);
            assert!((a.trajectory.launch_point - b.trajectory.launch_point).norm() < 1e-9);
        }
        // writing the read-back data reproduces the file byte for byte
        let path2 = dir.join("trials2.csv");
        write_trials_csv(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn params_roundtrip_bitexact() {
        let dir = tempdir("params");
        let params = LstmParams::init(NetShape::new(16, 25, 8), 77);
        let path = dir.join("subnet.txt");
        write_lstm_params(&path, &params).unwrap();
        let back = read_lstm_params(&path).unwrap();
        assert_eq!(params, back);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn normalizer_roundtrip() {
        let dir = tempdir("norm");
        let frames: Vec<FeatureFrame> = (0..10)
            .map(|k| {
                let mut v = [0.0; FEATURE_DIM];
                for (i, x) in v.iter_mut().enumerate() {
                    *x = (k * i) as f64 * 0.37 - 1.0;
                }
                FeatureFrame::from_array(v)
            })
            .collect();
        let norm = crate::features::fit_normalizer(&frames, "train").unwrap();
        let path = dir.join("normalizer.txt");
        write_normalizer(&path, &norm).unwrap();
        let back = read_normalizer(&path).unwrap();
        assert_eq!(norm, back);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempdir("magic");
        let path = dir.join("bad.txt");
        fs::write(&path, "something else\n").unwrap();
        assert!(read_lstm_params(&path).is_err());
        assert!(read_normalizer(&path).is_err());
        assert!(read_linear_predictor(&path).is_err());
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn linear_predictor_roundtrip() {
        let dir = tempdir("linear");
        let mut weights = Mat::zeros(33, MOTOR_DIM);
        for (i, v) in weights.data.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        let p = LinearPredictor {
            horizon_frames: 5,
            integration_ms: 27.0,
            ridge_lambda: 1e-6,
            weights,
        };
        let path = dir.join("linear.txt");
        write_linear_predictor(&path, &p).unwrap();
        let back = read_linear_predictor(&path).unwrap();
        assert_eq!(p.weights, back.weights);
        assert_eq!(p.horizon_frames, back.horizon_frames);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn mean_predictor_roundtrip() {
        let dir = tempdir("mean");
        let p = MeanPredictor {
            horizons: vec![1, 19, 37],
            means: vec![[0.5; MOTOR_DIM]; 3],
            sds: vec![[1.25; MOTOR_DIM]; 3],
        };
        let path = dir.join("mean.csv");
        write_mean_predictor(&path, &p).unwrap();
        let back = read_mean_predictor(&path).unwrap();
        assert_eq!(p.horizons, back.horizons);
        assert_eq!(p.means, back.means);
        assert_eq!(p.sds, back.sds);
        let _ = fs::remove_dir_all(&dir);
    }
}
