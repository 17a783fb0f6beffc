use crate::manifest::{
    file_sha256, read_json, write_json, FeaturizeManifest, FileEntry, SimulateManifest,
    TrainManifest,
};
use crate::{
    AblateArgs, EvaluateArgs, FeaturizeArgs, PipelineArgs, ReportArgs, SimulateArgs, TrainArgs,
};
use anyhow::{anyhow, bail, Context};
use blankcatch_core::agent::{AgentParams, Trial};
use blankcatch_core::analysis::{
    ablation_matrix, behavior_stats, mean_band_curves, mse_by_distance_linear,
    mse_by_distance_lstm, mse_by_distance_mean, rmse_components, ErrorCurve,
};
use blankcatch_core::ballistics::{frames_for, TrajectoryConfig};
use blankcatch_core::baselines::{fit_linear, fit_mean, LinearPredictor, MeanPredictor};
use blankcatch_core::ensemble::{train_model, ModelSpec, TrainedModel};
use blankcatch_core::features::{window_dataset, FeaturizedTrial, Normalizer, Partition};
use blankcatch_core::geometry::HeadPose;
use blankcatch_core::io as core_io;
use blankcatch_core::pipeline::{featurize as featurize_trials, generate_trials};
use std::path::Path;

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let config = TrajectoryConfig { rng_seed: args.seed, ..TrajectoryConfig::default() };
    let agent = if args.noiseless {
        AgentParams {
            pursuit_gain_target: 1.0,
            gaze_lag_ms: 0.0,
            gaze_noise_sd_deg: 0.0,
            reach_noise_sd_m: 0.0,
            rng_seed: args.seed,
            ..AgentParams::default()
        }
    } else {
        AgentParams { rng_seed: args.seed, ..AgentParams::default() }
    };

    let trials = generate_trials(&config, &agent, args.subjects, args.trials_per_subject)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut files = Vec::new();
    for subject in 0..args.subjects {
        let subject_trials: Vec<Trial> =
            trials.iter().filter(|t| t.subject_id == subject).cloned().collect();
        let name = format!("subject_{subject:02}.csv");
        let path = args.out.join(&name);
        core_io::write_trials_csv(&path, &subject_trials)?;
        files.push(FileEntry { name, sha256: file_sha256(&path)? });
    }

    write_json(
        &args.out.join("manifest.json"),
        &SimulateManifest {
            format_version: 1,
            seed: args.seed,
            subjects: args.subjects,
            trials_per_subject: args.trials_per_subject,
            noiseless: args.noiseless,
            trajectory_config: config,
            agent_params: agent,
            files,
        },
    )?;
    println!("simulate: wrote {} trials to {}", trials.len(), args.out.display());
    Ok(())
}

pub fn read_trials_dir(dir: &Path) -> anyhow::Result<Vec<Trial>> {
    let manifest: SimulateManifest = read_json(&dir.join("manifest.json"))
        .with_context(|| format!("no trial manifest in {}", dir.display()))?;
    let mut trials = Vec::new();
    for entry in &manifest.files {
        trials.extend(core_io::read_trials_csv(&dir.join(&entry.name))?);
    }
    trials.sort_by_key(|t| t.trajectory.trial_id);
    Ok(trials)
}

fn trials_source_hash(dir: &Path) -> anyhow::Result<String> {
    let manifest: SimulateManifest = read_json(&dir.join("manifest.json"))?;
    let joined: Vec<String> = manifest.files.iter().map(|f| f.sha256.clone()).collect();
    Ok(joined.join(""))
}

pub fn featurize(args: &FeaturizeArgs) -> anyhow::Result<()> {
    let trials = read_trials_dir(&args.trials)?;
    let manifest: SimulateManifest = read_json(&args.trials.join("manifest.json"))?;
    let dataset = featurize_trials(
        &trials,
        manifest.trajectory_config.ball_radius,
        &HeadPose::default(),
        args.seed,
    )?;

    core_io::write_features_csv(
        &args.out.join("features.csv"),
        &dataset.trials,
        &dataset.normalizer,
    )?;
    core_io::write_normalizer(&args.out.join("normalizer.txt"), &dataset.normalizer)?;
    if !dataset.normalizer.floored_features.is_empty() {
        eprintln!(
            "warning: constant feature columns floored during normalization: {:?}",
            dataset.normalizer.floored_features
        );
    }

    let count = |p: Partition| dataset.trials.iter().filter(|t| t.partition == p).count();
    write_json(
        &args.out.join("manifest.json"),
        &FeaturizeManifest {
            format_version: 1,
            split_seed: args.seed,
            source_hash: trials_source_hash(&args.trials)?,
            n_trials: dataset.trials.len(),
            n_train: count(Partition::Train),
            n_validation: count(Partition::Validation),
            n_test: count(Partition::Test),
            floored_features: dataset.normalizer.floored_features.clone(),
        },
    )?;
    println!(
        "featurize: {} trials -> {}",
        dataset.trials.len(),
        args.out.join("features.csv").display()
    );
    Ok(())
}

pub struct FeatureStore {
    pub trials: Vec<FeaturizedTrial>,
    pub normalizer: Normalizer,
    pub dataset_hash: String,
}

pub fn read_features_dir(dir: &Path) -> anyhow::Result<FeatureStore> {
    let features_path = dir.join("features.csv");
    if !features_path.exists() {
        bail!("missing feature table {}; run `blankcatch featurize` first", features_path.display());
    }
    let trials = core_io::read_features_csv(&features_path)?;
    let normalizer = core_io::read_normalizer(&dir.join("normalizer.txt"))?;
    let dataset_hash = file_sha256(&features_path)?;
    Ok(FeatureStore { trials, normalizer, dataset_hash })
}

pub fn parse_horizons(text: &str) -> anyhow::Result<Vec<usize>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once('-') {
        let lo: usize = lo.trim().parse().context("horizon range start")?;
        let hi: usize = hi.trim().parse().context("horizon range end")?;
        if lo == 0 || hi < lo {
            bail!("bad horizon range `{text}`");
        }
        return Ok((lo..=hi).collect());
    }
    let mut out = Vec::new();
    for part in text.split(',') {
        out.push(part.trim().parse::<usize>().with_context(|| format!("horizon `{part}`"))?);
    }
    Ok(out)
}

pub const DESK_HORIZONS: [usize; 3] = [1, 19, 37];

/// Training profile: the standard configuration follows the reference
/// hyperparameters; desk mode covers three horizons with smaller batches, a
/// decaying learning rate, and validation-selected restarts so a full
/// pipeline converges in about a minute.
pub fn build_spec(
    integration_ms: f64,
    horizons: Option<&[usize]>,
    desk_mode: bool,
    epochs_cap: Option<usize>,
    seed: u64,
) -> ModelSpec {
    let mut spec = ModelSpec::standard(integration_ms, seed);
    if desk_mode {
        spec.horizons = DESK_HORIZONS.to_vec();
        spec.max_epochs = 6000;
        spec.batch_size = 16;
        spec.learning_rate = 6e-3;
        spec.lr_halflife_epochs = Some(1500);
        spec.patience = 1500;
        spec.restarts = 3;
    }
    if let Some(h) = horizons {
        spec.horizons = h.to_vec();
    }
    if let Some(cap) = epochs_cap {
        spec.max_epochs = cap;
    }
    spec
}

fn model_seed(base: u64, integration_ms: f64) -> u64 {
    base ^ ((integration_ms * 1000.0).round() as u64) << 20
}

pub fn train_one_integration(
    store: &FeatureStore,
    spec: &ModelSpec,
    ridge_lambda: f64,
    out: &Path,
) -> anyhow::Result<(TrainedModel, Vec<LinearPredictor>)> {
    let model = train_model(spec, &store.trials, &store.normalizer)?;
    let dir = out.join(format!("model_i{}", spec.integration_ms));
    core_io::save_model(&dir, &model, &store.dataset_hash)?;

    let train_trials: Vec<FeaturizedTrial> =
        store.trials.iter().filter(|t| t.partition == Partition::Train).cloned().collect();
    let linear_dir = out.join(format!("linear_i{}", spec.integration_ms));
    let mut linears = Vec::new();
    for &dt in &spec.horizons {
        let windows = window_dataset(&train_trials, spec.integration_ms, dt)?;
        let predictor = fit_linear(&windows, ridge_lambda)?;
        core_io::write_linear_predictor(
            &linear_dir.join(format!("linear_dt{dt:02}.txt")),
            &predictor,
        )?;
        linears.push(predictor);
    }
    Ok((model, linears))
}

pub fn fit_mean_baseline(
    store: &FeatureStore,
    horizons: &[usize],
) -> anyhow::Result<MeanPredictor> {
    let train_trials: Vec<FeaturizedTrial> =
        store.trials.iter().filter(|t| t.partition == Partition::Train).cloned().collect();
    let mut targets = Vec::new();
    for &dt in horizons {
        // targets are independent of the integration duration
        let windows = window_dataset(&train_trials, 27.0, dt)?;
        targets.push((dt, windows.into_iter().map(|w| w.target).collect()));
    }
    Ok(fit_mean(&targets)?)
}

pub fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let store = read_features_dir(&args.features)?;
    let horizons = args.horizons.as_deref().map(parse_horizons).transpose()?;

    let mut specs = Vec::new();
    for &integration in &args.integration_ms {
        let spec = build_spec(
            integration,
            horizons.as_deref(),
            args.desk_mode,
            args.epochs_cap,
            model_seed(args.seed, integration),
        );
        spec.validate()?;
        train_one_integration(&store, &spec, args.ridge_lambda, &args.out)?;
        println!("train: model_i{} done ({} subnetworks)", integration, spec.horizons.len());
        specs.push(spec);
    }

    let mean = fit_mean_baseline(&store, &specs[0].horizons)?;
    core_io::write_mean_predictor(&args.out.join("mean_predictor.csv"), &mean)?;

    write_json(
        &args.out.join("manifest.json"),
        &TrainManifest {
            format_version: 1,
            seed: args.seed,
            dataset_hash: store.dataset_hash.clone(),
            ridge_lambda: args.ridge_lambda,
            specs,
        },
    )?;
    Ok(())
}

fn load_models(dir: &Path) -> anyhow::Result<Vec<TrainedModel>> {
    let manifest: TrainManifest = read_json(&dir.join("manifest.json")).with_context(|| {
        format!("missing model manifest in {}; run `blankcatch train` first", dir.display())
    })?;
    let mut models = Vec::new();
    for spec in &manifest.specs {
        let model_dir = dir.join(format!("model_i{}", spec.integration_ms));
        if !model_dir.exists() {
            bail!("missing trained model directory {}", model_dir.display());
        }
        models.push(core_io::load_model(&model_dir)?);
    }
    Ok(models)
}

fn load_linears(dir: &Path, spec: &ModelSpec) -> anyhow::Result<Vec<LinearPredictor>> {
    let linear_dir = dir.join(format!("linear_i{}", spec.integration_ms));
    let mut out = Vec::new();
    for &dt in &spec.horizons {
        let path = linear_dir.join(format!("linear_dt{dt:02}.txt"));
        if !path.exists() {
            bail!("missing linear baseline {}", path.display());
        }
        out.push(core_io::read_linear_predictor(&path)?);
    }
    Ok(out)
}

fn test_partition(store: &FeatureStore) -> anyhow::Result<Vec<FeaturizedTrial>> {
    let test: Vec<FeaturizedTrial> =
        store.trials.iter().filter(|t| t.partition == Partition::Test).cloned().collect();
    if test.is_empty() {
        bail!("test partition is empty; nothing to evaluate");
    }
    Ok(test)
}

pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let store = read_features_dir(&args.features)?;
    let test = test_partition(&store)?;
    let models = load_models(&args.models)?;
    let mean_path = args.models.join("mean_predictor.csv");
    if !mean_path.exists() {
        bail!("missing mean baseline {}", mean_path.display());
    }
    let mean = core_io::read_mean_predictor(&mean_path)?;

    let mut fig4: Vec<ErrorCurve> = Vec::new();
    let mut fig5: Vec<ErrorCurve> = Vec::new();
    for model in &models {
        fig4.push(mse_by_distance_lstm(model, &test)?);
        let linears = load_linears(&args.models, &model.spec)?;
        let mut linear_curve = mse_by_distance_linear(&linears, &test)?;
        linear_curve.label = format!("linear_i{}", model.spec.integration_ms);
        fig4.push(linear_curve);
        fig5.extend(rmse_components(model, &test)?);
    }
    let first = &models[0];
    fig4.push(mse_by_distance_mean(&mean, first.spec.integration_ms, &test)?);
    let fi = test[0].frame_interval_ms;
    fig5.extend(mean_band_curves(&mean, &first.normalizer, fi));

    core_io::write_curves_csv(&args.out.join("fig4_mse_by_distance.csv"), &fig4)?;
    core_io::write_curves_csv(&args.out.join("fig5_rmse_components.csv"), &fig5)?;
    println!("evaluate: curves written to {}", args.out.display());
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> anyhow::Result<()> {
    let store = read_features_dir(&args.features)?;
    let test = test_partition(&store)?;
    let models = load_models(&args.models)?;
    let fi = test[0].frame_interval_ms;

    for model in &models {
        // nearest trained horizon for each requested distance
        let mut frames: Vec<usize> = Vec::new();
        for &ms in &args.horizons_ms {
            let want = frames_for(ms, 1000.0 / fi).max(1);
            let nearest = *model
                .spec
                .horizons
                .iter()
                .min_by_key(|h| h.abs_diff(want))
                .ok_or_else(|| anyhow!("model has no horizons"))?;
            if !frames.contains(&nearest) {
                frames.push(nearest);
            }
        }
        let matrices = ablation_matrix(model, &test, &frames)?;
        for m in &matrices {
            let name = format!("ablation_i{}_dt{}.csv", m.integration_ms, m.horizon_ms.round());
            core_io::write_ablation_csv(&args.out.join(name), m)?;
        }
    }
    println!("ablate: matrices written to {}", args.out.display());
    Ok(())
}

pub fn report(args: &ReportArgs) -> anyhow::Result<()> {
    evaluate(&EvaluateArgs {
        models: args.models.clone(),
        features: args.features.clone(),
        out: args.out.clone(),
    })?;
    ablate(&AblateArgs {
        models: args.models.clone(),
        features: args.features.clone(),
        out: args.out.clone(),
        horizons_ms: args.horizons_ms.clone(),
    })?;

    let trials = read_trials_dir(&args.trials)?;
    let stats = behavior_stats(&trials, &HeadPose::default())?;
    write_json(&args.out.join("behavior.json"), &stats)?;
    println!(
        "report: catch rate {:.3}, displacement ratio {:.3}, pursuit gain {:.3}, \
         reappearance speed {:.1} deg/s",
        stats.catch_rate,
        stats.displacement_ratio_mean,
        stats.pursuit_gain_mean,
        stats.reappearance_speed_mean_dps
    );
    Ok(())
}

pub fn pipeline(args: &PipelineArgs) -> anyhow::Result<()> {
    let trials_dir = args.out.join("trials");
    let features_dir = args.out.join("features");
    let models_dir = args.out.join("models");
    let report_dir = args.out.join("report");

    simulate(&SimulateArgs {
        out: trials_dir.clone(),
        seed: args.seed,
        subjects: args.subjects,
        trials_per_subject: args.trials_per_subject,
        noiseless: false,
    })?;
    featurize(&FeaturizeArgs {
        trials: trials_dir.clone(),
        out: features_dir.clone(),
        seed: args.seed,
    })?;
    train(&TrainArgs {
        features: features_dir.clone(),
        out: models_dir.clone(),
        seed: args.seed,
        integration_ms: args.integration_ms.clone(),
        horizons: None,
        desk_mode: args.desk_mode,
        epochs_cap: args.epochs_cap,
        ridge_lambda: args.ridge_lambda,
    })?;
    report(&ReportArgs {
        trials: trials_dir,
        models: models_dir,
        features: features_dir,
        out: report_dir,
        horizons_ms: vec![13.0, 267.0, 467.0],
    })?;
    println!("pipeline: complete under {}", args.out.display());
    Ok(())
}
