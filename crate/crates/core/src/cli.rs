//! Command-line front end.
//!
//! Settings resolve in three layers: built-in defaults, then an optional TOML
//! file (`--config`) with top-level `seed` and `[generation]` / `[run]`
//! tables, then individual flags. The resolved settings are written next to
//! every output as `config.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::association::nna;
use crate::checkpoint::Checkpoint;
use crate::error::Error;
use crate::eval::{cmc_map, pseudo_label_ami, MetricSet};
use crate::pipeline::{ablation_sweep, run_with_model, sweep_csv, Mode, RunConfig, SweepAxis};
use crate::scenario::{generate_scenario, load_scenario, save_scenario, GenerationParams, Scenario};
use crate::visual::descriptor_matrix;

/// Declares a flag group whose fields override the same-named fields of a
/// settings struct when given.
macro_rules! overrides {
    ($name:ident => $target:ty { $($(#[$doc:meta])* $field:ident: $ty:ty,)* }) => {
        #[derive(Debug, Clone, Default, Args)]
        pub struct $name {
            $(
                $(#[$doc])*
                #[arg(long)]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            pub fn apply(&self, target: &mut $target) {
                $(
                    if let Some(v) = &self.$field {
                        target.$field = v.clone();
                    }
                )*
            }
        }
    };
}

overrides!(GenerationFlags => GenerationParams {
    n_cameras: usize,
    n_identities: usize,
    arena_size_m: f64,
    min_camera_spacing_m: f64,
    view_radius_m: f64,
    visits_per_identity: usize,
    walking_speed_mps: f64,
    max_dwell_s: f64,
    start_window_s: f64,
    sample_period_s: f64,
    sigma_pos_m: f64,
    descriptor_dim: usize,
    sigma_app: f64,
    camera_bias: f64,
    nuisance_dim: usize,
    corrupt_prob: f64,
    corrupt_alpha: f64,
    sigma_corrupt: f64,
    split_prob: f64,
    phone_fraction: f64,
});

overrides!(RunFlags => RunConfig {
    lambda: f64,
    sensing_radius_m: f64,
    trajectory_fraction: f64,
    epochs_stage1: usize,
    epochs_stage2: usize,
    relabel_period: usize,
    mmgn_epochs: usize,
    heads: usize,
    bins: usize,
    mmgn_hidden_dim: usize,
    edge_hidden_dim: usize,
    visual_hidden_dim: usize,
    visual_feature_dim: usize,
    logit_scale: f64,
    lr_stage1: f64,
    lr_stage2: f64,
    lr_mmgn: f64,
    momentum: f64,
    weight_decay: f64,
    margin: f64,
    batch_size: usize,
    identities_per_batch: usize,
    samples_per_identity: usize,
    mmgn_triplet: bool,
});

#[derive(Debug, Parser)]
#[command(name = "wireless-reid", version, about = "Camera and wireless trajectory re-identification on synthetic worlds")]
pub struct Cli {
    /// Seed for scenario generation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario document.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Drop the evaluation-only identities from the written document.
        #[arg(long)]
        strip_ground_truth: bool,
    },
    /// Run the multimodal training loop.
    Run(RunArgs),
    /// Run the visual-only baseline.
    Baseline(RunArgs),
    /// Repeat the multimodal run over values of one setting.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        /// Worker threads; output order does not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score a feature dump against a scenario's ground truth.
    Eval {
        #[arg(long)]
        scenario: PathBuf,
        /// CSV with a `video_id` column followed by feature columns.
        #[arg(long)]
        features: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML file with `seed`, `[generation]` and `[run]` entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub generation: GenerationFlags,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Scenario document; generated from the generation settings when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub generation: GenerationParams,
    pub run: RunConfig,
}

/// Fully resolved settings as persisted next to outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub seed: u64,
    pub generation: GenerationParams,
    pub run: RunConfig,
}

pub fn read_config_file(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).with_context(|| format!("{}: invalid config", path.display()))
}

pub fn resolve(
    seed: Option<u64>,
    common: &Common,
    run: Option<&RunFlags>,
) -> anyhow::Result<Resolved> {
    let file = match &common.config {
        Some(path) => read_config_file(path)?,
        None => ConfigFile::default(),
    };
    let seed = seed.or(file.seed).unwrap_or(file.run.seed);
    let mut generation = file.generation;
    common.generation.apply(&mut generation);
    let mut config = file.run;
    if let Some(flags) = run {
        flags.apply(&mut config);
    }
    config.seed = seed;
    generation.validate()?;
    config.validate()?;
    Ok(Resolved {
        seed,
        generation,
        run: config,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn prepare_out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn persist(dir: &Path, resolved: &Resolved) -> anyhow::Result<()> {
    let text = toml::to_string(resolved).context("serializing resolved config")?;
    write(&dir.join("config.toml"), text)
}

/// Loads the given scenario or generates one; the resolved generation
/// settings are replaced by the loaded document's.
fn obtain_scenario(args: &RunArgs, resolved: &mut Resolved, out_dir: &Path) -> anyhow::Result<Scenario> {
    match &args.scenario {
        Some(path) => {
            let scenario = load_scenario(path)?;
            resolved.generation = scenario.params.clone();
            Ok(scenario)
        }
        None => {
            let scenario = generate_scenario(&resolved.generation, resolved.seed)?;
            save_scenario(&scenario, out_dir.join("scenario.json"))?;
            Ok(scenario)
        }
    }
}

/// Writes one row per video: its id followed by its feature values.
pub fn write_features(path: &Path, features: &Array2<f64>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["video_id".to_string()];
    header.extend((0..features.ncols()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, row) in features.rows().into_iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().context("flushing feature dump")?;
    write(path, bytes)
}

pub fn read_features(path: &Path) -> anyhow::Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let width = r.headers()?.len();
    if width < 2 {
        bail!("{}: expected `video_id` and at least one feature column", path.display());
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let id: usize = record[0]
            .parse()
            .with_context(|| format!("{}: row {}: bad video id", path.display(), i + 1))?;
        if id != i {
            bail!("{}: row {} has video id {id}; ids must be dense and ordered", path.display(), i + 1);
        }
        for cell in record.iter().skip(1) {
            let v: f64 = cell
                .parse()
                .with_context(|| format!("{}: row {}: bad value `{cell}`", path.display(), i + 1))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, width - 1), values)?)
}

fn cmd_generate(cli: &Cli, common: &Common, strip: bool) -> anyhow::Result<()> {
    let resolved = resolve(cli.seed, common, None)?;
    prepare_out_dir(&cli.out_dir)?;
    let mut scenario = generate_scenario(&resolved.generation, resolved.seed)?;
    if strip {
        scenario.strip_ground_truth();
    }
    let path = cli.out_dir.join("scenario.json");
    save_scenario(&scenario, &path)?;
    persist(&cli.out_dir, &resolved)?;
    println!(
        "wrote {} ({} videos, {} trajectories)",
        path.display(),
        scenario.n_videos(),
        scenario.trajectories.len()
    );
    Ok(())
}

fn cmd_run(cli: &Cli, args: &RunArgs, mode: Mode) -> anyhow::Result<()> {
    let mut resolved = resolve(cli.seed, &args.common, Some(&args.run))?;
    prepare_out_dir(&cli.out_dir)?;
    let scenario = obtain_scenario(args, &mut resolved, &cli.out_dir)?;
    persist(&cli.out_dir, &resolved)?;

    let (report, model) = run_with_model(&scenario, &resolved.run, mode)?;
    write(&cli.out_dir.join("report.json"), report.to_json()?)?;
    write(&cli.out_dir.join("metrics.csv"), report.to_csv()?)?;
    let features = model.extract_features(&descriptor_matrix(&scenario.videos)?)?;
    write_features(&cli.out_dir.join("features.csv"), &features)?;
    Checkpoint::from_visual(&model).save(cli.out_dir.join("visual_model.json"))?;

    for n in &report.notices {
        eprintln!("notice: {n}");
    }
    match report.final_metrics().and_then(|m| m.map) {
        Some(map) => println!("final mAP {map:.4}; outputs in {}", cli.out_dir.display()),
        None => println!("outputs in {}", cli.out_dir.display()),
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, args: &RunArgs, axis: SweepAxis, values: &[f64], jobs: usize) -> anyhow::Result<()> {
    let mut resolved = resolve(cli.seed, &args.common, Some(&args.run))?;
    prepare_out_dir(&cli.out_dir)?;
    let scenario = obtain_scenario(args, &mut resolved, &cli.out_dir)?;
    persist(&cli.out_dir, &resolved)?;
    let rows = ablation_sweep(&scenario, &resolved.run, axis, values, jobs)?;
    let path = cli.out_dir.join("sweep.csv");
    write(&path, sweep_csv(axis, &rows)?)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn cmd_eval(cli: &Cli, scenario: &Path, features: &Path) -> anyhow::Result<()> {
    let scenario = load_scenario(scenario)?;
    let Some(ids) = scenario.video_identities() else {
        bail!("scenario carries no ground-truth identities");
    };
    let x = read_features(features)?;
    if x.nrows() != scenario.n_videos() {
        bail!(
            "{}: {} feature rows for {} videos",
            features.display(),
            x.nrows(),
            scenario.n_videos()
        );
    }
    let camera_ids = scenario.camera_ids();
    let retrieval = cmc_map(x.view(), &camera_ids, &ids)?;
    let labels = nna(x.view(), &camera_ids)?;
    let metrics = MetricSet {
        map: retrieval.map,
        cmc: retrieval.cmc,
        ami: pseudo_label_ami(&labels, &ids)?,
        coverage: Some(labels.coverage()),
    };
    prepare_out_dir(&cli.out_dir)?;
    write(&cli.out_dir.join("eval.json"), serde_json::to_string_pretty(&metrics)?)?;
    println!(
        "mAP {:.4} r1 {:.4} r5 {:.4} r10 {:.4} ({} queries, {} skipped)",
        metrics.map,
        metrics.cmc[0],
        metrics.cmc[1],
        metrics.cmc[2],
        retrieval.valid_queries,
        retrieval.skipped_queries
    );
    Ok(())
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Generate {
            common,
            strip_ground_truth,
        } => cmd_generate(cli, common, *strip_ground_truth),
        Command::Run(args) => cmd_run(cli, args, Mode::Umtf),
        Command::Baseline(args) => cmd_run(cli, args, Mode::Baseline),
        Command::Sweep {
            run,
            axis,
            values,
            jobs,
        } => cmd_sweep(cli, run, *axis, values, *jobs),
        Command::Eval { scenario, features } => cmd_eval(cli, scenario, features),
    }
}

/// Exit status for a failed command: 2 for rejected settings, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let bad_setting = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<Error>(), Some(Error::InvalidParam { .. })));
    if bad_setting {
        2
    } else {
        1
    }
}

/// One-line rendering of an error and its causes.
pub fn diagnostic(err: &anyhow::Error) -> String {
    let mut line = String::new();
    for part in err.chain().map(|e| e.to_string().replace('\n', " ")) {
        if line.contains(&part) {
            continue;
        }
        if !line.is_empty() {
            line.push_str(": ");
        }
        line.push_str(&part);
    }
    line
}
