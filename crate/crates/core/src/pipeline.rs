//! The alternating training loop, the visual-only baseline and sweeps.
//!
//! Every stochastic stage draws from its own seed derived from the run seed,
//! so disabling the wireless branch leaves the visual branch bit-identical.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::association::{nna, PseudoLabeling};
use crate::error::{Error, Result};
use crate::eval::{ami, cmc_map, pseudo_label_ami};
use crate::graph::{average_affinity, build_histograms, MmgnConfig, MmgnModel, MmgnTrainConfig, VideoGraph};
use crate::mmda::{cluster_count_deviation, run_mmda, MmdaOutput};
use crate::rng::{derive_seed, rng_for};
use crate::scenario::Scenario;
use crate::sensing::{sense, Sensing};
use crate::visual::{
    descriptor_matrix, initial_train, triplet_finetune, InitialTrainConfig, TripletTrainConfig,
    VisualConfig, VisualModel,
};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub lambda: f64,
    pub sensing_radius_m: f64,
    pub trajectory_fraction: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub relabel_period: usize,
    pub mmgn_epochs: usize,
    pub heads: usize,
    pub bins: usize,
    pub mmgn_hidden_dim: usize,
    pub edge_hidden_dim: usize,
    pub visual_hidden_dim: usize,
    pub visual_feature_dim: usize,
    pub logit_scale: f64,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub lr_mmgn: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub identities_per_batch: usize,
    pub samples_per_identity: usize,
    pub mmgn_triplet: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda: 7.0,
            sensing_radius_m: 35.0,
            trajectory_fraction: 1.0,
            epochs_stage1: 80,
            epochs_stage2: 80,
            relabel_period: 5,
            mmgn_epochs: 80,
            heads: 6,
            bins: 32,
            mmgn_hidden_dim: 16,
            edge_hidden_dim: 16,
            visual_hidden_dim: 64,
            visual_feature_dim: 32,
            logit_scale: 10.0,
            lr_stage1: 1e-3,
            lr_stage2: 1e-2,
            lr_mmgn: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            margin: 0.4,
            batch_size: 32,
            identities_per_batch: 8,
            samples_per_identity: 4,
            mmgn_triplet: false,
        }
    }
}

impl RunConfig {
    /// Learning rates and batch shape of the full-scale setting.
    pub fn full_scale_preset() -> Self {
        Self {
            lambda: 3.0,
            sensing_radius_m: 50.0,
            lr_stage1: 3e-4,
            lr_stage2: 6e-5,
            lr_mmgn: 1e-2,
            identities_per_batch: 32,
            samples_per_identity: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("sensing_radius_m", self.sensing_radius_m),
            ("lr_stage1", self.lr_stage1),
            ("lr_stage2", self.lr_stage2),
            ("lr_mmgn", self.lr_mmgn),
            ("logit_scale", self.logit_scale),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(field, format!("must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.trajectory_fraction) {
            return Err(Error::param("trajectory_fraction", "must lie in [0, 1]"));
        }
        if self.relabel_period == 0 || !self.epochs_stage2.is_multiple_of(self.relabel_period) {
            return Err(Error::param(
                "relabel_period",
                "must be > 0 and divide epochs_stage2",
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum", "must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 || self.margin < 0.0 {
            return Err(Error::param("weight_decay", "weight_decay and margin must be >= 0"));
        }
        let counts = [
            ("heads", self.heads),
            ("mmgn_hidden_dim", self.mmgn_hidden_dim),
            ("edge_hidden_dim", self.edge_hidden_dim),
            ("visual_hidden_dim", self.visual_hidden_dim),
            ("visual_feature_dim", self.visual_feature_dim),
            ("batch_size", self.batch_size),
            ("samples_per_identity", self.samples_per_identity),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::param(field, "must be > 0"));
            }
        }
        if self.bins < 2 {
            return Err(Error::param("bins", "must be >= 2"));
        }
        if self.identities_per_batch < 2 {
            return Err(Error::param("identities_per_batch", "must be >= 2"));
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.epochs_stage2 / self.relabel_period
    }

    fn triplet_config(&self) -> TripletTrainConfig {
        TripletTrainConfig {
            epochs: self.relabel_period,
            lr: self.lr_stage2,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            margin: self.margin,
            p: self.identities_per_batch,
            k: self.samples_per_identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Umtf,
    Baseline,
}

/// Metrics after one relabel round. Ground-truth dependent values are `None`
/// when the scenario carries no identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub map: Option<f64>,
    pub r1: Option<f64>,
    pub r5: Option<f64>,
    pub r10: Option<f64>,
    pub ami_visual: Option<f64>,
    pub ami_multimodal: Option<f64>,
    pub coverage_visual: f64,
    pub coverage_multimodal: Option<f64>,
    pub ami_mmda_clusters: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub mode: Mode,
    pub config: RunConfig,
    pub has_ground_truth: bool,
    pub n_videos: usize,
    pub n_trajectories_used: usize,
    pub initial_losses: Vec<f64>,
    pub rounds: Vec<RoundMetrics>,
    pub notices: Vec<String>,
}

pub const METRIC_COLUMNS: [&str; 10] = [
    "round",
    "mAP",
    "r1",
    "r5",
    "r10",
    "ami_visual",
    "ami_multimodal",
    "coverage_visual",
    "coverage_multimodal",
    "ami_mmda_clusters",
];

const GT_FREE_COLUMNS: [&str; 3] = ["round", "coverage_visual", "coverage_multimodal"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunReport {
    pub fn final_metrics(&self) -> Option<&RoundMetrics> {
        self.rounds.last()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Metric time series; ground-truth columns are omitted without ground truth.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.has_ground_truth {
            w.write_record(METRIC_COLUMNS)?;
        } else {
            w.write_record(GT_FREE_COLUMNS)?;
        }
        for r in &self.rounds {
            if self.has_ground_truth {
                w.write_record([
                    r.round.to_string(),
                    cell(r.map),
                    cell(r.r1),
                    cell(r.r5),
                    cell(r.r10),
                    cell(r.ami_visual),
                    cell(r.ami_multimodal),
                    r.coverage_visual.to_string(),
                    cell(r.coverage_multimodal),
                    cell(r.ami_mmda_clusters),
                ])?;
            } else {
                w.write_record([
                    r.round.to_string(),
                    r.coverage_visual.to_string(),
                    cell(r.coverage_multimodal),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Indices of the trajectories kept for a given fraction, sorted.
pub fn select_trajectories(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let keep = ((fraction * n as f64) + 1e-9).floor() as usize;
    if keep >= n {
        return (0..n).collect();
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng_for(seed, "trajectory-subset", 0));
    let mut out = ids[..keep].to_vec();
    out.sort_unstable();
    out
}

/// Size-weighted mean AMI between each trajectory's cluster assignment and
/// the identities of its related videos.
pub fn mmda_cluster_ami(mmda: &MmdaOutput, identities: &[usize]) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut weight = 0usize;
    for cs in &mmda.cluster_sets {
        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for (k, c) in cs.clusters.iter().enumerate() {
            for &v in &c.video_ids {
                pred.push(k);
                truth.push(identities[v]);
            }
        }
        if pred.is_empty() {
            continue;
        }
        total += ami(&pred, &truth)? * pred.len() as f64;
        weight += pred.len();
    }
    Ok((weight > 0).then(|| total / weight as f64))
}

/// Output of the wireless branch in one round.
pub struct MultimodalRound {
    pub mmda: MmdaOutput,
    pub features: Array2<f64>,
    pub labels: PseudoLabeling,
    pub losses: Vec<f64>,
}

/// MMDA, graph construction, graph training on visual pseudo labels and
/// association on the fused features.
pub fn multimodal_round(
    x: ArrayView2<f64>,
    camera_ids: &[usize],
    sensing: &Sensing,
    visual_labels: &PseudoLabeling,
    config: &RunConfig,
    seed: u64,
) -> Result<MultimodalRound> {
    let mmda = run_mmda(x, sensing, config.lambda, derive_seed(seed, "mmda", 0))?;
    let affinity = average_affinity(&mmda.tensor)?;
    let hist = build_histograms(&mmda.tensor, config.bins)?;
    let graph = VideoGraph::new(&hist, &affinity)?;
    let mut model = MmgnModel::new(
        MmgnConfig {
            input_dim: x.ncols(),
            hidden_dim: config.mmgn_hidden_dim,
            heads: config.heads,
            bins: config.bins,
            edge_hidden: config.edge_hidden_dim,
            n_classes: visual_labels.n_classes(),
        },
        derive_seed(seed, "mmgn", 0),
    )?;
    let xo = x.to_owned();
    let summary = model.train(
        &graph,
        &xo,
        &visual_labels.labels,
        &MmgnTrainConfig {
            epochs: config.mmgn_epochs,
            lr: config.lr_mmgn,
            weight_decay: config.weight_decay,
            triplet: config.mmgn_triplet,
            margin: config.margin,
        },
    )?;
    let features = model.extract_features(&graph, &xo)?;
    let labels = nna(features.view(), camera_ids)?;
    Ok(MultimodalRound {
        mmda,
        features,
        labels,
        losses: summary.losses,
    })
}

/// Runs the alternating loop (`Mode::Umtf`) or the visual-only baseline.
pub fn run(scenario: &Scenario, config: &RunConfig, mode: Mode) -> Result<RunReport> {
    run_with_model(scenario, config, mode).map(|(report, _)| report)
}

/// Like [`run`], also returning the final visual model.
pub fn run_with_model(
    scenario: &Scenario,
    config: &RunConfig,
    mode: Mode,
) -> Result<(RunReport, VisualModel)> {
    config.validate()?;
    let seed = config.seed;
    let mut notices = Vec::new();
    let mut notice = |msg: String| {
        log::warn!("{msg}");
        notices.push(msg);
    };

    let x_raw = descriptor_matrix(&scenario.videos)?;
    let camera_ids = scenario.camera_ids();
    let identities = scenario.video_identities();

    let mut model = VisualModel::new(
        VisualConfig {
            input_dim: x_raw.ncols(),
            hidden_dim: config.visual_hidden_dim,
            output_dim: config.visual_feature_dim,
            logit_scale: config.logit_scale,
        },
        derive_seed(seed, "visual-model", 0),
    );
    let initial_losses = initial_train(
        &mut model,
        &scenario.videos,
        &InitialTrainConfig {
            epochs: config.epochs_stage1,
            lr: config.lr_stage1,
            weight_decay: config.weight_decay,
            batch_size: config.batch_size,
        },
        derive_seed(seed, "visual-initial", 0),
    )?;

    let mut n_trajectories_used = 0;
    let sensing = match mode {
        Mode::Baseline => None,
        Mode::Umtf => {
            let keep = select_trajectories(
                scenario.trajectories.len(),
                config.trajectory_fraction,
                derive_seed(seed, "trajectories", 0),
            );
            if keep.is_empty() {
                notice("no wireless trajectories in use; running visual labels only".into());
                None
            } else {
                let sub = scenario.with_trajectory_subset(&keep);
                let s = sense(&sub, config.sensing_radius_m)?;
                if s.total_fragments() == 0 {
                    notice("no wireless fragments sensed; running visual labels only".into());
                    None
                } else {
                    n_trajectories_used = keep.len();
                    Some(s)
                }
            }
        }
    };

    let n_rounds = config.rounds();
    let mut rounds = Vec::with_capacity(n_rounds + 1);
    for round in 0..=n_rounds {
        let x = model.extract_features(&x_raw)?;
        let visual = nna(x.view(), &camera_ids)?;

        let mut multimodal = None;
        if let Some(s) = &sensing {
            if visual.n_classes() < 2 {
                notice(format!(
                    "round {round}: fewer than 2 visual pseudo classes; skipping the graph branch"
                ));
            } else {
                let round_seed = derive_seed(seed, "multimodal-round", round as u64);
                match multimodal_round(x.view(), &camera_ids, s, &visual, config, round_seed) {
                    Ok(mm) => multimodal = Some(mm),
                    Err(e) => notice(format!("round {round}: graph branch skipped: {e}")),
                }
            }
        }

        let mut metrics = RoundMetrics {
            round,
            map: None,
            r1: None,
            r5: None,
            r10: None,
            ami_visual: None,
            ami_multimodal: None,
            coverage_visual: visual.coverage(),
            coverage_multimodal: multimodal.as_ref().map(|m| m.labels.coverage()),
            ami_mmda_clusters: None,
        };
        if let Some(ids) = &identities {
            match cmc_map(x.view(), &camera_ids, ids) {
                Ok(r) => {
                    metrics.map = Some(r.map);
                    metrics.r1 = Some(r.cmc[0]);
                    metrics.r5 = Some(r.cmc[1]);
                    metrics.r10 = Some(r.cmc[2]);
                }
                Err(e) => notice(format!("round {round}: retrieval metrics unavailable: {e}")),
            }
            metrics.ami_visual = pseudo_label_ami(&visual, ids)?;
            if let Some(mm) = &multimodal {
                metrics.ami_multimodal = pseudo_label_ami(&mm.labels, ids)?;
                metrics.ami_mmda_clusters = mmda_cluster_ami(&mm.mmda, ids)?;
            }
        }
        rounds.push(metrics);

        if round == n_rounds {
            break;
        }
        let targets = match &multimodal {
            Some(mm) if mm.labels.n_classes() >= 2 => &mm.labels,
            Some(_) => {
                notice(format!(
                    "round {round}: fewer than 2 multimodal pseudo classes; using visual labels"
                ));
                &visual
            }
            None => &visual,
        };
        if let Err(e) = triplet_finetune(
            &mut model,
            &x_raw,
            &targets.labels,
            &config.triplet_config(),
            derive_seed(seed, "triplet", round as u64),
        ) {
            notice(format!("round {round}: fine-tuning skipped: {e}"));
        }
    }

    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        mode,
        config: config.clone(),
        has_ground_truth: identities.is_some(),
        n_videos: scenario.n_videos(),
        n_trajectories_used,
        initial_losses,
        rounds,
        notices,
    };
    Ok((report, model))
}

pub fn run_umtf(scenario: &Scenario, config: &RunConfig) -> Result<RunReport> {
    run(scenario, config, Mode::Umtf)
}

pub fn run_baseline(scenario: &Scenario, config: &RunConfig) -> Result<RunReport> {
    run(scenario, config, Mode::Baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    Radius,
    TrajectoryFraction,
    Heads,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Radius => "radius",
            SweepAxis::TrajectoryFraction => "trajectory_fraction",
            SweepAxis::Heads => "heads",
        }
    }

    pub fn apply(self, config: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = config.clone();
        match self {
            SweepAxis::Lambda => c.lambda = value,
            SweepAxis::Radius => c.sensing_radius_m = value,
            SweepAxis::TrajectoryFraction => c.trajectory_fraction = value,
            SweepAxis::Heads => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::param("heads", format!("must be a positive integer, got {value}")));
                }
                c.heads = value as usize;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub metrics: Option<RoundMetrics>,
    /// Mean `|K_m - true count|` and mean true count over trajectories.
    pub k_deviation: Option<(f64, f64)>,
}

/// Mean absolute deviation of estimated cluster counts from the number of
/// distinct identities related to each trajectory, and the mean true count.
pub fn mean_cluster_count_deviation(
    scenario: &Scenario,
    config: &RunConfig,
) -> Result<Option<(f64, f64)>> {
    let Some(ids) = scenario.video_identities() else {
        return Ok(None);
    };
    let keep = select_trajectories(
        scenario.trajectories.len(),
        config.trajectory_fraction,
        derive_seed(config.seed, "trajectories", 0),
    );
    if keep.is_empty() {
        return Ok(None);
    }
    let s = sense(&scenario.with_trajectory_subset(&keep), config.sensing_radius_m)?;
    if s.total_fragments() == 0 {
        return Ok(None);
    }
    let pairs = cluster_count_deviation(&s, config.lambda, &ids)?;
    if pairs.is_empty() {
        return Ok(None);
    }
    let n = pairs.len() as f64;
    let dev = pairs.iter().map(|&(k, t)| (k as f64 - t as f64).abs()).sum::<f64>() / n;
    let truth = pairs.iter().map(|&(_, t)| t as f64).sum::<f64>() / n;
    Ok(Some((dev, truth)))
}

fn sweep_one(scenario: &Scenario, config: &RunConfig, axis: SweepAxis, value: f64) -> SweepRow {
    let result = axis.apply(config, value).and_then(|c| {
        let report = run_umtf(scenario, &c)?;
        let dev = mean_cluster_count_deviation(scenario, &c)?;
        Ok((report, dev))
    });
    match result {
        Ok((report, dev)) => SweepRow {
            value,
            status: "ok".into(),
            metrics: report.final_metrics().cloned(),
            k_deviation: dev,
        },
        Err(e) => SweepRow {
            value,
            status: format!("error: {e}"),
            metrics: None,
            k_deviation: None,
        },
    }
}

/// One full run per value on a shared scenario and seed. Rows come back in
/// the order of `values` regardless of `jobs`.
pub fn ablation_sweep(
    scenario: &Scenario,
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::param("values", "sweep needs at least one value"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    use rayon::prelude::*;
    Ok(pool.install(|| {
        values
            .par_iter()
            .map(|&v| sweep_one(scenario, config, axis, v))
            .collect()
    }))
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "axis",
    "value",
    "status",
    "mAP",
    "r1",
    "r5",
    "r10",
    "ami_visual",
    "ami_multimodal",
    "coverage_visual",
    "coverage_multimodal",
    "ami_mmda_clusters",
    "k_deviation",
    "k_true_mean",
];

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for row in rows {
        let m = row.metrics.as_ref();
        w.write_record([
            axis.name().to_string(),
            row.value.to_string(),
            row.status.clone(),
            cell(m.and_then(|m| m.map)),
            cell(m.and_then(|m| m.r1)),
            cell(m.and_then(|m| m.r5)),
            cell(m.and_then(|m| m.r10)),
            cell(m.and_then(|m| m.ami_visual)),
            cell(m.and_then(|m| m.ami_multimodal)),
            cell(m.map(|m| m.coverage_visual)),
            cell(m.and_then(|m| m.coverage_multimodal)),
            cell(m.and_then(|m| m.ami_mmda_clusters)),
            cell(row.k_deviation.map(|d| d.0)),
            cell(row.k_deviation.map(|d| d.1)),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, GenerationParams};

    fn quick() -> RunConfig {
        RunConfig {
            epochs_stage1: 5,
            epochs_stage2: 4,
            relabel_period: 2,
            mmgn_epochs: 5,
            heads: 2,
            ..RunConfig::default()
        }
    }

    fn small_scenario() -> Scenario {
        generate_scenario(
            &GenerationParams {
                n_identities: 12,
                ..Default::default()
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn relabel_period_must_divide_stage_two() {
        let c = RunConfig {
            relabel_period: 3,
            ..RunConfig::default()
        };
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidParam { field: "relabel_period", .. })
        ));
        assert_eq!(RunConfig::default().rounds(), 16);
    }

    #[test]
    fn trajectory_selection() {
        assert_eq!(select_trajectories(10, 1.0, 3), (0..10).collect::<Vec<_>>());
        assert!(select_trajectories(10, 0.0, 3).is_empty());
        let half = select_trajectories(10, 0.5, 3);
        assert_eq!(half.len(), 5);
        assert!(half.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_fraction_matches_baseline() {
        let s = small_scenario();
        let c = RunConfig {
            trajectory_fraction: 0.0,
            ..quick()
        };
        let a = run_umtf(&s, &c).unwrap();
        let b = run_baseline(&s, &c).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.rounds.len(), 3);
    }

    #[test]
    fn stripped_scenario_omits_ground_truth_columns() {
        let mut s = small_scenario();
        s.strip_ground_truth();
        let report = run_umtf(&s, &quick()).unwrap();
        let csv = report.to_csv().unwrap();
        assert!(csv.starts_with("round,coverage_visual,coverage_multimodal\n"));
        assert!(report.rounds.iter().all(|r| r.map.is_none()));
    }

    #[test]
    fn no_trajectories_degrades_with_notice() {
        let mut s = small_scenario();
        s.trajectories.clear();
        s.trajectory_identities = Some(Vec::new());
        let report = run_umtf(&s, &quick()).unwrap();
        assert!(!report.notices.is_empty());
        assert!(report.rounds.iter().all(|r| r.coverage_multimodal.is_none()));
    }

    #[test]
    fn full_header() {
        let report = run_umtf(&small_scenario(), &quick()).unwrap();
        let csv = report.to_csv().unwrap();
        assert!(csv.starts_with(
            "round,mAP,r1,r5,r10,ami_visual,ami_multimodal,coverage_visual,coverage_multimodal,ami_mmda_clusters\n"
        ));
    }
}
