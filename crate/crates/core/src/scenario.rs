//! Synthetic multi-camera worlds.
//!
//! A world is a set of cameras scattered over a square arena, a population of
//! walkers who each visit a random sequence of camera neighbourhoods, the
//! video sequences emitted whenever a walker is inside a camera's view disc,
//! and noisy positioning trajectories for the walkers that carry a phone.
//!
//! Appearance descriptors are `normalize(prototype + camera_bias + noise)`;
//! with probability `corrupt_prob` a descriptor is replaced by
//! `normalize(corrupt_alpha * prototype + noise)` to mimic occlusion, blur or
//! a change of clothes. Noise magnitudes are expressed as expected Euclidean
//! norms, so `sigma_app = 0.8` perturbs a unit prototype by roughly 0.8
//! regardless of the descriptor width.
//!
//! Camera bias and appearance noise live in a random `nuisance_dim`-wide
//! subspace (pose and lighting factors) shared by all cameras; setting it to
//! `descriptor_dim` makes them isotropic. Corruption noise is always isotropic.
//!
//! # Document format
//!
//! One JSON document per scenario with top-level keys `format_version`,
//! `seed`, `params`, `cameras`, `videos`, `trajectories` and `eval_only`.
//! Ground truth lives only under `eval_only` (`video_identities`,
//! `trajectory_identities`) so it can be stripped without touching the rest.
//! Floats are written with at most 9 significant digits; generated worlds are
//! rounded at creation so a save/load round trip is exact.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Resolution of the hidden ground-truth path when detecting view-disc passes.
const PATH_STEP_S: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    /// Closed-interval overlap: `max(starts) <= min(ends)`.
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start.max(other.start) <= self.end.min(other.end)
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl From<[f64; 2]> for Interval {
    fn from([start, end]: [f64; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.start, i.end]
    }
}

/// One positioning sample `(t, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl Sample {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl From<[f64; 3]> for Sample {
    fn from([t, x, y]: [f64; 3]) -> Self {
        Self { t, x, y }
    }
}

impl From<Sample> for [f64; 3] {
    fn from(s: Sample) -> Self {
        [s.t, s.x, s.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub id: usize,
    pub position: Point,
    pub view_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub id: usize,
    pub camera_id: usize,
    pub interval: Interval,
    pub descriptor: Vec<f64>,
    /// Evaluation only. The training pipeline never reads it.
    pub gt_identity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirelessTrajectory {
    pub id: usize,
    pub signal_id: String,
    pub samples: Vec<Sample>,
}

impl WirelessTrajectory {
    pub fn span(&self) -> Interval {
        Interval::new(
            self.samples.first().map_or(0.0, |s| s.t),
            self.samples.last().map_or(0.0, |s| s.t),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub n_cameras: usize,
    pub n_identities: usize,
    pub arena_size_m: f64,
    pub min_camera_spacing_m: f64,
    pub view_radius_m: f64,
    pub visits_per_identity: usize,
    pub walking_speed_mps: f64,
    pub max_dwell_s: f64,
    pub start_window_s: f64,
    pub sample_period_s: f64,
    pub sigma_pos_m: f64,
    pub descriptor_dim: usize,
    pub sigma_app: f64,
    pub camera_bias: f64,
    /// Width of the subspace holding camera bias and appearance noise.
    pub nuisance_dim: usize,
    pub corrupt_prob: f64,
    pub corrupt_alpha: f64,
    pub sigma_corrupt: f64,
    /// Probability that one pass through a view disc is tracked as two videos.
    pub split_prob: f64,
    pub phone_fraction: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            n_cameras: 6,
            n_identities: 40,
            arena_size_m: 300.0,
            min_camera_spacing_m: 50.0,
            view_radius_m: 15.0,
            visits_per_identity: 6,
            walking_speed_mps: 1.3,
            max_dwell_s: 10.0,
            start_window_s: 1800.0,
            sample_period_s: 1.0,
            sigma_pos_m: 2.0,
            descriptor_dim: 48,
            sigma_app: 0.8,
            camera_bias: 0.6,
            nuisance_dim: 16,
            corrupt_prob: 0.25,
            corrupt_alpha: 0.3,
            sigma_corrupt: 1.0,
            split_prob: 0.2,
            phone_fraction: 0.8,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be > 0, got {v}")))
            }
        }
        fn non_negative(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be >= 0, got {v}")))
            }
        }
        fn probability(field: &'static str, v: f64) -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(field, format!("must lie in [0, 1], got {v}")))
            }
        }
        fn count(field: &'static str, v: usize) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::param(field, "must be > 0"))
            }
        }

        count("n_cameras", self.n_cameras)?;
        count("n_identities", self.n_identities)?;
        count("visits_per_identity", self.visits_per_identity)?;
        count("descriptor_dim", self.descriptor_dim)?;
        count("nuisance_dim", self.nuisance_dim)?;
        if self.nuisance_dim > self.descriptor_dim {
            return Err(Error::param("nuisance_dim", "must not exceed descriptor_dim"));
        }
        positive("arena_size_m", self.arena_size_m)?;
        non_negative("min_camera_spacing_m", self.min_camera_spacing_m)?;
        positive("view_radius_m", self.view_radius_m)?;
        positive("walking_speed_mps", self.walking_speed_mps)?;
        non_negative("max_dwell_s", self.max_dwell_s)?;
        non_negative("start_window_s", self.start_window_s)?;
        positive("sample_period_s", self.sample_period_s)?;
        non_negative("sigma_pos_m", self.sigma_pos_m)?;
        non_negative("sigma_app", self.sigma_app)?;
        non_negative("camera_bias", self.camera_bias)?;
        non_negative("corrupt_alpha", self.corrupt_alpha)?;
        non_negative("sigma_corrupt", self.sigma_corrupt)?;
        probability("corrupt_prob", self.corrupt_prob)?;
        probability("split_prob", self.split_prob)?;
        probability("phone_fraction", self.phone_fraction)?;
        Ok(())
    }

    /// Number of identities that carry a phone: `floor(phone_fraction * n_identities)`.
    pub fn phone_owner_count(&self) -> usize {
        // The epsilon keeps exact products such as 0.8 * 40 from rounding down.
        ((self.phone_fraction * self.n_identities as f64) + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub params: GenerationParams,
    pub cameras: Vec<Camera>,
    pub videos: Vec<VideoSequence>,
    pub trajectories: Vec<WirelessTrajectory>,
    /// Evaluation only: owner identity of each trajectory, indexed by trajectory id.
    pub trajectory_identities: Option<Vec<usize>>,
}

impl Scenario {
    pub fn n_videos(&self) -> usize {
        self.videos.len()
    }

    pub fn camera_ids(&self) -> Vec<usize> {
        self.videos.iter().map(|v| v.camera_id).collect()
    }

    /// Ground-truth identity per video, if every video carries one.
    pub fn video_identities(&self) -> Option<Vec<usize>> {
        self.videos.iter().map(|v| v.gt_identity).collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.video_identities().is_some()
    }

    /// Drops every evaluation-only field.
    pub fn strip_ground_truth(&mut self) {
        for v in &mut self.videos {
            v.gt_identity = None;
        }
        self.trajectory_identities = None;
    }

    /// Keeps the trajectories at the given (sorted, distinct) indices and
    /// renumbers them densely.
    pub fn with_trajectory_subset(&self, keep: &[usize]) -> Scenario {
        let mut out = self.clone();
        out.trajectories = keep
            .iter()
            .enumerate()
            .map(|(new_id, &old)| WirelessTrajectory {
                id: new_id,
                ..self.trajectories[old].clone()
            })
            .collect();
        out.trajectory_identities = self
            .trajectory_identities
            .as_ref()
            .map(|ids| keep.iter().map(|&old| ids[old]).collect());
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, cam) in self.cameras.iter().enumerate() {
            if cam.id != idx {
                return Err(Error::Invalid(format!(
                    "camera ids must be dense: position {idx} holds id {}",
                    cam.id
                )));
            }
            if !(cam.view_radius > 0.0) {
                return Err(Error::Invalid(format!(
                    "camera {idx}: view_radius must be > 0"
                )));
            }
        }
        let dim = self.videos.first().map(|v| v.descriptor.len());
        let gt_count = self.videos.iter().filter(|v| v.gt_identity.is_some()).count();
        if gt_count != 0 && gt_count != self.videos.len() {
            return Err(Error::Invalid(
                "ground truth must cover every video or none".into(),
            ));
        }
        for (idx, v) in self.videos.iter().enumerate() {
            if v.id != idx {
                return Err(Error::Invalid(format!(
                    "video ids must be dense: position {idx} holds id {}",
                    v.id
                )));
            }
            if v.camera_id >= self.cameras.len() {
                return Err(Error::Integrity(format!(
                    "video {idx} references camera {} but only {} cameras exist",
                    v.camera_id,
                    self.cameras.len()
                )));
            }
            if !(v.interval.start <= v.interval.end) {
                return Err(Error::Invalid(format!(
                    "video {idx}: interval start exceeds end"
                )));
            }
            if Some(v.descriptor.len()) != dim || v.descriptor.is_empty() {
                return Err(Error::Invalid(format!(
                    "video {idx}: descriptor width differs from video 0"
                )));
            }
            let norm = v.descriptor.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "video {idx}: descriptor norm {norm} is not 1"
                )));
            }
        }
        for (idx, tr) in self.trajectories.iter().enumerate() {
            if tr.id != idx {
                return Err(Error::Invalid(format!(
                    "trajectory ids must be dense: position {idx} holds id {}",
                    tr.id
                )));
            }
            if tr.samples.len() < 2 {
                return Err(Error::Invalid(format!(
                    "trajectory {idx}: needs at least 2 samples"
                )));
            }
            if tr.samples.windows(2).any(|w| !(w[0].t < w[1].t)) {
                return Err(Error::Invalid(format!(
                    "trajectory {idx}: sample times must be strictly increasing"
                )));
            }
        }
        if let Some(ids) = &self.trajectory_identities {
            if ids.len() != self.trajectories.len() {
                return Err(Error::Integrity(format!(
                    "{} trajectory identities for {} trajectories",
                    ids.len(),
                    self.trajectories.len()
                )));
            }
            let distinct: BTreeSet<_> = ids.iter().collect();
            if distinct.len() != ids.len() {
                return Err(Error::Integrity(
                    "an identity owns more than one trajectory".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ScenarioDocument::from(self);
        let value = round_json_floats(serde_json::to_value(&doc)?);
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ScenarioDocument =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        if doc.format_version != SCENARIO_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: doc.format_version,
                expected: SCENARIO_FORMAT_VERSION,
            });
        }
        let scenario = doc.into_scenario()?;
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scenario.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoRecord {
    id: usize,
    camera_id: usize,
    interval: Interval,
    descriptor: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalOnly {
    video_identities: Vec<usize>,
    #[serde(default)]
    trajectory_identities: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    format_version: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    params: GenerationParams,
    cameras: Vec<Camera>,
    videos: Vec<VideoRecord>,
    trajectories: Vec<WirelessTrajectory>,
    #[serde(default)]
    eval_only: Option<EvalOnly>,
}

impl From<&Scenario> for ScenarioDocument {
    fn from(s: &Scenario) -> Self {
        let eval_only = s.video_identities().map(|video_identities| EvalOnly {
            video_identities,
            trajectory_identities: s.trajectory_identities.clone().unwrap_or_default(),
        });
        ScenarioDocument {
            format_version: SCENARIO_FORMAT_VERSION,
            seed: s.seed,
            params: s.params.clone(),
            cameras: s.cameras.clone(),
            videos: s
                .videos
                .iter()
                .map(|v| VideoRecord {
                    id: v.id,
                    camera_id: v.camera_id,
                    interval: v.interval,
                    descriptor: v.descriptor.clone(),
                })
                .collect(),
            trajectories: s.trajectories.clone(),
            eval_only,
        }
    }
}

impl ScenarioDocument {
    fn into_scenario(self) -> Result<Scenario> {
        let (video_ids, traj_ids) = match self.eval_only {
            Some(e) => {
                if e.video_identities.len() != self.videos.len() {
                    return Err(Error::Integrity(format!(
                        "eval_only.video_identities has {} entries for {} videos",
                        e.video_identities.len(),
                        self.videos.len()
                    )));
                }
                let traj = if e.trajectory_identities.is_empty() && !self.trajectories.is_empty()
                {
                    None
                } else {
                    Some(e.trajectory_identities)
                };
                (Some(e.video_identities), traj)
            }
            None => (None, None),
        };
        let videos = self
            .videos
            .into_iter()
            .enumerate()
            .map(|(idx, r)| VideoSequence {
                id: r.id,
                camera_id: r.camera_id,
                interval: r.interval,
                descriptor: r.descriptor,
                gt_identity: video_ids.as_ref().map(|ids| ids[idx]),
            })
            .collect();
        Ok(Scenario {
            seed: self.seed,
            params: self.params,
            cameras: self.cameras,
            videos,
            trajectories: self.trajectories,
            trajectory_identities: traj_ids,
        })
    }
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round_json_floats(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig9(x)))
            .map_or(Value::Number(n), Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(round_json_floats).collect()),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| (k, round_json_floats(v)))
                .collect(),
        ),
        other => other,
    }
}

fn gaussian_vector(rng: &mut Rng, dim: usize, expected_norm: f64) -> Vec<f64> {
    let scale = expected_norm / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn norm_error(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0
}

/// Unit vector rounded to 9 significant digits. Rounding alone can leave the
/// norm up to about 5e-9 off, so single components are then nudged by one
/// unit in the ninth digit while that brings the norm closer to 1.
fn unit_descriptor(mut v: Vec<f64>) -> Vec<f64> {
    normalize(&mut v);
    let mut rounded: Vec<f64> = v.iter().map(|&x| round_sig9(x)).collect();
    // A zero vector (possible only with every noise term disabled) has no direction.
    if rounded.iter().all(|&x| x == 0.0) {
        rounded[0] = 1.0;
        return rounded;
    }
    let mut err = norm_error(&rounded);
    while err.abs() > 1e-10 {
        let mut best: Option<(usize, f64, f64)> = None;
        for k in 0..rounded.len() {
            let x = rounded[k];
            if x == 0.0 {
                continue;
            }
            let step = 10f64.powi(x.abs().log10().floor() as i32 - 8);
            let candidate = round_sig9(x - x.signum() * err.signum() * step);
            rounded[k] = candidate;
            let e = norm_error(&rounded);
            rounded[k] = x;
            if e.abs() < best.map_or(err.abs(), |b| b.2.abs()) {
                best = Some((k, candidate, e));
            }
        }
        let Some((k, candidate, e)) = best else { break };
        rounded[k] = candidate;
        err = e;
    }
    rounded
}

/// Orthonormal basis of a random `k`-dimensional subspace of `R^dim`,
/// one vector per entry. `k == dim` yields the standard basis.
fn nuisance_basis(rng: &mut Rng, dim: usize, k: usize) -> Vec<Vec<f64>> {
    if k == dim {
        return (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian_vector(rng, dim, 1.0);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

fn embed_nuisance(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let dim = basis.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (b, c) in basis.iter().zip(coeffs) {
        out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
    }
    out
}

fn place_cameras(params: &GenerationParams, rng: &mut Rng) -> Result<Vec<Camera>> {
    let mut cameras: Vec<Camera> = Vec::with_capacity(params.n_cameras);
    let mut attempts = 0usize;
    while cameras.len() < params.n_cameras {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::param(
                "arena_size_m",
                "too small to place cameras at the requested spacing",
            ));
        }
        let p = Point::new(
            rng.random::<f64>() * params.arena_size_m,
            rng.random::<f64>() * params.arena_size_m,
        );
        if cameras
            .iter()
            .all(|c| c.position.distance(&p) >= params.min_camera_spacing_m)
        {
            cameras.push(Camera {
                id: cameras.len(),
                position: Point::new(round_sig9(p.x), round_sig9(p.y)),
                view_radius: params.view_radius_m,
            });
        }
    }
    Ok(cameras)
}

/// Piecewise-linear walking path with optional dwell at each waypoint.
struct WalkPath {
    /// (time, position) knots; consecutive knots are joined linearly.
    knots: Vec<(f64, Point)>,
}

impl WalkPath {
    fn start(&self) -> f64 {
        self.knots[0].0
    }

    fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    fn position(&self, t: f64) -> Point {
        let idx = self.knots.partition_point(|(kt, _)| *kt <= t);
        if idx == 0 {
            return self.knots[0].1;
        }
        if idx >= self.knots.len() {
            return self.knots[self.knots.len() - 1].1;
        }
        let (t0, p0) = self.knots[idx - 1];
        let (t1, p1) = self.knots[idx];
        let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Point::new(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y))
    }
}

fn uniform_in_disc(rng: &mut Rng, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

fn build_walk(params: &GenerationParams, cameras: &[Camera], rng: &mut Rng) -> WalkPath {
    let arena = params.arena_size_m;
    let speed = params.walking_speed_mps * (0.8 + 0.4 * rng.random::<f64>());
    // Tours: each pass over the cameras is a fresh permutation, so a walker
    // with at least `n_cameras` visits sees every camera.
    let mut sequence: Vec<usize> = Vec::with_capacity(params.visits_per_identity);
    while sequence.len() < params.visits_per_identity {
        let mut tour: Vec<usize> = (0..cameras.len()).collect();
        tour.shuffle(rng);
        if cameras.len() > 1 && sequence.last() == tour.first() {
            tour.swap(0, 1);
        }
        sequence.extend(tour);
    }
    sequence.truncate(params.visits_per_identity);
    let start = Point::new(rng.random::<f64>() * arena, rng.random::<f64>() * arena);
    let end = Point::new(rng.random::<f64>() * arena, rng.random::<f64>() * arena);
    let mut t = rng.random::<f64>() * params.start_window_s;
    let mut knots = vec![(t, start)];
    let mut here = start;
    for &c in &sequence {
        let target = uniform_in_disc(rng, cameras[c].position, 0.5 * cameras[c].view_radius);
        t += here.distance(&target) / speed;
        knots.push((t, target));
        let dwell = rng.random::<f64>() * params.max_dwell_s;
        if dwell > 0.0 {
            t += dwell;
            knots.push((t, target));
        }
        here = target;
    }
    t += here.distance(&end) / speed;
    knots.push((t, end));
    WalkPath { knots }
}

/// Maximal runs of the fine-sampled path inside each camera's view disc.
fn view_passes(path: &WalkPath, cameras: &[Camera]) -> Vec<(usize, Interval)> {
    let steps = ((path.end() - path.start()) / PATH_STEP_S).ceil() as usize;
    let times: Vec<f64> = (0..=steps)
        .map(|k| (path.start() + k as f64 * PATH_STEP_S).min(path.end()))
        .collect();
    let mut passes = Vec::new();
    for cam in cameras {
        let mut open: Option<(f64, f64)> = None;
        for &t in &times {
            let inside = path.position(t).distance(&cam.position) < cam.view_radius;
            open = match (open, inside) {
                (None, true) => Some((t, t)),
                (Some((s, _)), true) => Some((s, t)),
                (Some((s, e)), false) => {
                    passes.push((cam.id, Interval::new(s, e)));
                    None
                }
                (None, false) => None,
            };
        }
        if let Some((s, e)) = open {
            passes.push((cam.id, Interval::new(s, e)));
        }
    }
    // Grazing passes shorter than one path step carry no usable footage.
    passes.retain(|(_, iv)| iv.duration() >= PATH_STEP_S);
    passes
}

struct PendingVideo {
    camera_id: usize,
    interval: Interval,
    identity: usize,
}

/// Generates a world. Pure function of `(params, seed)`.
pub fn generate_scenario(params: &GenerationParams, seed: u64) -> Result<Scenario> {
    params.validate()?;
    let cameras = place_cameras(params, &mut rng_for(seed, "cameras", 0))?;
    let dim = params.descriptor_dim;

    let mut proto_rng = rng_for(seed, "prototypes", 0);
    let prototypes: Vec<Vec<f64>> = (0..params.n_identities)
        .map(|_| {
            let mut p = gaussian_vector(&mut proto_rng, dim, 1.0);
            normalize(&mut p);
            p
        })
        .collect();
    let basis = nuisance_basis(&mut rng_for(seed, "nuisance", 0), dim, params.nuisance_dim);
    let mut bias_rng = rng_for(seed, "camera-bias", 0);
    let biases: Vec<Vec<f64>> = cameras
        .iter()
        .map(|_| embed_nuisance(&basis, &gaussian_vector(&mut bias_rng, basis.len(), params.camera_bias)))
        .collect();

    let mut walks = Vec::with_capacity(params.n_identities);
    let mut pending = Vec::new();
    for identity in 0..params.n_identities {
        let mut rng = rng_for(seed, "walk", identity as u64);
        let walk = build_walk(params, &cameras, &mut rng);
        for (camera_id, iv) in view_passes(&walk, &cameras) {
            if params.split_prob > 0.0 && rng.random::<f64>() < params.split_prob {
                let cut = iv.start + iv.duration() * (0.3 + 0.4 * rng.random::<f64>());
                let gap = (0.1 * iv.duration()).min(1.0);
                pending.push(PendingVideo {
                    camera_id,
                    interval: Interval::new(iv.start, cut - 0.5 * gap),
                    identity,
                });
                pending.push(PendingVideo {
                    camera_id,
                    interval: Interval::new(cut + 0.5 * gap, iv.end),
                    identity,
                });
            } else {
                pending.push(PendingVideo {
                    camera_id,
                    interval: iv,
                    identity,
                });
            }
        }
        walks.push(walk);
    }
    pending.sort_by(|a, b| {
        a.interval
            .start
            .total_cmp(&b.interval.start)
            .then(a.camera_id.cmp(&b.camera_id))
            .then(a.identity.cmp(&b.identity))
    });

    let mut app_rng = rng_for(seed, "appearance", 0);
    let videos: Vec<VideoSequence> = pending
        .into_iter()
        .enumerate()
        .map(|(id, p)| {
            let proto = &prototypes[p.identity];
            let corrupted = params.corrupt_prob > 0.0 && app_rng.random::<f64>() < params.corrupt_prob;
            let raw: Vec<f64> = if corrupted {
                let noise = gaussian_vector(&mut app_rng, dim, params.sigma_corrupt);
                proto
                    .iter()
                    .zip(&noise)
                    .map(|(a, n)| params.corrupt_alpha * a + n)
                    .collect()
            } else {
                let noise = embed_nuisance(
                    &basis,
                    &gaussian_vector(&mut app_rng, basis.len(), params.sigma_app),
                );
                proto
                    .iter()
                    .zip(&biases[p.camera_id])
                    .zip(&noise)
                    .map(|((a, b), n)| a + b + n)
                    .collect()
            };
            VideoSequence {
                id,
                camera_id: p.camera_id,
                interval: Interval::new(round_sig9(p.interval.start), round_sig9(p.interval.end)),
                descriptor: unit_descriptor(raw),
                gt_identity: Some(p.identity),
            }
        })
        .collect();

    let mut owner_rng = rng_for(seed, "phones", 0);
    let mut owners: Vec<usize> = (0..params.n_identities).collect();
    owners.shuffle(&mut owner_rng);
    owners.truncate(params.phone_owner_count());

    let trajectories: Vec<WirelessTrajectory> = owners
        .iter()
        .enumerate()
        .map(|(id, &identity)| {
            let mut rng = rng_for(seed, "trajectory", identity as u64);
            let walk = &walks[identity];
            let mut samples = Vec::new();
            let mut t = walk.start();
            while t <= walk.end() {
                let p = walk.position(t);
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                samples.push(Sample {
                    t: round_sig9(t),
                    x: round_sig9(p.x + params.sigma_pos_m * dx),
                    y: round_sig9(p.y + params.sigma_pos_m * dy),
                });
                t += params.sample_period_s;
            }
            if samples.len() < 2 {
                let p = walk.position(walk.end());
                samples.push(Sample {
                    t: round_sig9(samples[0].t + params.sample_period_s),
                    x: round_sig9(p.x),
                    y: round_sig9(p.y),
                });
            }
            WirelessTrajectory {
                id,
                signal_id: mac_address(&mut rng),
                samples,
            }
        })
        .collect();

    let scenario = Scenario {
        seed,
        params: params.clone(),
        cameras,
        videos,
        trajectories,
        trajectory_identities: Some(owners),
    };
    scenario.validate()?;
    Ok(scenario)
}

fn mac_address(rng: &mut Rng) -> String {
    let mut bytes = [0u8; 6];
    rng.fill_bytes(&mut bytes);
    // Locally administered unicast.
    bytes[0] = (bytes[0] | 0x02) & 0xFE;
    bytes
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<Vec<_>>()
        .join(":")
}
