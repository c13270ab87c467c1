//! Trainable appearance embedding.
//!
//! A two-layer perceptron maps raw descriptors to unit-norm embeddings. It is
//! first trained with one classifier per camera, where every video at that
//! camera is its own class, and afterwards fine-tuned with a batch-hard triplet
//! loss on pseudo labels.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, elu, elu_backward, Adam, AdamConfig, Linear, Param, Parameterized, Sgd, SgdConfig,
};
use crate::rng::{rng_for, Rng};
use crate::scenario::VideoSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Multiplier on classifier logits; embeddings are unit vectors, so
    /// unscaled logits would stay in `[-|w|, |w|]`.
    pub logit_scale: f64,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self {
            input_dim: 48,
            hidden_dim: 64,
            output_dim: 32,
            logit_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub margin: f64,
    /// Identities per batch.
    pub p: usize,
    /// Samples per identity.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualModel {
    pub config: VisualConfig,
    pub fc1: Linear,
    pub fc2: Linear,
    /// One classifier per camera, indexed by camera id; empty until
    /// initial training.
    pub classifiers: Vec<Linear>,
}

struct EmbedCache {
    pre1: Array2<f64>,
    h1: Array2<f64>,
    unit: Array2<f64>,
    norms: Array1<f64>,
}

/// Descriptor rows in video-id order.
pub fn descriptor_matrix(videos: &[VideoSequence]) -> Result<Array2<f64>> {
    let dim = videos.first().map_or(0, |v| v.descriptor.len());
    let mut out = Array2::zeros((videos.len(), dim));
    for (i, v) in videos.iter().enumerate() {
        if v.descriptor.len() != dim {
            return Err(Error::Shape(format!(
                "video {} has descriptor width {}, expected {dim}",
                v.id,
                v.descriptor.len()
            )));
        }
        out.row_mut(i).assign(&Array1::from(v.descriptor.clone()));
    }
    Ok(out)
}

impl VisualModel {
    pub fn new(config: VisualConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed, "visual-init", 0);
        Self {
            config,
            fc1: Linear::new(&mut rng, config.input_dim, config.hidden_dim, true),
            fc2: Linear::new(&mut rng, config.hidden_dim, config.output_dim, true),
            classifiers: Vec::new(),
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "descriptor width {} but the model expects {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn embed(&self, x: &Array2<f64>) -> EmbedCache {
        let pre1 = self.fc1.forward(x);
        let h1 = elu(&pre1);
        let (unit, norms) = nn::l2_normalize_rows(&self.fc2.forward(&h1));
        EmbedCache {
            pre1,
            h1,
            unit,
            norms,
        }
    }

    fn embed_backward(&mut self, x: &Array2<f64>, cache: &EmbedCache, dunit: &Array2<f64>) {
        let d = nn::l2_normalize_rows_backward(&cache.unit, &cache.norms, dunit);
        let d = self.fc2.backward(&cache.h1, &d);
        let d = elu_backward(&cache.pre1, &d);
        self.fc1.backward(x, &d);
    }

    /// Unit-norm embeddings, one row per descriptor row.
    pub fn extract_features(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.embed(x).unit)
    }

    /// Creates one classifier per camera with `counts[c]` classes.
    pub fn init_classifiers(&mut self, counts: &[usize], seed: u64) {
        self.classifiers = counts
            .iter()
            .enumerate()
            .map(|(c, &k)| {
                let mut rng = rng_for(seed, "visual-classifier", c as u64);
                Linear::new(&mut rng, self.config.output_dim, k.max(1), false)
            })
            .collect();
    }

    /// Summed per-camera cross-entropy on a batch. `targets[r]` is
    /// `(camera, class within camera)` of row `r`. Zeroes gradients first.
    pub fn classification_loss_and_grad(
        &mut self,
        x: &Array2<f64>,
        targets: &[(usize, usize)],
    ) -> Result<f64> {
        self.check_input(x)?;
        self.zero_grad();
        let cache = self.embed(x);
        let mut dunit = Array2::zeros(cache.unit.raw_dim());
        let mut by_camera: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (r, &(c, _)) in targets.iter().enumerate() {
            by_camera.entry(c).or_default().push(r);
        }
        let scale = self.config.logit_scale;
        let mut loss = 0.0;
        for (c, rows) in by_camera {
            let clf = self
                .classifiers
                .get_mut(c)
                .ok_or_else(|| Error::Shape(format!("no classifier for camera {c}")))?;
            let emb = cache.unit.select(Axis(0), &rows);
            let logits = clf.forward(&emb) * scale;
            let t: Vec<Option<usize>> = rows.iter().map(|&r| Some(targets[r].1)).collect();
            let (l, dlogits) = nn::softmax_cross_entropy(&logits, &t);
            loss += l;
            let demb = clf.backward(&emb, &(dlogits * scale));
            for (k, &r) in rows.iter().enumerate() {
                let mut row = dunit.row_mut(r);
                row += &demb.row(k);
            }
        }
        self.embed_backward(x, &cache, &dunit);
        Ok(loss)
    }

    /// Batch-hard triplet loss on a batch. Zeroes gradients first.
    pub fn triplet_loss_and_grad(&mut self, x: &Array2<f64>, labels: &[usize], margin: f64) -> Result<f64> {
        self.check_input(x)?;
        self.zero_grad();
        let cache = self.embed(x);
        let out = nn::batch_hard_triplet(&cache.unit, labels, margin);
        self.embed_backward(x, &cache, &out.grad);
        Ok(out.loss)
    }

    fn embedding_params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.fc1.params_mut();
        out.extend(self.fc2.params_mut());
        out
    }
}

impl Parameterized for VisualModel {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = self.fc1.named_params("fc1");
        out.extend(self.fc2.named_params("fc2"));
        for (c, clf) in self.classifiers.iter().enumerate() {
            out.extend(clf.named_params(&format!("classifier{c}")));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.fc1.params_mut();
        out.extend(self.fc2.params_mut());
        for clf in &mut self.classifiers {
            out.extend(clf.params_mut());
        }
        out
    }
}

/// Per-camera classification where each video is its own class. Returns the
/// mean batch loss of every epoch.
pub fn initial_train(
    model: &mut VisualModel,
    videos: &[VideoSequence],
    config: &InitialTrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let x = descriptor_matrix(videos)?;
    let n_cameras = videos.iter().map(|v| v.camera_id + 1).max().unwrap_or(0);
    let mut counts = vec![0usize; n_cameras];
    let mut targets = Vec::with_capacity(videos.len());
    for v in videos {
        targets.push((v.camera_id, counts[v.camera_id]));
        counts[v.camera_id] += 1;
    }
    for (c, &k) in counts.iter().enumerate() {
        if k == 1 {
            log::info!("camera {c} has a single video; its classification term is trivial");
        }
    }
    model.init_classifiers(&counts, seed);
    if videos.is_empty() || config.epochs == 0 {
        return Ok(Vec::new());
    }

    let mut rng = rng_for(seed, "visual-initial-batches", 0);
    let mut opt = Adam::new(AdamConfig::new(config.lr, config.weight_decay));
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let tb: Vec<(usize, usize)> = chunk.iter().map(|&i| targets[i]).collect();
            total += model.classification_loss_and_grad(&xb, &tb)?;
            steps += 1;
            opt.step(model.params_mut());
        }
        losses.push(total / steps as f64);
    }
    Ok(losses)
}

/// P x K batches over the labeled videos. Identities are shuffled and taken
/// `p` at a time; each contributes `k` members, drawn with replacement when it
/// has fewer than `k`.
pub fn pk_batches(labels: &[Option<usize>], p: usize, k: usize, rng: &mut Rng) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            classes.entry(*l).or_default().push(i);
        }
    }
    let mut ids: Vec<usize> = classes.keys().copied().collect();
    ids.shuffle(rng);
    let mut batches = Vec::new();
    for group in ids.chunks(p.max(2)) {
        if group.len() < 2 {
            continue;
        }
        let mut rows = Vec::new();
        let mut batch_labels = Vec::new();
        for &c in group {
            let members = &classes[&c];
            let picked: Vec<usize> = if members.len() >= k {
                members.choose_multiple(rng, k).copied().collect()
            } else {
                (0..k).map(|_| members[rng.random_range(0..members.len())]).collect()
            };
            batch_labels.extend(std::iter::repeat_n(c, picked.len()));
            rows.extend(picked);
        }
        batches.push((rows, batch_labels));
    }
    batches
}

/// Triplet fine-tuning on pseudo labels; unlabeled videos are ignored.
/// Returns the mean batch loss of every epoch.
pub fn triplet_finetune(
    model: &mut VisualModel,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    config: &TripletTrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels.iter().flatten() {
        *sizes.entry(*l).or_default() += 1;
    }
    if sizes.values().filter(|&&s| s >= 2).count() < 2 {
        return Err(Error::Insufficient(
            "triplet fine-tuning needs 2 classes with 2 members each".into(),
        ));
    }
    let mut rng = rng_for(seed, "visual-triplet-batches", 0);
    let mut opt = Sgd::new(SgdConfig {
        lr: config.lr,
        momentum: config.momentum,
        weight_decay: config.weight_decay,
    });
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let batches = pk_batches(labels, config.p, config.k, &mut rng);
        let mut total = 0.0;
        for (rows, batch_labels) in &batches {
            let xb = x.select(Axis(0), rows);
            total += model.triplet_loss_and_grad(&xb, batch_labels, config.margin)?;
            opt.step(model.embedding_params_mut());
        }
        losses.push(total / batches.len().max(1) as f64);
    }
    Ok(losses)
}
