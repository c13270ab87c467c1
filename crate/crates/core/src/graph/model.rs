use ndarray::{concatenate, s, Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::VideoGraph;
use crate::error::{Error, Result};
use crate::nn::{
    self, elu, elu_backward, leaky_relu, leaky_relu_backward, Adam, AdamConfig, BatchNorm,
    BatchNormCache, Linear, Param, Parameterized,
};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmgnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub bins: usize,
    pub edge_hidden: usize,
    pub n_classes: usize,
}

impl MmgnConfig {
    pub fn output_dim(&self) -> usize {
        self.heads * self.hidden_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmgnTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Adds a full-graph batch-hard triplet term on normalized features.
    pub triplet: bool,
    pub margin: f64,
}

impl Default for MmgnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            lr: 0.01,
            weight_decay: 5e-4,
            triplet: false,
            margin: 0.4,
        }
    }
}

/// Row-stochastic adjacency over the graph's edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub weights: Array1<f64>,
}

impl Adjacency {
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[[i, self.cols[e]]] = self.weights[e];
            }
        }
        out
    }
}

fn row_softmax(graph: &VideoGraph, logits: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(logits.len());
    for i in 0..graph.n {
        let range = graph.row_ptr[i]..graph.row_ptr[i + 1];
        let row = logits.slice(s![range.clone()]);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps = row.mapv(|v| (v - max).exp());
        let z = exps.sum();
        out.slice_mut(s![range]).assign(&(exps / z));
    }
    out
}

fn row_softmax_backward(graph: &VideoGraph, weights: &Array1<f64>, dw: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(weights.len());
    for i in 0..graph.n {
        let range = graph.row_ptr[i]..graph.row_ptr[i + 1];
        let w = weights.slice(s![range.clone()]);
        let g = dw.slice(s![range.clone()]);
        let dot = w.dot(&g);
        out.slice_mut(s![range]).assign(&(&w * &(&g - dot)));
    }
    out
}

/// `Y[i] = sum_e w_e P[col_e]` over the edges of row `i`.
fn spmm(graph: &VideoGraph, weights: &Array1<f64>, p: &Array2<f64>) -> Array2<f64> {
    let mut y = Array2::zeros((graph.n, p.ncols()));
    for (e, i, j) in graph.edges() {
        let mut row = y.row_mut(i);
        row.scaled_add(weights[e], &p.row(j));
    }
    y
}

fn spmm_backward(
    graph: &VideoGraph,
    weights: &Array1<f64>,
    p: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array1<f64>, Array2<f64>) {
    let mut dw = Array1::zeros(weights.len());
    let mut dp = Array2::zeros(p.raw_dim());
    for (e, i, j) in graph.edges() {
        dw[e] = dy.row(i).dot(&p.row(j));
        let mut row = dp.row_mut(j);
        row.scaled_add(weights[e], &dy.row(i));
    }
    (dw, dp)
}

/// Two affine + batch-norm + leaky-rectifier blocks mapping each edge
/// histogram to one adjacency logit.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScorer {
    pub fc1: Linear,
    pub bn1: BatchNorm,
    pub fc2: Linear,
    pub bn2: BatchNorm,
}

struct EdgeCache {
    bn1: BatchNormCache,
    pre1: Array2<f64>,
    h1: Array2<f64>,
    bn2: BatchNormCache,
    pre2: Array2<f64>,
}

impl EdgeScorer {
    fn new(rng: &mut crate::rng::Rng, bins: usize, hidden: usize) -> Self {
        Self {
            fc1: Linear::new(rng, bins, hidden, false),
            bn1: BatchNorm::new(hidden),
            fc2: Linear::new(rng, hidden, 1, false),
            bn2: BatchNorm::new(1),
        }
    }

    fn forward(&self, features: &Array2<f64>) -> (Array1<f64>, EdgeCache) {
        let (pre1, bn1) = self.bn1.forward(&self.fc1.forward(features));
        let h1 = leaky_relu(&pre1);
        let (pre2, bn2) = self.bn2.forward(&self.fc2.forward(&h1));
        let logits = leaky_relu(&pre2).column(0).to_owned();
        (
            logits,
            EdgeCache {
                bn1,
                pre1,
                h1,
                bn2,
                pre2,
            },
        )
    }

    fn backward(&mut self, features: &Array2<f64>, cache: &EdgeCache, dlogits: &Array1<f64>) {
        let d = dlogits.view().insert_axis(Axis(1)).to_owned();
        let d = leaky_relu_backward(&cache.pre2, &d);
        let d = self.bn2.backward(&cache.bn2, &d);
        let d = self.fc2.backward(&cache.h1, &d);
        let d = leaky_relu_backward(&cache.pre1, &d);
        let d = self.bn1.backward(&cache.bn1, &d);
        self.fc1.backward(features, &d);
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut out = self.fc1.named_params(&format!("{prefix}.fc1"));
        out.extend(self.bn1.named_params(&format!("{prefix}.bn1")));
        out.extend(self.fc2.named_params(&format!("{prefix}.fc2")));
        out.extend(self.bn2.named_params(&format!("{prefix}.bn2")));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.fc1.params_mut();
        out.extend(self.bn1.params_mut());
        out.extend(self.fc2.params_mut());
        out.extend(self.bn2.params_mut());
        out
    }
}

/// One graph module: learned adjacency, node transform, message passing,
/// batch norm and exponential-linear activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MgmHead {
    pub scorer: EdgeScorer,
    pub transform: Linear,
    pub norm: BatchNorm,
}

struct HeadCache {
    edge: EdgeCache,
    weights: Array1<f64>,
    projected: Array2<f64>,
    bn: BatchNormCache,
    pre_act: Array2<f64>,
}

impl MgmHead {
    fn new(rng: &mut crate::rng::Rng, config: &MmgnConfig) -> Self {
        Self {
            scorer: EdgeScorer::new(rng, config.bins, config.edge_hidden),
            transform: Linear::new(rng, config.input_dim, config.hidden_dim, false),
            norm: BatchNorm::new(config.hidden_dim),
        }
    }

    fn forward(&self, graph: &VideoGraph, x: &Array2<f64>) -> (Array2<f64>, HeadCache) {
        let (logits, edge) = self.scorer.forward(&graph.features);
        let weights = row_softmax(graph, &logits);
        let projected = self.transform.forward(x);
        let (pre_act, bn) = self.norm.forward(&spmm(graph, &weights, &projected));
        let z = elu(&pre_act);
        (
            z,
            HeadCache {
                edge,
                weights,
                projected,
                bn,
                pre_act,
            },
        )
    }

    fn backward(&mut self, graph: &VideoGraph, x: &Array2<f64>, cache: &HeadCache, dz: &Array2<f64>) {
        let d = elu_backward(&cache.pre_act, dz);
        let d = self.norm.backward(&cache.bn, &d);
        let (dw, dp) = spmm_backward(graph, &cache.weights, &cache.projected, &d);
        self.transform.backward(x, &dp);
        let dlogits = row_softmax_backward(graph, &cache.weights, &dw);
        self.scorer.backward(&graph.features, &cache.edge, &dlogits);
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut out = self.scorer.named_params(&format!("{prefix}.scorer"));
        out.extend(self.transform.named_params(&format!("{prefix}.transform")));
        out.extend(self.norm.named_params(&format!("{prefix}.norm")));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.scorer.params_mut();
        out.extend(self.transform.params_mut());
        out.extend(self.norm.params_mut());
        out
    }
}

/// Classifier graph module: its own learned adjacency and an affine map to
/// class logits, without the final normalization and activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MgmClassifier {
    pub scorer: EdgeScorer,
    pub transform: Linear,
}

struct ClassifierCache {
    edge: EdgeCache,
    weights: Array1<f64>,
    projected: Array2<f64>,
}

impl MgmClassifier {
    fn forward(&self, graph: &VideoGraph, z: &Array2<f64>) -> (Array2<f64>, ClassifierCache) {
        let (logits, edge) = self.scorer.forward(&graph.features);
        let weights = row_softmax(graph, &logits);
        let projected = self.transform.forward(z);
        let out = spmm(graph, &weights, &projected);
        (
            out,
            ClassifierCache {
                edge,
                weights,
                projected,
            },
        )
    }

    fn backward(
        &mut self,
        graph: &VideoGraph,
        z: &Array2<f64>,
        cache: &ClassifierCache,
        dout: &Array2<f64>,
    ) -> Array2<f64> {
        let (dw, dp) = spmm_backward(graph, &cache.weights, &cache.projected, dout);
        let dz = self.transform.backward(z, &dp);
        let dlogits = row_softmax_backward(graph, &cache.weights, &dw);
        self.scorer.backward(&graph.features, &cache.edge, &dlogits);
        dz
    }
}

/// Forward pass of one head, exposing the learned adjacency.
pub fn mgm_forward(head: &MgmHead, graph: &VideoGraph, x: &Array2<f64>) -> (Array2<f64>, Adjacency) {
    let (z, cache) = head.forward(graph, x);
    (
        z,
        Adjacency {
            n: graph.n,
            row_ptr: graph.row_ptr.clone(),
            cols: graph.cols.clone(),
            weights: cache.weights,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmgnOutput {
    /// Concatenated head outputs, `N x (heads * hidden_dim)`.
    pub z: Array2<f64>,
    pub logits: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub losses: Vec<f64>,
}

/// Multi-head graph network with a graph-module classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MmgnModel {
    pub config: MmgnConfig,
    pub heads: Vec<MgmHead>,
    pub classifier: MgmClassifier,
}

impl MmgnModel {
    pub fn new(config: MmgnConfig, seed: u64) -> Result<Self> {
        if config.heads == 0 || config.hidden_dim == 0 || config.input_dim == 0 {
            return Err(Error::param("heads", "heads, hidden_dim and input_dim must be > 0"));
        }
        if config.bins < 2 {
            return Err(Error::param("bins", "must be >= 2"));
        }
        let heads = (0..config.heads)
            .map(|h| MgmHead::new(&mut rng_for(seed, "mmgn-head", h as u64), &config))
            .collect();
        let mut rng = rng_for(seed, "mmgn-classifier", 0);
        let classifier = MgmClassifier {
            scorer: EdgeScorer::new(&mut rng, config.bins, config.edge_hidden),
            transform: Linear::new(&mut rng, config.output_dim(), config.n_classes.max(1), true),
        };
        Ok(Self {
            config,
            heads,
            classifier,
        })
    }

    fn check_shapes(&self, graph: &VideoGraph, x: &Array2<f64>) -> Result<()> {
        if x.nrows() != graph.n {
            return Err(Error::Shape(format!(
                "{} feature rows for a graph of {} nodes",
                x.nrows(),
                graph.n
            )));
        }
        if x.ncols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "feature width {} but the model expects {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        if graph.features.ncols() != self.config.bins {
            return Err(Error::Shape(format!(
                "{} histogram bins but the model expects {}",
                graph.features.ncols(),
                self.config.bins
            )));
        }
        Ok(())
    }

    fn heads_forward(&self, graph: &VideoGraph, x: &Array2<f64>) -> (Array2<f64>, Vec<HeadCache>) {
        let outs: Vec<(Array2<f64>, HeadCache)> =
            self.heads.par_iter().map(|h| h.forward(graph, x)).collect();
        let views: Vec<_> = outs.iter().map(|(z, _)| z.view()).collect();
        let z = concatenate(Axis(1), &views).expect("head outputs share a row count");
        (z, outs.into_iter().map(|(_, c)| c).collect())
    }

    pub fn forward(&self, graph: &VideoGraph, x: &Array2<f64>) -> Result<MmgnOutput> {
        self.check_shapes(graph, x)?;
        let (z, _) = self.heads_forward(graph, x);
        let (logits, _) = self.classifier.forward(graph, &z);
        Ok(MmgnOutput { z, logits })
    }

    /// Multimodal features `Z` (the concatenated head outputs).
    pub fn extract_features(&self, graph: &VideoGraph, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_shapes(graph, x)?;
        Ok(self.heads_forward(graph, x).0)
    }

    /// Zeroes gradients, runs forward and backward, and returns the loss.
    pub fn loss_and_grad(
        &mut self,
        graph: &VideoGraph,
        x: &Array2<f64>,
        targets: &[Option<usize>],
        train: &MmgnTrainConfig,
    ) -> Result<f64> {
        self.check_shapes(graph, x)?;
        if targets.len() != graph.n {
            return Err(Error::Shape(format!(
                "{} targets for {} nodes",
                targets.len(),
                graph.n
            )));
        }
        self.zero_grad();
        let (z, head_caches) = self.heads_forward(graph, x);
        let (logits, cls_cache) = self.classifier.forward(graph, &z);
        let (mut loss, dlogits) = nn::softmax_cross_entropy(&logits, targets);
        let mut dz = self.classifier.backward(graph, &z, &cls_cache, &dlogits);

        if train.triplet {
            let labeled: Vec<usize> = (0..graph.n).filter(|&i| targets[i].is_some()).collect();
            let labels: Vec<usize> = labeled.iter().map(|&i| targets[i].unwrap()).collect();
            let sub = z.select(Axis(0), &labeled);
            let (unit, norms) = nn::l2_normalize_rows(&sub);
            let trip = nn::batch_hard_triplet(&unit, &labels, train.margin);
            loss += trip.loss;
            let dsub = nn::l2_normalize_rows_backward(&unit, &norms, &trip.grad);
            for (k, &i) in labeled.iter().enumerate() {
                let mut row = dz.row_mut(i);
                row += &dsub.row(k);
            }
        }

        let width = self.config.hidden_dim;
        self.heads
            .par_iter_mut()
            .zip(head_caches.par_iter())
            .enumerate()
            .for_each(|(h, (head, cache))| {
                let dz_h = dz.slice(s![.., h * width..(h + 1) * width]).to_owned();
                head.backward(graph, x, cache, &dz_h);
            });
        Ok(loss)
    }

    /// Full-graph training on (partial) labels: one optimizer step per epoch.
    pub fn train(
        &mut self,
        graph: &VideoGraph,
        x: &Array2<f64>,
        targets: &[Option<usize>],
        train: &MmgnTrainConfig,
    ) -> Result<TrainSummary> {
        let classes: std::collections::BTreeSet<usize> = targets.iter().flatten().copied().collect();
        let labeled = targets.iter().flatten().count();
        if classes.len() < 2 || labeled < 2 {
            return Err(Error::Insufficient(format!(
                "graph training needs 2 labeled classes, got {} classes over {labeled} nodes",
                classes.len()
            )));
        }
        if classes.iter().any(|&c| c >= self.config.n_classes) {
            return Err(Error::Shape("label id exceeds the classifier width".into()));
        }
        let mut opt = Adam::new(AdamConfig::new(train.lr, train.weight_decay));
        let mut losses = Vec::with_capacity(train.epochs);
        for _ in 0..train.epochs {
            losses.push(self.loss_and_grad(graph, x, targets, train)?);
            opt.step(self.params_mut());
        }
        Ok(TrainSummary { losses })
    }
}

impl Parameterized for MmgnModel {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (h, head) in self.heads.iter().enumerate() {
            out.extend(head.named_params(&format!("head{h}")));
        }
        out.extend(self.classifier.scorer.named_params("classifier.scorer"));
        out.extend(self.classifier.transform.named_params("classifier.transform"));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for head in &mut self.heads {
            out.extend(head.params_mut());
        }
        out.extend(self.classifier.scorer.params_mut());
        out.extend(self.classifier.transform.params_mut());
        out
    }
}
