//! Small dense layers with hand-written backward passes, plus the two
//! optimizers the training loops use.
//!
//! Layers are stateless with respect to activations: `forward` returns the
//! cache that `backward` needs, and `backward` accumulates into each
//! parameter's `grad` and returns the gradient with respect to the input.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

pub const BN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn fan_in_uniform(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (rows.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

/// Anything with an ordered, named list of parameters.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, &Param)>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// `y = x W (+ b)`, with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Linear {
    pub fn new(rng: &mut Rng, input: usize, output: usize, bias: bool) -> Self {
        let weight = Param::new(fan_in_uniform(rng, input, output));
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let bias = bias.then(|| {
            Param::new(Array2::from_shape_simple_fn((1, output), || {
                rng.random_range(-bound..=bound)
            }))
        });
        Self { weight, bias }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.value);
        if let Some(b) = &self.bias {
            y += &b.value;
        }
        y
    }

    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.weight.grad += &x.t().dot(dy);
        if let Some(b) = &mut self.bias {
            b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        dy.dot(&self.weight.value.t())
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut out = vec![(format!("{prefix}.weight"), &self.weight)];
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        out
    }
}

/// Batch normalization over rows, always with the statistics of the current
/// batch (there are no running averages).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
}

pub struct BatchNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Param::new(Array2::ones((1, width))),
            beta: Param::new(Array2::zeros((1, width))),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, BatchNormCache) {
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = centered * &inv_std;
        let y = &xhat * &self.gamma.value + &self.beta.value;
        (y, BatchNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let n = dy.nrows() as f64;
        self.gamma.grad += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &self.gamma.value;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let mut dx = &dxhat * n - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat;
        dx *= &(&cache.inv_std / n);
        dx
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        vec![
            (format!("{prefix}.gamma"), &self.gamma),
            (format!("{prefix}.beta"), &self.beta),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

pub fn leaky_relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

pub fn leaky_relu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |g, &v| {
        if v <= 0.0 {
            *g *= LEAKY_SLOPE
        }
    });
    dx
}

pub fn elu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { v.exp_m1() })
}

pub fn elu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |g, &v| {
        if v <= 0.0 {
            *g *= v.exp()
        }
    });
    dx
}

/// Row-wise L2 normalization. Returns `(y, norms)`.
pub fn l2_normalize_rows(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-12));
    let y = x / &norms.view().insert_axis(Axis(1));
    (y, norms)
}

pub fn l2_normalize_rows_backward(
    y: &Array2<f64>,
    norms: &Array1<f64>,
    dy: &Array2<f64>,
) -> Array2<f64> {
    let dots = (y * dy).sum_axis(Axis(1));
    let mut dx = dy - &(y * &dots.view().insert_axis(Axis(1)));
    dx /= &norms.view().insert_axis(Axis(1));
    dx
}

/// Mean softmax cross-entropy over the rows whose target is `Some`.
/// Returns `(loss, dlogits)`; unlabeled rows get zero gradient.
pub fn softmax_cross_entropy(logits: &Array2<f64>, targets: &[Option<usize>]) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(logits.raw_dim());
    let labeled = targets.iter().filter(|t| t.is_some()).count();
    if labeled == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / labeled as f64;
    let mut loss = 0.0;
    for (i, target) in targets.iter().enumerate() {
        let Some(t) = *target else { continue };
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps = row.mapv(|v| (v - max).exp());
        let z: f64 = exps.sum();
        loss += z.ln() + max - row[t];
        let mut g = grad.row_mut(i);
        g.assign(&(exps / z * scale));
        g[t] -= scale;
    }
    (loss * scale, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput {
    pub loss: f64,
    /// Gradient with respect to the (unit) embeddings.
    pub grad: Array2<f64>,
    /// `(anchor, hardest positive, hardest negative)` per anchor that has both.
    pub selections: Vec<(usize, usize, usize)>,
}

/// Batch-hard triplet loss on unit rows with distance `1 - cos`.
///
/// For each anchor the hardest positive is the same-label row with the lowest
/// cosine and the hardest negative the other-label row with the highest; ties
/// go to the lower row index. The loss is the mean hinge over anchors that
/// have both.
pub fn batch_hard_triplet(emb: &Array2<f64>, labels: &[usize], margin: f64) -> TripletOutput {
    let n = emb.nrows();
    let sims = emb.dot(&emb.t());
    let mut selections = Vec::new();
    for a in 0..n {
        let mut pos: Option<usize> = None;
        let mut neg: Option<usize> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                if pos.is_none_or(|p| sims[[a, j]] < sims[[a, p]]) {
                    pos = Some(j);
                }
            } else if neg.is_none_or(|q| sims[[a, j]] > sims[[a, q]]) {
                neg = Some(j);
            }
        }
        if let (Some(p), Some(q)) = (pos, neg) {
            selections.push((a, p, q));
        }
    }
    let mut grad = Array2::zeros(emb.raw_dim());
    if selections.is_empty() {
        return TripletOutput {
            loss: 0.0,
            grad,
            selections,
        };
    }
    let scale = 1.0 / selections.len() as f64;
    let mut loss = 0.0;
    for &(a, p, q) in &selections {
        let hinge = (1.0 - sims[[a, p]]) - (1.0 - sims[[a, q]]) + margin;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge;
        let (ea, ep, eq) = (emb.row(a).to_owned(), emb.row(p).to_owned(), emb.row(q).to_owned());
        grad.row_mut(a).scaled_add(scale, &(&eq - &ep));
        grad.row_mut(p).scaled_add(-scale, &ea);
        grad.row_mut(q).scaled_add(scale, &ea);
    }
    TripletOutput {
        loss: loss * scale,
        grad,
        selections,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Adam with L2 weight decay folded into the gradient.
pub struct Adam {
    config: AdamConfig,
    step: i32,
    moments: Vec<(Array2<f64>, Array2<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        let c = self.config;
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (Array2::zeros(p.value.raw_dim()), Array2::zeros(p.value.raw_dim())))
                .collect();
        }
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (p, (m, v)) in params.into_iter().zip(self.moments.iter_mut()) {
            let g = &p.grad + &(&p.value * c.weight_decay);
            m.zip_mut_with(&g, |m, &g| *m = c.beta1 * *m + (1.0 - c.beta1) * g);
            v.zip_mut_with(&g, |v, &g| *v = c.beta2 * *v + (1.0 - c.beta2) * g * g);
            ndarray::Zip::from(&mut p.value)
                .and(&*m)
                .and(&*v)
                .for_each(|w, &m, &v| {
                    *w -= c.lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
                });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// SGD with heavy-ball momentum and L2 weight decay.
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<Array2<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        let c = self.config;
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
        }
        for (p, vel) in params.into_iter().zip(self.velocity.iter_mut()) {
            let g = &p.grad + &(&p.value * c.weight_decay);
            vel.zip_mut_with(&g, |v, &g| *v = c.momentum * *v + g);
            p.value.scaled_add(-c.lr, vel);
        }
    }
}
