//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wireless_reid::graph::{average_affinity, build_histograms, mgm_forward, MmgnConfig, MmgnModel, VideoGraph};
use wireless_reid::mmda::{build_similarity_tensor, path_consistency, Cluster, ClusterSet, WirelessSimilarityTensor};
use wireless_reid::nn::{Param, Parameterized};
use wireless_reid::scenario::{Camera, Point, Sample, WirelessTrajectory};
use wireless_reid::sensing::{extract_fragments, RelatedVideoSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A few cameras and one random-walk trajectory on a 100 m square.
pub fn random_world(seed: u64) -> (Vec<Camera>, WirelessTrajectory, f64) {
    let mut r = rng(seed);
    let cameras: Vec<Camera> = (0..r.random_range(1..=4))
        .map(|id| Camera {
            id,
            position: Point::new(r.random_range(0.0..100.0), r.random_range(0.0..100.0)),
            view_radius: 10.0,
        })
        .collect();
    let (mut x, mut y) = (r.random_range(0.0..100.0), r.random_range(0.0..100.0));
    let samples = (0..r.random_range(1..80))
        .map(|k| {
            x += r.random_range(-8.0..8.0);
            y += r.random_range(-8.0..8.0);
            Sample { t: k as f64, x, y }
        })
        .collect();
    let trajectory = WirelessTrajectory {
        id: 0,
        signal_id: "phone-0".into(),
        samples,
    };
    (cameras, trajectory, r.random_range(5.0..40.0))
}

/// Maximal runs of consecutive in-disc samples as `(camera, first, last)`,
/// ordered by first sample then camera.
pub fn disc_runs(cameras: &[Camera], trajectory: &WirelessTrajectory, radius: f64) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    for cam in cameras {
        let inside: Vec<bool> = trajectory
            .samples
            .iter()
            .map(|s| {
                let (dx, dy) = (s.x - cam.position.x, s.y - cam.position.y);
                dx * dx + dy * dy < radius * radius
            })
            .collect();
        let mut k = 0;
        while k < inside.len() {
            if inside[k] {
                let first = k;
                while k + 1 < inside.len() && inside[k + 1] {
                    k += 1;
                }
                runs.push((cam.id, first, k));
            }
            k += 1;
        }
    }
    runs.sort_by_key(|&(c, first, _)| (first, c));
    runs
}

/// Compares fragment extraction against the point-in-disc recount.
pub fn check_fragments(seed: u64) -> Result<(), String> {
    let (cameras, trajectory, radius) = random_world(seed);
    let fragments = extract_fragments(&trajectory, &cameras, radius);
    let runs = disc_runs(&cameras, &trajectory, radius);
    if fragments.len() != runs.len() {
        return Err(format!("seed {seed}: {} fragments, oracle {}", fragments.len(), runs.len()));
    }
    for (k, (f, &(cam, first, last))) in fragments.iter().zip(&runs).enumerate() {
        let ordinal = runs[..k].iter().filter(|r| r.0 == cam).count();
        let ok = f.fragment_index == k
            && f.camera_id == cam
            && f.sample_range == (first, last)
            && f.visit_key == (cam, ordinal)
            && f.interval.start == trajectory.samples[first].t
            && f.interval.end == trajectory.samples[last].t;
        if !ok {
            return Err(format!("seed {seed}: fragment {k} is {f:?}, oracle {:?}", (cam, first, last)));
        }
    }
    Ok(())
}

/// Compares path consistency with a direct recount on random related sets.
pub fn check_path_consistency(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n_videos = r.random_range(1..20);
    let related: Vec<RelatedVideoSet> = (0..r.random_range(0..8))
        .map(|k| RelatedVideoSet {
            trajectory_id: 0,
            fragment_index: k,
            video_ids: (0..n_videos).filter(|_| r.random::<f64>() < 0.3).collect(),
        })
        .collect();
    let cluster: Vec<usize> = (0..n_videos).filter(|_| r.random::<f64>() < 0.3).collect();
    let mut touched = 0usize;
    for set in &related {
        let mut hit = false;
        for v in &set.video_ids {
            for c in &cluster {
                hit |= v == c;
            }
        }
        touched += hit as usize;
    }
    let want = if related.is_empty() {
        0.0
    } else {
        touched as f64 / related.len() as f64
    };
    let got = path_consistency(&cluster.iter().copied().collect::<BTreeSet<_>>(), &related);
    if got == want {
        Ok(())
    } else {
        Err(format!("seed {seed}: consistency {got}, recount {want}"))
    }
}

/// Similarity tensor from random two-cluster splits per trajectory.
pub fn random_tensor(n: usize, m: usize, seed: u64) -> WirelessSimilarityTensor {
    let mut r = rng(seed);
    let sets: Vec<ClusterSet> = (0..m)
        .map(|t| {
            let members: Vec<usize> = (0..n).filter(|_| r.random::<f64>() < 0.5).collect();
            let split = r.random_range(0..=members.len());
            ClusterSet {
                trajectory_id: t,
                clusters: vec![
                    Cluster {
                        video_ids: members[..split].to_vec(),
                        consistency: r.random_range(0.0..=1.0),
                    },
                    Cluster {
                        video_ids: members[split..].to_vec(),
                        consistency: r.random_range(0.0..=1.0),
                    },
                ],
            }
        })
        .collect();
    build_similarity_tensor(&sets, n, m)
}

pub fn random_graph(n: usize, m: usize, bins: usize, seed: u64) -> VideoGraph {
    let t = random_tensor(n, m, seed);
    VideoGraph::new(&build_histograms(&t, bins).unwrap(), &average_affinity(&t).unwrap()).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
}

/// Largest relative error between analytic and central-difference gradients
/// over all parameters. `loss` must zero and refill the gradients.
pub fn max_relative_gradient_error<M, F>(model: &M, mut loss: F) -> (f64, String)
where
    M: Parameterized + Clone,
    F: FnMut(&mut M) -> f64,
{
    let mut base = model.clone();
    loss(&mut base);
    let analytic: Vec<(String, Array2<f64>)> = base
        .named_params()
        .into_iter()
        .map(|(n, p): (String, &Param)| (n, p.grad.clone()))
        .collect();
    let h = 1e-6;
    let mut worst = (0.0, String::new());
    for (k, (name, grad)) in analytic.iter().enumerate() {
        let mut numeric = Array2::zeros(grad.raw_dim());
        for idx in 0..grad.len() {
            let mut eval = |delta: f64| {
                let mut m = model.clone();
                m.params_mut()[k].value.as_slice_mut().unwrap()[idx] += delta;
                loss(&mut m)
            };
            numeric.as_slice_mut().unwrap()[idx] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        let diff = (&numeric - grad).mapv(|v| v * v).sum().sqrt();
        let scale = numeric.mapv(|v| v * v).sum().sqrt().max(1e-7);
        let rel = diff / scale;
        if rel > worst.0 || worst.1.is_empty() {
            worst = (rel, name.clone());
        }
    }
    worst
}

/// Every learned adjacency row of a random graph with `n` nodes sums to one
/// and is zero off the support of the average affinity.
pub fn check_adjacency(n: usize, seed: u64) -> Result<(), String> {
    let t = random_tensor(n, 1 + seed as usize % 4, seed);
    let affinity = average_affinity(&t).unwrap();
    let graph = VideoGraph::new(&build_histograms(&t, 8).unwrap(), &affinity).unwrap();
    let config = MmgnConfig {
        input_dim: 5,
        hidden_dim: 3,
        heads: 2,
        bins: 8,
        edge_hidden: 16,
        n_classes: 2,
    };
    let model = MmgnModel::new(config, seed).unwrap();
    let x = random_matrix(n, 5, seed);
    for head in &model.heads {
        let (_, adj) = mgm_forward(head, &graph, &x);
        let dense = adj.to_dense();
        for i in 0..n {
            let sum = dense.row(i).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(format!("n {n} seed {seed}: row {i} sums to {sum}"));
            }
            for j in 0..n {
                if affinity.get(i, j) == 0.0 && dense[[i, j]] != 0.0 {
                    return Err(format!("n {n} seed {seed}: weight at ({i}, {j}) off the support"));
                }
            }
        }
    }
    Ok(())
}
