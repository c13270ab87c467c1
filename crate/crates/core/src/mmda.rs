//! Multimodal data association.
//!
//! For every trajectory the videos related to its fragments are clustered
//! with k-means, the number of clusters being estimated from label-free
//! counts. Each cluster is scored by how many of the trajectory's fragments it
//! touches, and every pair of videos sharing a cluster receives that score as
//! their wireless similarity under the trajectory.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::sensing::{RelatedVideoSet, Sensing, TrajectorySensing};

const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub video_ids: Vec<usize>,
    /// Path consistency `Q / R_m`.
    pub consistency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub trajectory_id: usize,
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

/// Cluster count for one trajectory:
/// `clamp(round(lambda * related_total * M / sum_R), 1, distinct related videos)`.
///
/// `fragment_counts` holds `R_m` for every trajectory, including those that
/// never produced a fragment.
pub fn estimate_cluster_count(
    sensing: &TrajectorySensing,
    fragment_counts: &[usize],
    lambda: f64,
) -> Result<usize> {
    let total_fragments: usize = fragment_counts.iter().sum();
    if total_fragments == 0 {
        return Err(Error::Estimation("no wireless fragments were sensed".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    let distinct = sensing.distinct_videos().len();
    if distinct == 0 {
        return Err(Error::Estimation(format!(
            "trajectory {} has no related videos",
            sensing.trajectory_id
        )));
    }
    let raw = lambda * sensing.related_total() as f64 * fragment_counts.len() as f64
        / total_fragments as f64;
    // Round half up.
    let k = (raw + 0.5).floor() as usize;
    Ok(k.clamp(1, distinct))
}

fn unit_rows(features: ArrayView2<f64>) -> Array2<f64> {
    let mut out = features.to_owned();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Seeded k-means on unit-normalized rows.
///
/// Seeding starts from a random row and greedily adds the row farthest from
/// all chosen seeds (ties to the lowest index). Lloyd iterations run until the
/// assignment stops changing or 100 iterations elapse; a cluster that empties
/// is re-seeded with the row farthest from its current centroid. A `k` larger
/// than the number of rows is lowered to it.
pub fn kmeans(features: ArrayView2<f64>, k: usize, seed: u64) -> Vec<usize> {
    let n = features.nrows();
    if n == 0 {
        return Vec::new();
    }
    let k = if k > n {
        log::debug!("k-means: k={k} exceeds {n} points, lowering");
        n
    } else {
        k.max(1)
    };
    let x = unit_rows(features);
    let dim = x.ncols();

    let mut rng = rng_for(seed, "kmeans", 0);
    let mut seeds = vec![rng.random_range(0..n)];
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_dist(x.row(i), x.row(seeds[0])))
        .collect();
    while seeds.len() < k {
        let mut best = 0usize;
        for i in 1..n {
            if min_d[i] > min_d[best] {
                best = i;
            }
        }
        // Duplicated rows leave no positive distance; take the first unused row.
        if min_d[best] <= 0.0 {
            best = (0..n).find(|i| !seeds.contains(i)).unwrap_or(best);
        }
        seeds.push(best);
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(best)));
        }
    }
    let mut centroids = Array2::zeros((k, dim));
    for (c, &s) in seeds.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(s));
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let next: Vec<usize> = (0..n).map(|i| nearest(x.row(i), &centroids).0).collect();
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &x.row(i);
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mut row = sums.row_mut(c);
                row /= count as f64;
                centroids.row_mut(c).assign(&row);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(x.row(a), centroids.row(assignment[a]));
                        let db = sq_dist(x.row(b), centroids.row(assignment[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                centroids.row_mut(c).assign(&x.row(far));
                counts[assignment[far]] -= 1;
                assignment[far] = c;
                counts[c] = 1;
            }
        }
    }
    assignment
}

/// Path consistency of a cluster: the fraction of the trajectory's fragments
/// whose related set shares at least one video with the cluster.
pub fn path_consistency(cluster: &BTreeSet<usize>, related: &[RelatedVideoSet]) -> f64 {
    if related.is_empty() {
        return 0.0;
    }
    let touched = related
        .iter()
        .filter(|r| r.video_ids.iter().any(|v| cluster.contains(v)))
        .count();
    touched as f64 / related.len() as f64
}

/// Sparse `N x N x M` wireless similarity tensor.
///
/// Only off-diagonal nonzero entries are stored, once per unordered pair; the
/// diagonal is 1 for every trajectory by definition.
#[derive(Debug, Clone, PartialEq)]
pub struct WirelessSimilarityTensor {
    pub n_videos: usize,
    pub n_trajectories: usize,
    /// `(i, j)` with `i < j` mapped to `(m, value)` pairs sorted by `m`.
    entries: BTreeMap<(usize, usize), Vec<(usize, f64)>>,
}

impl WirelessSimilarityTensor {
    pub fn empty(n_videos: usize, n_trajectories: usize) -> Self {
        Self {
            n_videos,
            n_trajectories,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, i: usize, j: usize, m: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let key = (i.min(j), i.max(j));
        self.entries
            .get(&key)
            .and_then(|vals| vals.iter().find(|(mm, _)| *mm == m))
            .map_or(0.0, |&(_, v)| v)
    }

    /// Stored values of the unordered pair `{i, j}` with `i != j`.
    pub fn pair_values(&self, i: usize, j: usize) -> &[(usize, f64)] {
        self.entries
            .get(&(i.min(j), i.max(j)))
            .map_or(&[], Vec::as_slice)
    }

    /// Iterates over stored unordered pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<(usize, f64)>)> {
        self.entries.iter()
    }

    pub fn stored_len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Every unordered pair inside a cluster of trajectory `m` receives that
/// cluster's consistency under `m`. Cluster sets must be ordered by `m`.
pub fn build_similarity_tensor(
    cluster_sets: &[ClusterSet],
    n_videos: usize,
    n_trajectories: usize,
) -> WirelessSimilarityTensor {
    let mut tensor = WirelessSimilarityTensor::empty(n_videos, n_trajectories);
    for set in cluster_sets {
        for cluster in &set.clusters {
            if cluster.consistency <= 0.0 {
                continue;
            }
            let mut ids = cluster.video_ids.clone();
            ids.sort_unstable();
            for (a, &i) in ids.iter().enumerate() {
                for &j in &ids[a + 1..] {
                    tensor
                        .entries
                        .entry((i, j))
                        .or_default()
                        .push((set.trajectory_id, cluster.consistency));
                }
            }
        }
    }
    for vals in tensor.entries.values_mut() {
        vals.sort_by_key(|&(m, _)| m);
    }
    tensor
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdaOutput {
    pub cluster_sets: Vec<ClusterSet>,
    pub tensor: WirelessSimilarityTensor,
    /// Estimated cluster count per trajectory (0 for trajectories without related videos).
    pub cluster_counts: Vec<usize>,
}

/// Clusters one trajectory's related videos and scores each cluster.
pub fn associate_trajectory(
    features: ArrayView2<f64>,
    sensing: &TrajectorySensing,
    fragment_counts: &[usize],
    lambda: f64,
    seed: u64,
) -> Result<ClusterSet> {
    let k = estimate_cluster_count(sensing, fragment_counts, lambda)?;
    let members: Vec<usize> = sensing.distinct_videos().into_iter().collect();
    let rows = features.select(ndarray::Axis(0), &members);
    let assignment = kmeans(rows.view(), k, crate::rng::derive_seed(seed, "mmda", sensing.trajectory_id as u64));
    let k_eff = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k_eff];
    for (pos, &c) in assignment.iter().enumerate() {
        groups[c].push(members[pos]);
    }
    let clusters = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|video_ids| {
            let set: BTreeSet<usize> = video_ids.iter().copied().collect();
            Cluster {
                consistency: path_consistency(&set, &sensing.related),
                video_ids,
            }
        })
        .collect();
    Ok(ClusterSet {
        trajectory_id: sensing.trajectory_id,
        clusters,
    })
}

/// Full association over all trajectories. Trajectories without related
/// videos contribute nothing; zero fragments overall is an estimation error.
pub fn run_mmda(
    features: ArrayView2<f64>,
    sensing: &Sensing,
    lambda: f64,
    seed: u64,
) -> Result<MmdaOutput> {
    if sensing.trajectories.is_empty() {
        return Ok(MmdaOutput {
            cluster_sets: Vec::new(),
            tensor: WirelessSimilarityTensor::empty(features.nrows(), 0),
            cluster_counts: Vec::new(),
        });
    }
    let counts = sensing.fragment_counts();
    if counts.iter().sum::<usize>() == 0 {
        return Err(Error::Estimation("no wireless fragments were sensed".into()));
    }
    let per_trajectory: Vec<Option<ClusterSet>> = sensing
        .trajectories
        .par_iter()
        .map(|ts| {
            if ts.distinct_videos().is_empty() {
                Ok(None)
            } else {
                associate_trajectory(features, ts, &counts, lambda, seed).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let cluster_counts = per_trajectory
        .iter()
        .map(|c| c.as_ref().map_or(0, ClusterSet::k))
        .collect();
    let cluster_sets: Vec<ClusterSet> = per_trajectory.into_iter().flatten().collect();
    let tensor = build_similarity_tensor(&cluster_sets, features.nrows(), sensing.trajectories.len());
    Ok(MmdaOutput {
        cluster_sets,
        tensor,
        cluster_counts,
    })
}

/// Per-trajectory estimated `K_m` alongside the ground-truth number of
/// distinct identities among its related videos.
pub fn cluster_count_deviation(
    sensing: &Sensing,
    lambda: f64,
    video_identities: &[usize],
) -> Result<Vec<(usize, usize)>> {
    let counts = sensing.fragment_counts();
    sensing
        .trajectories
        .iter()
        .filter(|ts| !ts.distinct_videos().is_empty())
        .map(|ts| {
            let k = estimate_cluster_count(ts, &counts, lambda)?;
            let truth: BTreeSet<usize> = ts
                .distinct_videos()
                .iter()
                .map(|&v| video_identities[v])
                .collect();
            Ok((k, truth.len()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::WirelessFragment;
    use crate::scenario::Interval;

    fn related(sets: &[&[usize]]) -> Vec<RelatedVideoSet> {
        sets.iter()
            .enumerate()
            .map(|(r, ids)| RelatedVideoSet {
                trajectory_id: 0,
                fragment_index: r,
                video_ids: ids.iter().copied().collect(),
            })
            .collect()
    }

    fn trajectory_sensing(id: usize, sets: &[&[usize]]) -> TrajectorySensing {
        TrajectorySensing {
            trajectory_id: id,
            fragments: (0..sets.len())
                .map(|r| WirelessFragment {
                    trajectory_id: id,
                    fragment_index: r,
                    camera_id: r,
                    interval: Interval::new(r as f64, r as f64 + 1.0),
                    visit_key: (r, 0),
                    sample_range: (r, r),
                })
                .collect(),
            related: related(sets),
        }
    }

    #[test]
    fn cluster_count_with_unit_ratios() {
        let ts = trajectory_sensing(0, &[&[0, 1, 2, 3, 4]]);
        assert_eq!(estimate_cluster_count(&ts, &[1], 1.0).unwrap(), 5);
    }

    #[test]
    fn cluster_count_rounds_half_up_and_clamps() {
        // 3 related entries, M = 2, sum R = 4, lambda = 1 -> 1.5 -> 2
        let ts = trajectory_sensing(0, &[&[0, 1], &[2]]);
        assert_eq!(estimate_cluster_count(&ts, &[2, 2], 1.0).unwrap(), 2);
        // lambda large -> clamp to 3 distinct videos
        assert_eq!(estimate_cluster_count(&ts, &[2, 2], 10.0).unwrap(), 3);
        // tiny lambda -> clamp to 1
        assert_eq!(estimate_cluster_count(&ts, &[2, 2], 0.01).unwrap(), 1);
    }

    #[test]
    fn zero_fragments_is_an_estimation_error() {
        let ts = trajectory_sensing(0, &[]);
        assert!(matches!(
            estimate_cluster_count(&ts, &[0, 0], 3.0),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn worked_consistency_values() {
        let rel = related(&[&[1, 2, 3, 4, 5], &[6, 7], &[8, 9], &[10, 11]]);
        let c7: BTreeSet<usize> = [2, 9, 11].into_iter().collect();
        assert_eq!(path_consistency(&c7, &rel), 0.75);
        let c3: BTreeSet<usize> = [1, 6, 8, 10].into_iter().collect();
        assert_eq!(path_consistency(&c3, &rel), 1.0);
    }

    #[test]
    fn revisits_count_as_separate_fragments() {
        // Same video relates to two fragments (two visits of one camera).
        let rel = related(&[&[1, 2], &[3], &[1, 4]]);
        let c: BTreeSet<usize> = [1].into_iter().collect();
        assert!((path_consistency(&c, &rel) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kmeans_k_equal_n_gives_singletons() {
        let x = ndarray::array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.2]];
        let mut a = kmeans(x.view(), 4, 3);
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_lowers_oversized_k() {
        let x = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        let a = kmeans(x.view(), 5, 3);
        assert_eq!(a.len(), 2);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let x = Array2::from_shape_fn((30, 4), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        assert_eq!(kmeans(x.view(), 4, 9), kmeans(x.view(), 4, 9));
    }

    #[test]
    fn tensor_entries_follow_clusters() {
        let sets = vec![
            ClusterSet {
                trajectory_id: 0,
                clusters: vec![
                    Cluster { video_ids: vec![0, 2, 3], consistency: 0.75 },
                    Cluster { video_ids: vec![1], consistency: 0.25 },
                ],
            },
            ClusterSet {
                trajectory_id: 2,
                clusters: vec![Cluster { video_ids: vec![3, 0], consistency: 1.0 }],
            },
        ];
        let t = build_similarity_tensor(&sets, 5, 3);
        assert_eq!(t.get(2, 2, 1), 1.0);
        assert_eq!(t.get(0, 2, 0), 0.75);
        assert_eq!(t.get(2, 0, 0), 0.75);
        assert_eq!(t.get(0, 3, 2), 1.0);
        assert_eq!(t.get(0, 3, 1), 0.0);
        assert_eq!(t.get(1, 4, 0), 0.0);
        assert_eq!(t.pair_values(3, 0), &[(0, 0.75), (2, 1.0)]);
        assert_eq!(t.stored_len(), 4);
    }

    #[test]
    fn zero_trajectories_give_an_empty_tensor() {
        let sensing = Sensing { sensing_radius_m: 10.0, trajectories: vec![] };
        let x = Array2::<f64>::zeros((3, 2));
        let out = run_mmda(x.view(), &sensing, 3.0, 1).unwrap();
        assert!(out.tensor.is_empty());
        assert_eq!(out.tensor.n_trajectories, 0);
    }

    #[test]
    fn no_fragments_is_an_error_for_run() {
        let sensing = Sensing {
            sensing_radius_m: 10.0,
            trajectories: vec![trajectory_sensing(0, &[])],
        };
        let x = Array2::<f64>::zeros((3, 2));
        assert!(matches!(run_mmda(x.view(), &sensing, 3.0, 1), Err(Error::Estimation(_))));
    }
}
