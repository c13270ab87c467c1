//! Graph side of the pipeline: the dense average affinity, per-pair
//! histograms of wireless similarity, and the multi-head graph network that
//! learns its adjacency from those histograms.

mod model;

pub use model::{
    mgm_forward, Adjacency, EdgeScorer, MgmHead, MgmClassifier, MmgnConfig, MmgnModel,
    MmgnOutput, MmgnTrainConfig, TrainSummary,
};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mmda::WirelessSimilarityTensor;

pub const DEFAULT_BINS: usize = 32;

/// `A_avg[i][j] = sum_m S[i][j][m] / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAffinity {
    pub matrix: Array2<f64>,
}

impl DenseAffinity {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[[i, j]]
    }
}

pub fn average_affinity(tensor: &WirelessSimilarityTensor) -> Result<DenseAffinity> {
    let m = tensor.n_trajectories;
    if m == 0 {
        return Err(Error::NoTrajectories);
    }
    let n = tensor.n_videos;
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        matrix[[i, i]] = 1.0;
    }
    for (&(i, j), values) in tensor.pairs() {
        let v = values.iter().map(|&(_, s)| s).sum::<f64>() / m as f64;
        matrix[[i, j]] = v;
        matrix[[j, i]] = v;
    }
    Ok(DenseAffinity { matrix })
}

/// Bin of a similarity value in `[0, 1]`: `min(floor(v * bins), bins - 1)`.
pub fn bin_index(value: f64, bins: usize) -> usize {
    ((value * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Normalized histogram of the `M` similarity values of pair `(i, j)`.
/// Trajectories without a stored entry contribute to bin 0.
pub fn similarity_histogram(
    tensor: &WirelessSimilarityTensor,
    i: usize,
    j: usize,
    bins: usize,
) -> Vec<f64> {
    let m = tensor.n_trajectories;
    let mut hist = vec![0.0; bins];
    if m == 0 {
        hist[0] = 1.0;
        return hist;
    }
    if i == j {
        hist[bins - 1] = 1.0;
        return hist;
    }
    let stored = tensor.pair_values(i, j);
    for &(_, v) in stored {
        hist[bin_index(v, bins)] += 1.0;
    }
    hist[0] += (m - stored.len()) as f64;
    hist.iter_mut().for_each(|h| *h /= m as f64);
    hist
}

/// Histograms of every pair in the support of the average affinity, diagonal
/// included, both orientations, ordered row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHistogram {
    pub bins: usize,
    pub pairs: Vec<(usize, usize)>,
    /// One row per entry of `pairs`.
    pub values: Array2<f64>,
}

impl SimilarityHistogram {
    pub fn get(&self, i: usize, j: usize) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.pairs
            .binary_search(&(i, j))
            .ok()
            .map(|k| self.values.row(k))
    }
}

pub fn build_histograms(
    tensor: &WirelessSimilarityTensor,
    bins: usize,
) -> Result<SimilarityHistogram> {
    if bins < 2 {
        return Err(Error::param("bins", format!("must be >= 2, got {bins}")));
    }
    if tensor.n_trajectories == 0 {
        return Err(Error::NoTrajectories);
    }
    let n = tensor.n_videos;
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for (&(i, j), _) in tensor.pairs() {
        pairs.push((i, j));
        pairs.push((j, i));
    }
    pairs.sort_unstable();
    let mut values = Array2::zeros((pairs.len(), bins));
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let h = similarity_histogram(tensor, i, j, bins);
        values.row_mut(k).assign(&ndarray::Array1::from(h));
    }
    Ok(SimilarityHistogram {
        bins,
        pairs,
        values,
    })
}

/// Edge list of the video graph in CSR order: the histogram pairs whose
/// average affinity is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoGraph {
    pub n: usize,
    /// `row_ptr[i]..row_ptr[i + 1]` indexes the edges leaving node `i`.
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    /// Edge features, one histogram per edge.
    pub features: Array2<f64>,
}

impl VideoGraph {
    pub fn new(hist: &SimilarityHistogram, affinity: &DenseAffinity) -> Result<Self> {
        let n = affinity.n();
        let keep: Vec<usize> = hist
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, &(i, j))| i < n && j < n && affinity.get(i, j) > 0.0)
            .map(|(k, _)| k)
            .collect();
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(keep.len());
        for &k in &keep {
            let (i, j) = hist.pairs[k];
            row_ptr[i + 1] += 1;
            cols.push(j);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
            if row_ptr[i + 1] == row_ptr[i] {
                return Err(Error::Shape(format!(
                    "node {i} has no edges; the affinity support must include the diagonal"
                )));
            }
        }
        let features = hist.values.select(ndarray::Axis(0), &keep);
        Ok(Self {
            n,
            row_ptr,
            cols,
            features,
        })
    }

    /// Graph with only self loops: every node sees the all-ones diagonal histogram.
    pub fn self_loops(n: usize, bins: usize) -> Self {
        let mut features = Array2::zeros((n, bins));
        features.column_mut(bins - 1).fill(1.0);
        Self {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            features,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.cols.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |e| (e, i, self.cols[e]))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmda::{build_similarity_tensor, Cluster, ClusterSet};

    fn tensor_with(values: &[(usize, f64)], m: usize) -> WirelessSimilarityTensor {
        let sets: Vec<ClusterSet> = values
            .iter()
            .map(|&(traj, p)| ClusterSet {
                trajectory_id: traj,
                clusters: vec![Cluster {
                    video_ids: vec![0, 1],
                    consistency: p,
                }],
            })
            .collect();
        build_similarity_tensor(&sets, 3, m)
    }

    #[test]
    fn affinity_diagonal_and_single_entry() {
        let t = tensor_with(&[(2, 0.75)], 4);
        let a = average_affinity(&t).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(2, 2), 1.0);
        assert_eq!(a.get(0, 1), 0.1875);
        assert_eq!(a.get(1, 0), 0.1875);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn affinity_requires_a_trajectory() {
        let t = WirelessSimilarityTensor::empty(3, 0);
        assert!(matches!(average_affinity(&t), Err(Error::NoTrajectories)));
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(bin_index(0.0, 32), 0);
        assert_eq!(bin_index(0.75, 32), 24);
        assert_eq!(bin_index(1.0, 32), 31);
        let t = tensor_with(&[(2, 0.75), (3, 1.0)], 4);
        let h = similarity_histogram(&t, 0, 1, 32);
        assert_eq!(h[0], 0.5);
        assert_eq!(h[24], 0.25);
        assert_eq!(h[31], 0.25);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
        let d = similarity_histogram(&t, 2, 2, 32);
        assert_eq!(d[31], 1.0);
        let z = similarity_histogram(&t, 0, 2, 32);
        assert_eq!(z[0], 1.0);
    }

    #[test]
    fn histogram_support_matches_affinity() {
        let t = tensor_with(&[(0, 0.5)], 2);
        let h = build_histograms(&t, 8).unwrap();
        assert_eq!(h.pairs, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)]);
        let a = average_affinity(&t).unwrap();
        let g = VideoGraph::new(&h, &a).unwrap();
        assert_eq!(g.row_ptr, vec![0, 2, 4, 5]);
        assert_eq!(g.cols, vec![0, 1, 0, 1, 2]);
        assert!(build_histograms(&t, 1).is_err());
    }
}
