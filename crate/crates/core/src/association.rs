//! Mutual cross-camera nearest-neighbour association.
//!
//! For every ordered pair of cameras each video looks up its cosine nearest
//! neighbour at the other camera. Pairs that pick each other are merged, and
//! the merged components of size two or more become pseudo-label classes.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partial labeling of videos. Class ids are dense and numbered in order of
/// each class's smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabeling {
    pub labels: Vec<Option<usize>>,
}

impl PseudoLabeling {
    pub fn unlabeled(n: usize) -> Self {
        Self {
            labels: vec![None; n],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.iter().flatten().count()
    }

    pub fn coverage(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.n_labeled() as f64 / self.labels.len() as f64
        }
    }

    /// `(video id, label)` for every labeled video.
    pub fn labeled(&self) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (i, l)))
            .collect()
    }

    /// Number of members per class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes()];
        for l in self.labels.iter().flatten() {
            sizes[*l] += 1;
        }
        sizes
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    pub fn component_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// Turns components of size >= 2 into dense labels ordered by smallest member.
pub fn labels_from_components(uf: &mut UnionFind) -> PseudoLabeling {
    let n = uf.parent.len();
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = vec![None; n];
    for (i, label) in labels.iter_mut().enumerate() {
        if uf.component_size(i) < 2 {
            continue;
        }
        let root = uf.find(i);
        let next = ids.len();
        *label = Some(*ids.entry(root).or_insert(next));
    }
    PseudoLabeling { labels }
}

/// Index of the most cosine-similar candidate, lowest id on ties.
fn nearest(sims: &Array2<f64>, i: usize, candidates: &[usize]) -> usize {
    let mut best = candidates[0];
    for &j in &candidates[1..] {
        if sims[[i, j]] > sims[[i, best]] {
            best = j;
        }
    }
    best
}

/// Mutual nearest-neighbour edges `(i, j)` with `i < j`, in ascending order.
pub fn mutual_pairs(features: ArrayView2<f64>, camera_ids: &[usize]) -> Result<Vec<(usize, usize)>> {
    let n = features.nrows();
    if camera_ids.len() != n {
        return Err(Error::Shape(format!(
            "{} camera ids for {n} feature rows",
            camera_ids.len()
        )));
    }
    let (unit, _) = crate::nn::l2_normalize_rows(&features.to_owned());
    let sims = unit.dot(&unit.t());

    let mut by_camera: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in camera_ids.iter().enumerate() {
        by_camera.entry(c).or_default().push(i);
    }
    let cams: Vec<&Vec<usize>> = by_camera.values().collect();

    let mut pairs = Vec::new();
    for (a, members_a) in cams.iter().enumerate() {
        for members_b in cams.iter().skip(a + 1) {
            let nn_ab: Vec<usize> = members_a.iter().map(|&i| nearest(&sims, i, members_b)).collect();
            for (k, &i) in members_a.iter().enumerate() {
                let j = nn_ab[k];
                if nearest(&sims, j, members_a) == i {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Pseudo labels from mutual cross-camera nearest neighbours.
pub fn nna(features: ArrayView2<f64>, camera_ids: &[usize]) -> Result<PseudoLabeling> {
    let pairs = mutual_pairs(features, camera_ids)?;
    let mut uf = UnionFind::new(features.nrows());
    for (i, j) in pairs {
        uf.union(i, j);
    }
    Ok(labels_from_components(&mut uf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_pair_across_two_cameras() {
        let x = array![[1.0, 0.0], [1.0, 0.0]];
        let l = nna(x.view(), &[0, 1]).unwrap();
        assert_eq!(l.labels, vec![Some(0), Some(0)]);
        assert_eq!(l.coverage(), 1.0);
    }

    #[test]
    fn same_camera_videos_are_never_matched_directly() {
        let x = array![[1.0, 0.0], [1.0, 0.0]];
        let l = nna(x.view(), &[0, 0]).unwrap();
        assert_eq!(l.labels, vec![None, None]);
        assert_eq!(l.coverage(), 0.0);
    }

    #[test]
    fn components_are_transitive_and_ordered_by_smallest_member() {
        // Identity A at cameras 0,1,2 (videos 1,3,5); identity B (videos 0,2,4).
        let x = array![
            [0.0, 1.0],
            [1.0, 0.0],
            [0.1, 1.0],
            [1.0, 0.1],
            [0.0, 1.0],
            [1.0, 0.05]
        ];
        let l = nna(x.view(), &[0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!(
            l.labels,
            vec![Some(0), Some(1), Some(0), Some(1), Some(0), Some(1)]
        );
        assert_eq!(l.class_sizes(), vec![3, 3]);
    }

    #[test]
    fn one_sided_match_is_not_merged() {
        // Video 2 at camera 1 prefers video 0, but video 0 prefers video 1...
        // camera 1 has videos 1 and 2; video 0 is closest to 1, video 2 is closest to 0.
        let x = array![[1.0, 0.0], [1.0, 0.01], [0.5, 0.5]];
        let l = nna(x.view(), &[0, 1, 1]).unwrap();
        assert_eq!(l.labels, vec![Some(0), Some(0), None]);
    }

    #[test]
    fn ties_prefer_lowest_id() {
        let x = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let pairs = mutual_pairs(x.view(), &[0, 1, 1]).unwrap();
        assert_eq!(pairs, vec![(0, 1)]);
    }
}
