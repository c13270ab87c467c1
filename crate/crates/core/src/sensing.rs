//! Wireless fragments and the videos related to them.
//!
//! A fragment is a maximal run of consecutive trajectory samples strictly
//! inside one camera's sensing disc. Leaving the disc closes the fragment; a
//! later re-entry opens a new one with the next visitation ordinal, so revisits
//! of the same camera stay distinguishable downstream.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Camera, Interval, Scenario, VideoSequence, WirelessTrajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirelessFragment {
    pub trajectory_id: usize,
    /// Time-ordered position among the trajectory's fragments.
    pub fragment_index: usize,
    pub camera_id: usize,
    pub interval: Interval,
    /// `(camera_id, visitation_ordinal)`.
    pub visit_key: (usize, usize),
    /// Inclusive sample index range covered by the fragment.
    pub sample_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedVideoSet {
    pub trajectory_id: usize,
    pub fragment_index: usize,
    pub video_ids: BTreeSet<usize>,
}

/// Extracts every fragment of `trajectory`. An empty list means the
/// trajectory never entered any disc.
pub fn extract_fragments(
    trajectory: &WirelessTrajectory,
    cameras: &[Camera],
    sensing_radius_m: f64,
) -> Vec<WirelessFragment> {
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for cam in cameras {
        let mut open: Option<usize> = None;
        for (k, s) in trajectory.samples.iter().enumerate() {
            let inside = s.position().distance(&cam.position) < sensing_radius_m;
            match (open, inside) {
                (None, true) => open = Some(k),
                (Some(first), false) => {
                    runs.push((cam.id, first, k - 1));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(first) = open {
            runs.push((cam.id, first, trajectory.samples.len() - 1));
        }
    }
    runs.sort_by_key(|&(cam, first, _)| (first, cam));

    let mut ordinals = vec![0usize; cameras.iter().map(|c| c.id + 1).max().unwrap_or(0)];
    runs.into_iter()
        .enumerate()
        .map(|(fragment_index, (camera_id, first, last))| {
            let ordinal = ordinals[camera_id];
            ordinals[camera_id] += 1;
            WirelessFragment {
                trajectory_id: trajectory.id,
                fragment_index,
                camera_id,
                interval: Interval::new(trajectory.samples[first].t, trajectory.samples[last].t),
                visit_key: (camera_id, ordinal),
                sample_range: (first, last),
            }
        })
        .collect()
}

/// Videos grouped by camera, each list sorted by id.
#[derive(Debug, Clone)]
pub struct VideoIndex {
    by_camera: Vec<Vec<(usize, Interval)>>,
}

impl VideoIndex {
    pub fn new(videos: &[VideoSequence], n_cameras: usize) -> Self {
        let mut by_camera = vec![Vec::new(); n_cameras];
        for v in videos {
            if v.camera_id >= by_camera.len() {
                by_camera.resize(v.camera_id + 1, Vec::new());
            }
            by_camera[v.camera_id].push((v.id, v.interval));
        }
        Self { by_camera }
    }

    pub fn at_camera(&self, camera_id: usize) -> &[(usize, Interval)] {
        self.by_camera.get(camera_id).map_or(&[], Vec::as_slice)
    }
}

/// Videos at the fragment's camera whose interval overlaps the fragment's.
pub fn related_videos(fragment: &WirelessFragment, index: &VideoIndex) -> RelatedVideoSet {
    let video_ids = index
        .at_camera(fragment.camera_id)
        .iter()
        .filter(|(_, iv)| iv.overlaps(&fragment.interval))
        .map(|(id, _)| *id)
        .collect();
    RelatedVideoSet {
        trajectory_id: fragment.trajectory_id,
        fragment_index: fragment.fragment_index,
        video_ids,
    }
}

/// Fragments and related sets of one trajectory, index-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySensing {
    pub trajectory_id: usize,
    pub fragments: Vec<WirelessFragment>,
    pub related: Vec<RelatedVideoSet>,
}

impl TrajectorySensing {
    /// `R_m`.
    pub fn fragment_count(&self) -> usize {
        self.fragments.len()
    }

    /// Sum of related-set sizes, counting a video once per fragment it relates to.
    pub fn related_total(&self) -> usize {
        self.related.iter().map(|r| r.video_ids.len()).sum()
    }

    pub fn distinct_videos(&self) -> BTreeSet<usize> {
        self.related
            .iter()
            .flat_map(|r| r.video_ids.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensing {
    pub sensing_radius_m: f64,
    pub trajectories: Vec<TrajectorySensing>,
}

impl Sensing {
    pub fn total_fragments(&self) -> usize {
        self.trajectories.iter().map(|t| t.fragment_count()).sum()
    }

    pub fn fragment_counts(&self) -> Vec<usize> {
        self.trajectories.iter().map(|t| t.fragment_count()).collect()
    }
}

/// Runs fragment extraction and related-set construction for every trajectory.
pub fn sense(scenario: &Scenario, sensing_radius_m: f64) -> Result<Sensing> {
    if !(sensing_radius_m > 0.0) {
        return Err(Error::param(
            "sensing_radius_m",
            format!("must be > 0, got {sensing_radius_m}"),
        ));
    }
    let index = VideoIndex::new(&scenario.videos, scenario.cameras.len());
    let trajectories = scenario
        .trajectories
        .iter()
        .map(|tr| {
            let fragments = extract_fragments(tr, &scenario.cameras, sensing_radius_m);
            let related = fragments.iter().map(|f| related_videos(f, &index)).collect();
            TrajectorySensing {
                trajectory_id: tr.id,
                fragments,
                related,
            }
        })
        .collect();
    Ok(Sensing {
        sensing_radius_m,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Point, Sample};

    fn camera(id: usize, x: f64, y: f64) -> Camera {
        Camera {
            id,
            position: Point::new(x, y),
            view_radius: 10.0,
        }
    }

    fn trajectory(points: &[(f64, f64)]) -> WirelessTrajectory {
        WirelessTrajectory {
            id: 0,
            signal_id: "02:00:00:00:00:01".into(),
            samples: points
                .iter()
                .enumerate()
                .map(|(k, &(x, y))| Sample { t: k as f64, x, y })
                .collect(),
        }
    }

    fn video(id: usize, camera_id: usize, start: f64, end: f64) -> VideoSequence {
        VideoSequence {
            id,
            camera_id,
            interval: Interval::new(start, end),
            descriptor: vec![1.0],
            gt_identity: None,
        }
    }

    #[test]
    fn four_discs_yield_four_fragments() {
        let cams: Vec<Camera> = (0..4).map(|c| camera(c, 100.0 * c as f64, 0.0)).collect();
        let pts: Vec<(f64, f64)> = (0..=60).map(|k| (5.0 * k as f64, 0.0)).collect();
        let frags = extract_fragments(&trajectory(&pts), &cams, 20.0);
        assert_eq!(frags.len(), 4);
        for (r, f) in frags.iter().enumerate() {
            assert_eq!(f.fragment_index, r);
            assert_eq!(f.visit_key, (r, 0));
        }
    }

    #[test]
    fn never_inside_gives_nothing() {
        let cams = vec![camera(0, 0.0, 0.0)];
        let frags = extract_fragments(&trajectory(&[(100.0, 0.0), (200.0, 0.0)]), &cams, 10.0);
        assert!(frags.is_empty());
    }

    #[test]
    fn revisit_increments_ordinal() {
        let cams = vec![camera(0, 0.0, 0.0), camera(1, 50.0, 0.0), camera(2, 0.0, 50.0)];
        let pts = [(0.0, 60.0), (0.0, 50.0), (0.0, 80.0), (0.0, 49.0), (0.0, 100.0)];
        let frags = extract_fragments(&trajectory(&pts), &cams, 5.0);
        let keys: Vec<_> = frags.iter().map(|f| f.visit_key).collect();
        assert_eq!(keys, vec![(2, 0), (2, 1)]);
        assert_eq!(frags[0].interval, Interval::new(1.0, 1.0));
        assert_eq!(frags[1].interval, Interval::new(3.0, 3.0));
    }

    #[test]
    fn boundary_is_strict() {
        let cams = vec![camera(0, 0.0, 0.0)];
        let frags = extract_fragments(&trajectory(&[(10.0, 0.0), (20.0, 0.0)]), &cams, 10.0);
        assert!(frags.is_empty());
    }

    #[test]
    fn overlapping_discs_give_independent_fragments() {
        let cams = vec![camera(0, 0.0, 0.0), camera(1, 5.0, 0.0)];
        let pts = [(-30.0, 0.0), (2.0, 0.0), (3.0, 0.0), (40.0, 0.0)];
        let frags = extract_fragments(&trajectory(&pts), &cams, 10.0);
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0].camera_id, 0);
        assert_eq!(frags[1].camera_id, 1);
        assert_eq!(frags[0].interval, frags[1].interval);
    }

    #[test]
    fn related_set_uses_closed_overlap_at_the_fragment_camera() {
        let frag = WirelessFragment {
            trajectory_id: 0,
            fragment_index: 0,
            camera_id: 1,
            interval: Interval::new(10.0, 20.0),
            visit_key: (1, 0),
            sample_range: (10, 20),
        };
        let videos = vec![
            video(0, 1, 0.0, 10.0),
            video(1, 1, 20.0, 30.0),
            video(2, 1, 0.0, 9.99),
            video(3, 0, 12.0, 14.0),
            video(4, 1, 12.0, 13.0),
            video(5, 1, 0.0, 40.0),
            video(6, 1, 15.0, 25.0),
        ];
        let index = VideoIndex::new(&videos, 2);
        let rel = related_videos(&frag, &index);
        assert_eq!(rel.video_ids.into_iter().collect::<Vec<_>>(), vec![0, 1, 4, 5, 6]);
    }

    #[test]
    fn camera_without_overlapping_videos_is_empty() {
        let frag = WirelessFragment {
            trajectory_id: 0,
            fragment_index: 0,
            camera_id: 0,
            interval: Interval::new(100.0, 110.0),
            visit_key: (0, 0),
            sample_range: (0, 0),
        };
        let videos = vec![video(0, 0, 0.0, 5.0), video(1, 1, 100.0, 105.0)];
        assert!(related_videos(&frag, &VideoIndex::new(&videos, 2)).video_ids.is_empty());
    }

    #[test]
    fn non_positive_radius_is_rejected() {
        let s = crate::scenario::generate_scenario(
            &crate::scenario::GenerationParams {
                n_identities: 4,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert!(matches!(
            sense(&s, 0.0),
            Err(Error::InvalidParam { field: "sensing_radius_m", .. })
        ));
    }
}
