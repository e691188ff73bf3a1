use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::synth::{synthesize, TrajectoryKind, TrajectorySpec};
use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::memory::{Frame, ImageRef, MemoryBank, SourceTag};
use crate::retrieval::{trajectory_overlap_score, RetrievalOptions};

/// Trajectories run in sequence; each kind at most once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrajectorySpec>", into = "Vec<TrajectorySpec>")]
pub struct TrajectoryOrder {
    specs: Vec<TrajectorySpec>,
}

impl TrajectoryOrder {
    pub fn new(specs: Vec<TrajectorySpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &specs {
            s.validate()?;
            if !seen.insert(s.kind) {
                return Err(Error::invalid(format!(
                    "trajectory kind '{}' repeated",
                    s.kind.name()
                )));
            }
        }
        Ok(TrajectoryOrder { specs })
    }

    pub fn from_kinds(kinds: &[TrajectoryKind], n_frames: usize) -> Result<Self> {
        Self::new(
            kinds
                .iter()
                .map(|k| TrajectorySpec::new(*k, n_frames))
                .collect(),
        )
    }

    pub fn specs(&self) -> &[TrajectorySpec] {
        &self.specs
    }

    pub fn kinds(&self) -> Vec<TrajectoryKind> {
        self.specs.iter().map(|s| s.kind).collect()
    }

    pub fn label(&self) -> String {
        self.specs
            .iter()
            .map(|s| s.kind.name())
            .collect::<Vec<_>>()
            .join("→")
    }
}

impl TryFrom<Vec<TrajectorySpec>> for TrajectoryOrder {
    type Error = Error;

    fn try_from(v: Vec<TrajectorySpec>) -> Result<Self> {
        TrajectoryOrder::new(v)
    }
}

impl From<TrajectoryOrder> for Vec<TrajectorySpec> {
    fn from(o: TrajectoryOrder) -> Self {
        o.specs
    }
}

/// orbit → up → right → left.
pub fn default_order(n_frames: usize) -> TrajectoryOrder {
    TrajectoryOrder::from_kinds(&TrajectoryKind::ALL, n_frames).expect("default order is valid")
}

/// Every ordering of the given kinds.
pub fn all_orders(kinds: &[TrajectoryKind], n_frames: usize) -> Vec<TrajectoryOrder> {
    fn permute(rest: &mut Vec<TrajectoryKind>, k: usize, out: &mut Vec<Vec<TrajectoryKind>>) {
        if k == rest.len() {
            out.push(rest.clone());
            return;
        }
        for i in k..rest.len() {
            rest.swap(k, i);
            permute(rest, k + 1, out);
            rest.swap(k, i);
        }
    }
    let mut out = Vec::new();
    permute(&mut kinds.to_vec(), 0, &mut out);
    out.iter()
        .filter_map(|ks| TrajectoryOrder::from_kinds(ks, n_frames).ok())
        .collect()
}

/// Frame ids for trajectory `t` so generated frames never collide in the bank.
pub fn generated_frame_id(trajectory: usize, frame: usize) -> u64 {
    trajectory as u64 * 1_000_000 + frame as u64
}

/// Overlap scores of trajectories run in sequence. With `incremental`, each
/// trajectory's frames join the bank after it is scored; otherwise every
/// trajectory sees only the initial bank. Empty trajectories score 0 and add
/// nothing.
pub fn score_trajectories(
    trajectories: &[Vec<CameraView>],
    initial: &MemoryBank,
    incremental: bool,
    opts: &RetrievalOptions,
) -> Result<Vec<f64>> {
    let mut bank = initial.clone();
    let mut scores = Vec::with_capacity(trajectories.len());
    for (t, traj) in trajectories.iter().enumerate() {
        scores.push(trajectory_overlap_score(traj, &bank, opts)?);
        if incremental && !traj.is_empty() {
            let frames: Vec<Frame> = traj
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut v = *v;
                    v.frame_id = generated_frame_id(t, i);
                    Frame::new(ImageRef::none(), v)
                })
                .collect();
            bank = bank.insert(&frames, SourceTag::Generated)?;
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredOrder {
    pub order: TrajectoryOrder,
    pub label: String,
    pub per_trajectory: Vec<f64>,
    pub score: f64,
}

/// Scores each order by simulated bank growth from `initial_bank` and sorts
/// descending (stable for ties).
pub fn rank_orders(
    orders: &[TrajectoryOrder],
    initial_bank: &MemoryBank,
    start: &CameraView,
    median_depth: f64,
    incremental: bool,
    opts: &RetrievalOptions,
) -> Result<Vec<ScoredOrder>> {
    if orders.is_empty() {
        return Err(Error::invalid("no trajectory orders to rank"));
    }
    let mut out = orders
        .iter()
        .map(|o| {
            let trajs = o
                .specs()
                .iter()
                .map(|s| synthesize(s, start, median_depth))
                .collect::<Result<Vec<_>>>()?;
            let per = score_trajectories(&trajs, initial_bank, incremental, opts)?;
            Ok(ScoredOrder {
                order: o.clone(),
                label: o.label(),
                score: per.iter().sum(),
                per_trajectory: per,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{panorama::pose_from_angles, CameraPose, Intrinsics};
    use crate::retrieval::RetrievalOptions;
    use nalgebra::Point3;

    fn start() -> CameraView {
        CameraView::new(
            Intrinsics::from_fov(90.0, 70.0, 32, 24).unwrap(),
            CameraPose::identity(),
            0,
        )
    }

    fn pano_bank(n: usize) -> MemoryBank {
        let k = Intrinsics::from_fov(120.0, 90.0, 32, 24).unwrap();
        let frames: Vec<Frame> = (0..n)
            .map(|i| {
                let yaw = 360.0 * i as f64 / n as f64;
                Frame::new(
                    ImageRef::none(),
                    CameraView::new(k, pose_from_angles(yaw, 0.0, Point3::origin()), i as u64),
                )
            })
            .collect();
        MemoryBank::default()
            .insert(&frames, SourceTag::Panorama)
            .unwrap()
    }

    fn opts() -> RetrievalOptions {
        RetrievalOptions {
            samples: 2048,
            ..RetrievalOptions::from_median_depth(2.0)
        }
    }

    #[test]
    fn default_is_orbit_up_right_left() {
        let o = default_order(81);
        assert_eq!(
            o.kinds(),
            vec![
                TrajectoryKind::Orbit,
                TrajectoryKind::Up,
                TrajectoryKind::Right,
                TrajectoryKind::Left
            ]
        );
        assert!(TrajectoryOrder::from_kinds(&[TrajectoryKind::Up, TrajectoryKind::Up], 9).is_err());
        assert_eq!(all_orders(&TrajectoryKind::ALL, 9).len(), 24);
    }

    #[test]
    fn single_order_and_incremental_dominates() {
        let bank = pano_bank(8);
        let o = vec![default_order(12)];
        let r = rank_orders(&o, &bank, &start(), 2.0, true, &opts()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].order, o[0]);
        let base = rank_orders(&o, &bank, &start(), 2.0, false, &opts()).unwrap();
        assert!(r[0].score >= base[0].score);
        for (a, b) in r[0].per_trajectory.iter().zip(&base[0].per_trajectory) {
            assert!(a >= b);
        }
    }

    #[test]
    fn empty_trajectory_is_noop() {
        let bank = pano_bank(6);
        let t = synthesize(
            &TrajectorySpec::new(TrajectoryKind::Left, 12),
            &start(),
            2.0,
        )
        .unwrap();
        let a = score_trajectories(std::slice::from_ref(&t), &bank, true, &opts()).unwrap();
        let b = score_trajectories(&[Vec::new(), t], &bank, true, &opts()).unwrap();
        assert_eq!(a.iter().sum::<f64>(), b.iter().sum::<f64>());
    }

    #[test]
    fn order_serde_rejects_repeats() {
        let o = default_order(5);
        let text = serde_json::to_string(&o).unwrap();
        assert_eq!(serde_json::from_str::<TrajectoryOrder>(&text).unwrap(), o);
        let twice = format!("[{0},{0}]", serde_json::to_string(&o.specs()[0]).unwrap());
        assert!(serde_json::from_str::<TrajectoryOrder>(&twice).is_err());
    }
}
