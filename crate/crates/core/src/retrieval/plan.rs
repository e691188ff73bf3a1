use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frustum::{
    overlap_with_samples, stratified_unit_samples, Frustum, DEFAULT_SAMPLES, DEFAULT_SEED,
    MIN_SAMPLES,
};
use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::memory::MemoryBank;

/// Overlap below which no reference is attached.
pub const DEFAULT_OVERLAP_FLOOR: f64 = 0.05;
pub const NEAR_FACTOR: f64 = 0.1;
pub const FAR_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOptions {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    pub seed: u64,
    pub floor: f64,
}

impl RetrievalOptions {
    /// near/far at 0.1× and 3× the median scene depth.
    pub fn from_median_depth(median_depth: f64) -> Self {
        RetrievalOptions {
            near: NEAR_FACTOR * median_depth,
            far: FAR_FACTOR * median_depth,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            floor: DEFAULT_OVERLAP_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPair {
    pub target_index: usize,
    /// Bank entry index, absent when the best overlap is under the floor.
    pub entry: Option<usize>,
    /// Best overlap over the bank (0 for an empty bank).
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    #[serde(rename = "F")]
    pub f: usize,
    pub pairs: Vec<RetrievalPair>,
}

impl RetrievalPlan {
    /// Sum of attached overlaps.
    pub fn score(&self) -> f64 {
        self.pairs
            .iter()
            .filter(|p| p.entry.is_some())
            .map(|p| p.overlap)
            .sum()
    }
}

/// `floor(N/4)` target indices with constant spacing `floor(N/F)`,
/// starting at 0.
pub fn planned_indices(n: usize) -> Vec<usize> {
    let f = n / 4;
    if f == 0 {
        return Vec::new();
    }
    let step = n / f;
    (0..f).map(|i| i * step).collect()
}

/// Overlap of a target against every bank view using one shared sample set.
pub fn overlaps_against(
    target: &CameraView,
    bank: &[CameraView],
    opts: &RetrievalOptions,
    unit: &[[f64; 3]],
) -> Result<Vec<f64>> {
    let a = Frustum::new(*target, opts.near, opts.far)?;
    bank.iter()
        .map(|v| {
            Ok(overlap_with_samples(
                &a,
                &Frustum::new(*v, opts.near, opts.far)?,
                unit,
            ))
        })
        .collect()
}

fn check_opts(opts: &RetrievalOptions) -> Result<()> {
    if opts.samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "retrieval needs at least {MIN_SAMPLES} samples, got {}",
            opts.samples
        )));
    }
    if !(opts.near > 0.0 && opts.far > opts.near) {
        return Err(Error::invalid("retrieval needs 0 < near < far"));
    }
    Ok(())
}

/// For each planned target, the bank entry with the largest frustum
/// overlap (ties to the lowest index).
pub fn plan_retrieval(
    targets: &[CameraView],
    bank: &MemoryBank,
    opts: &RetrievalOptions,
) -> Result<RetrievalPlan> {
    if targets.len() < 4 {
        return Err(Error::invalid(format!(
            "retrieval needs at least 4 target poses, got {}",
            targets.len()
        )));
    }
    check_opts(opts)?;
    let unit = stratified_unit_samples(opts.samples, opts.seed);
    let views = bank.views();
    let idx = planned_indices(targets.len());
    let pairs = idx
        .par_iter()
        .map(|&ti| {
            let ov = overlaps_against(&targets[ti], &views, opts, &unit)?;
            let mut best: Option<(usize, f64)> = None;
            for (j, o) in ov.iter().enumerate() {
                if best.is_none_or(|(_, b)| *o > b) {
                    best = Some((j, *o));
                }
            }
            let overlap = best.map_or(0.0, |b| b.1);
            Ok(RetrievalPair {
                target_index: ti,
                entry: best.filter(|b| b.1 >= opts.floor).map(|b| b.0),
                overlap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalPlan {
        f: idx.len(),
        pairs,
    })
}

/// Sum of retrieved overlaps over the planned pairs; 0 for trajectories
/// too short to plan.
pub fn trajectory_overlap_score(
    traj: &[CameraView],
    bank: &MemoryBank,
    opts: &RetrievalOptions,
) -> Result<f64> {
    if traj.len() < 4 {
        return Ok(0.0);
    }
    Ok(plan_retrieval(traj, bank, opts)?.score())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraPose, Intrinsics};
    use crate::memory::{Frame, ImageRef, SourceTag};
    use nalgebra::{Point3, Rotation3, Vector3};

    fn ring(n: usize, id0: u64) -> Vec<CameraView> {
        let k = Intrinsics::from_fov(60.0, 45.0, 32, 24).unwrap();
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.15;
                let eye = Point3::new(a.sin() * 0.5, 0.0, -a.cos() * 0.5);
                let pose =
                    CameraPose::look_at(eye, Point3::new(0.0, 0.0, 2.0), -Vector3::y()).unwrap();
                CameraView::new(k, pose, id0 + i as u64)
            })
            .collect()
    }

    fn bank_of(views: &[CameraView]) -> MemoryBank {
        let frames: Vec<Frame> = views
            .iter()
            .map(|v| Frame::new(ImageRef::none(), *v))
            .collect();
        MemoryBank::new(1)
            .unwrap()
            .insert(&frames, SourceTag::Generated)
            .unwrap()
    }

    fn opts() -> RetrievalOptions {
        RetrievalOptions::from_median_depth(2.0)
    }

    #[test]
    fn f_is_quarter() {
        for n in 4..=200 {
            let idx = planned_indices(n);
            assert_eq!(idx.len(), n / 4);
            let step = idx.get(1).map(|s| s - idx[0]);
            assert!(idx.windows(2).all(|w| Some(w[1] - w[0]) == step));
            assert!(*idx.last().unwrap() < n);
        }
        assert_eq!(planned_indices(80).len(), 20);
    }

    #[test]
    fn copies_are_selected() {
        let t = ring(12, 0);
        let plan = plan_retrieval(&t, &bank_of(&t), &opts()).unwrap();
        assert_eq!(plan.f, 3);
        for p in &plan.pairs {
            assert_eq!(p.entry, Some(p.target_index));
            assert_eq!(p.overlap, 1.0);
        }
        assert_eq!(
            trajectory_overlap_score(&t, &bank_of(&t), &opts()).unwrap(),
            3.0
        );
    }

    #[test]
    fn empty_bank_all_none() {
        let t = ring(8, 0);
        let plan = plan_retrieval(&t, &MemoryBank::default(), &opts()).unwrap();
        assert!(plan.pairs.iter().all(|p| p.entry.is_none()));
        assert_eq!(
            trajectory_overlap_score(&t, &MemoryBank::default(), &opts()).unwrap(),
            0.0
        );
        assert!(plan_retrieval(&t[..3], &MemoryBank::default(), &opts()).is_err());
    }

    #[test]
    fn superset_bank_never_worse() {
        let t = ring(16, 0);
        let small = bank_of(&ring(5, 100)[3..]);
        let big = bank_of(&ring(5, 100));
        let a = plan_retrieval(&t, &small, &opts()).unwrap();
        let b = plan_retrieval(&t, &big, &opts()).unwrap();
        for (x, y) in a.pairs.iter().zip(&b.pairs) {
            assert!(y.overlap >= x.overlap);
        }
    }

    #[test]
    fn invariant_under_rigid_motion() {
        let t = ring(16, 0);
        let b = ring(10, 50);
        let r = Rotation3::from_euler_angles(0.3, -1.0, 0.7).into_inner();
        let tr = Vector3::new(4.0, -2.0, 1.0);
        let mv = |vs: &[CameraView]| -> Vec<CameraView> {
            vs.iter()
                .map(|v| v.with_pose(v.pose.transformed(&r, &tr)))
                .collect()
        };
        let p1 = plan_retrieval(&t, &bank_of(&b), &opts()).unwrap();
        let p2 = plan_retrieval(&mv(&t), &bank_of(&mv(&b)), &opts()).unwrap();
        let e1: Vec<_> = p1.pairs.iter().map(|p| p.entry).collect();
        let e2: Vec<_> = p2.pairs.iter().map(|p| p.entry).collect();
        assert_eq!(e1, e2);
    }
}
