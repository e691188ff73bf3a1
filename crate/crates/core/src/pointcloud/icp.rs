use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::nn::NnIndex;
use super::umeyama::umeyama;
use super::{PointCloud, SimilarityTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpOptions {
    pub max_iters: usize,
    /// Stop once the residual changes by less than this between iterations.
    pub tol: f64,
    /// Keep only this fraction of the closest correspondences each
    /// iteration; `None` keeps all of them.
    pub trim_quantile: Option<f64>,
    pub with_scale: bool,
    /// Also match every gt point to its nearest transformed pred point.
    /// One-way matching with a free scale tends to stall with pred slightly
    /// shrunk inside gt; the reverse pairs pull it back out. Only sensible
    /// when the clouds cover the same surface.
    pub symmetric: bool,
}

impl Default for IcpOptions {
    fn default() -> Self {
        IcpOptions {
            max_iters: 50,
            tol: 1e-12,
            trim_quantile: Some(0.9),
            with_scale: true,
            symmetric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: SimilarityTransform,
    /// Mean squared correspondence distance over the kept pairs; entry 0 is
    /// the residual at the initial transform, entry `k` after `k` updates.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcpResult {
    pub fn final_residual(&self) -> f64 {
        *self
            .residuals
            .last()
            .expect("at least the initial residual")
    }
}

struct Matches {
    kept: Vec<usize>,
    targets: Vec<Point3<f64>>,
    residual: f64,
}

/// Keeps the `keep` closest of `(dist_sq, pred index, gt index)` triples.
fn trim(mut found: Vec<(f64, usize, usize)>, keep: usize) -> Vec<(f64, usize, usize)> {
    if keep < found.len() {
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        found.truncate(keep);
    }
    found
}

fn correspond(
    pred: &[Point3<f64>],
    gt: &NnIndex,
    t: &SimilarityTransform,
    keep: (usize, Option<usize>),
) -> Matches {
    let forward: Vec<(f64, usize, usize)> = pred
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = gt.nearest(&t.apply(p)).expect("non-empty gt");
            (n.dist_sq, i, n.index)
        })
        .collect();
    let mut found = trim(forward, keep.0);
    if let Some(k) = keep.1 {
        let moved: Vec<Point3<f64>> = pred.iter().map(|p| t.apply(p)).collect();
        let index = NnIndex::new(&moved);
        let backward: Vec<(f64, usize, usize)> = gt
            .points()
            .iter()
            .enumerate()
            .map(|(j, q)| {
                let n = index.nearest(q).expect("non-empty pred");
                (n.dist_sq, n.index, j)
            })
            .collect();
        found.extend(trim(backward, k));
    }
    let residual = found.iter().map(|f| f.0).sum::<f64>() / found.len() as f64;
    Matches {
        kept: found.iter().map(|f| f.1).collect(),
        targets: found.iter().map(|f| gt.points()[f.2]).collect(),
        residual,
    }
}

/// Iterative closest point from `pred` onto `gt`, alternating nearest-neighbor
/// correspondence (pred → gt, plus gt → pred when symmetric) with a
/// closed-form similarity fit.
///
/// With a fixed number of kept pairs the objective is the sum of the smallest
/// correspondence distances, so the recorded residual never increases.
pub fn icp_scale_refine(
    pred: &PointCloud,
    gt: &PointCloud,
    init: &SimilarityTransform,
    opts: &IcpOptions,
) -> Result<IcpResult> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::invalid("ICP needs non-empty point clouds"));
    }
    if let Some(q) = opts.trim_quantile {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::invalid(format!(
                "trim quantile must lie in (0, 1], got {q}"
            )));
        }
    }
    let kept = |n: usize| match opts.trim_quantile {
        Some(q) => ((q * n as f64).ceil() as usize).clamp(3.min(n), n),
        None => n,
    };
    let keep = (kept(pred.len()), opts.symmetric.then(|| kept(gt.len())));
    let index = NnIndex::new(gt.positions());
    let src = pred.positions();

    let mut transform = *init;
    let mut m = correspond(src, &index, &transform, keep);
    let mut residuals = vec![m.residual];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        let kept_src: Vec<Point3<f64>> = m.kept.iter().map(|&i| src[i]).collect();
        let candidate = umeyama(&kept_src, &m.targets, opts.with_scale)
            .map_err(|e| Error::AlignmentFailed(format!("ICP iteration {iterations}: {e}")))?;
        let next = correspond(src, &index, &candidate, keep);
        iterations += 1;
        // guard against round-off producing a marginally worse fit
        if next.residual > m.residual {
            converged = true;
            residuals.push(m.residual);
            break;
        }
        let delta = m.residual - next.residual;
        transform = candidate;
        m = next;
        residuals.push(m.residual);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform,
        residuals,
        iterations,
        converged,
    })
}

/// Similarity mapping predicted points onto anchor points through known
/// index pairs `(pred_index, anchor_index)`.
pub fn align_by_anchor(
    pred: &PointCloud,
    anchor: &PointCloud,
    pairs: &[(usize, usize)],
) -> Result<SimilarityTransform> {
    if pairs.len() < 3 {
        return Err(Error::degenerate(format!(
            "anchor alignment needs at least 3 correspondences, got {}",
            pairs.len()
        )));
    }
    let mut src = Vec::with_capacity(pairs.len());
    let mut dst = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let (Some(p), Some(q)) = (pred.positions().get(i), anchor.positions().get(j)) else {
            return Err(Error::invalid(format!(
                "correspondence ({i}, {j}) out of range"
            )));
        };
        src.push(*p);
        dst.push(*q);
    }
    umeyama(&src, &dst, true)
}

/// Fallback when no pixel correspondence exists: nearest-neighbor ICP
/// from the identity.
pub fn align_by_anchor_nn(
    pred: &PointCloud,
    anchor: &PointCloud,
    opts: &IcpOptions,
) -> Result<SimilarityTransform> {
    Ok(icp_scale_refine(pred, anchor, &SimilarityTransform::identity(), opts)?.transform)
}
