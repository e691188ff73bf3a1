use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{NnIndex, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcdMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

impl PcdMetrics {
    fn from_pr(precision: f64, recall: f64, threshold: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PcdMetrics {
            precision,
            recall,
            f1,
            threshold,
        }
    }
}

/// Nearest squared distance from each query to `index`.
fn nearest_sq(queries: &[nalgebra::Point3<f64>], index: &NnIndex) -> Vec<f64> {
    queries
        .par_iter()
        .map(|q| index.nearest(q).map_or(f64::INFINITY, |n| n.dist_sq))
        .collect()
}

fn fraction_within(dist_sq: &[f64], threshold: f64) -> f64 {
    if dist_sq.is_empty() {
        return 0.0;
    }
    let t2 = threshold * threshold;
    dist_sq.iter().filter(|d| **d <= t2).count() as f64 / dist_sq.len() as f64
}

/// Nearest-neighbor distances pred→gt and gt→pred, reusable across thresholds.
pub struct PcdDistances {
    pred_to_gt: Vec<f64>,
    gt_to_pred: Vec<f64>,
}

impl PcdDistances {
    pub fn new(pred: &PointCloud, gt: &PointCloud) -> Result<Self> {
        if gt.is_empty() {
            return Err(Error::invalid("ground-truth cloud is empty"));
        }
        let gi = NnIndex::new(gt.positions());
        let pi = NnIndex::new(pred.positions());
        Ok(PcdDistances {
            pred_to_gt: nearest_sq(pred.positions(), &gi),
            gt_to_pred: nearest_sq(gt.positions(), &pi),
        })
    }

    pub fn at(&self, threshold: f64) -> Result<PcdMetrics> {
        if !(threshold > 0.0) {
            return Err(Error::invalid(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        Ok(PcdMetrics::from_pr(
            fraction_within(&self.pred_to_gt, threshold),
            fraction_within(&self.gt_to_pred, threshold),
            threshold,
        ))
    }
}

/// Precision: pred points within `threshold` of gt. Recall: gt points
/// within `threshold` of pred. Clouds must already be aligned.
pub fn pcd_f1(pred: &PointCloud, gt: &PointCloud, threshold: f64) -> Result<PcdMetrics> {
    PcdDistances::new(pred, gt)?.at(threshold)
}

fn check_sweep(thresholds: &[f64]) -> Result<()> {
    if thresholds.len() < 2 {
        return Err(Error::invalid("AUC needs at least two thresholds"));
    }
    if thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::invalid("thresholds must be positive and finite"));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("thresholds must be strictly ascending"));
    }
    Ok(())
}

/// Per-threshold metrics of a sweep.
pub fn pcd_sweep(
    pred: &PointCloud,
    gt: &PointCloud,
    thresholds: &[f64],
) -> Result<Vec<PcdMetrics>> {
    check_sweep(thresholds)?;
    let d = PcdDistances::new(pred, gt)?;
    thresholds.iter().map(|t| d.at(*t)).collect()
}

/// Trapezoidal area under precision as a function of recall. The sweep's
/// points are preceded by `(0, p₀)`, the first precision held flat down
/// to zero recall, so a perfect match scores 1 and a total miss 0.
pub fn auc_from_sweep(sweep: &[PcdMetrics]) -> f64 {
    let Some(first) = sweep.first() else {
        return 0.0;
    };
    let mut prev = (0.0, first.precision);
    let mut area = 0.0;
    for m in sweep {
        area += (m.recall - prev.0) * (m.precision + prev.1) * 0.5;
        prev = (m.recall, m.precision);
    }
    area
}

pub fn pcd_auc(pred: &PointCloud, gt: &PointCloud, thresholds: &[f64]) -> Result<f64> {
    Ok(auc_from_sweep(&pcd_sweep(pred, gt, thresholds)?))
}
