use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Cache3D;
use crate::error::{Error, Result};
use crate::geometry::{backproject, CameraView, DepthMap};
use crate::pointcloud::{NnIndex, PointCloud, SimilarityTransform};

pub const MASK_FRACTION_RANGE: (f64, f64) = (0.30, 0.70);
pub const RECT_FRACTION_RANGE: (f64, f64) = (0.20, 0.70);
pub const MAX_AUX_FRAMES: usize = 4;

/// Geometry condition: the reference cloud followed by cache points it
/// does not already cover.
#[derive(Debug, Clone, PartialEq)]
pub struct GgmCondition {
    pub reference: PointCloud,
    pub auxiliary: PointCloud,
    pub combined: PointCloud,
}

/// `align` maps the cache frame into the reference frame. Cache points
/// within one (scaled) voxel of a reference point are dropped.
pub fn assemble_ggm(
    reference: &PointCloud,
    cache: &Cache3D,
    align: &SimilarityTransform,
) -> Result<GgmCondition> {
    let frame = reference.frame().to_string();
    let auxiliary = match cache.voxel() {
        Some(voxel) if !cache.is_empty() => {
            let moved = cache.cloud().transformed(align).relabeled(frame.clone());
            let radius = voxel * align.scale;
            let index = NnIndex::new(reference.positions());
            let keep: Vec<usize> = moved
                .positions()
                .iter()
                .enumerate()
                .filter(|(_, p)| !index.any_within(p, radius))
                .map(|(i, _)| i)
                .collect();
            moved.select(&keep)
        }
        _ => PointCloud::empty(frame),
    };
    let combined = reference.concat(&auxiliary);
    Ok(GgmCondition {
        reference: reference.clone(),
        auxiliary,
        combined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    /// Drops this fraction of the valid pixels.
    RandomMask { p: f64 },
    /// Occludes an axis-aligned rectangle covering this fraction of the map.
    Rectangle { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub augmentation: Augmentation,
    /// Fraction actually removed: dropped/valid for masking, rectangle
    /// area/map area for occlusion.
    pub measured: f64,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCloud {
    pub cloud: PointCloud,
    pub records: Vec<AugmentRecord>,
}

/// Drops `round(p·valid)` valid pixels, clamped so the realized fraction
/// stays inside the masking range.
pub fn random_mask<R: Rng>(depth: &DepthMap, p: f64, rng: &mut R) -> Result<(DepthMap, usize)> {
    let valid: Vec<usize> = (0..depth.valid_mask().len())
        .filter(|&i| depth.valid_mask()[i])
        .collect();
    let n = valid.len();
    let (lo, hi) = MASK_FRACTION_RANGE;
    let k = ((p * n as f64).round() as usize)
        .max((lo * n as f64).ceil() as usize)
        .min((hi * n as f64).floor() as usize)
        .min(n);
    let mut drop = vec![false; depth.valid_mask().len()];
    for j in sample(rng, n, k) {
        drop[valid[j]] = true;
    }
    Ok((depth.masked(&drop)?, k))
}

/// Rectangle of integer size `(rw, rh)` with area fraction close to `a`,
/// nudged into the occlusion range after rounding.
pub fn rectangle_size<R: Rng>(width: u32, height: u32, a: f64, rng: &mut R) -> (u32, u32) {
    let (w, h) = (width as f64, height as f64);
    // the width fraction must be at least a so the height fraction fits
    let fw = rng.gen_range(a..=1.0);
    let fh = a / fw;
    let mut rw = ((fw * w).round() as u32).clamp(1, width);
    let mut rh = ((fh * h).round() as u32).clamp(1, height);
    let area = (width as u64 * height as u64) as f64;
    let (lo, hi) = RECT_FRACTION_RANGE;
    for _ in 0..(width + height) {
        let f = (rw as u64 * rh as u64) as f64 / area;
        if f < lo {
            if rh < height {
                rh += 1;
            } else if rw < width {
                rw += 1;
            }
        } else if f > hi {
            if rh > 1 {
                rh -= 1;
            } else if rw > 1 {
                rw -= 1;
            }
        } else {
            break;
        }
    }
    (rw, rh)
}

/// Occludes a uniformly placed rectangle covering about `a` of the map.
pub fn rectangle_occlusion<R: Rng>(
    depth: &DepthMap,
    a: f64,
    rng: &mut R,
) -> Result<(DepthMap, f64, usize)> {
    let (w, h) = (depth.width(), depth.height());
    let (rw, rh) = rectangle_size(w, h, a, rng);
    let x0 = rng.gen_range(0..=w - rw);
    let y0 = rng.gen_range(0..=h - rh);
    let mut drop = vec![false; w as usize * h as usize];
    for v in y0..y0 + rh {
        for u in x0..x0 + rw {
            drop[v as usize * w as usize + u as usize] = true;
        }
    }
    let dropped = drop
        .iter()
        .zip(depth.valid_mask())
        .filter(|(d, m)| **d && **m)
        .count();
    let frac = (rw as u64 * rh as u64) as f64 / (w as u64 * h as u64) as f64;
    Ok((depth.masked(&drop)?, frac, dropped))
}

/// Training-time sample of auxiliary geometry: each of the 1–4 frames gets
/// exactly one augmentation (masking or rectangle, 50/50), survivors are
/// back-projected with their world-frame views and mapped by `to_reference`.
pub fn ggm_train_augment(
    aux: &[(DepthMap, CameraView)],
    to_reference: &SimilarityTransform,
    seed: u64,
) -> Result<AugmentedCloud> {
    if aux.is_empty() || aux.len() > MAX_AUX_FRAMES {
        return Err(Error::invalid(format!(
            "need 1 to {MAX_AUX_FRAMES} auxiliary frames, got {}",
            aux.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = PointCloud::empty("reference");
    let mut records = Vec::with_capacity(aux.len());
    for (depth, view) in aux {
        let (kept, record) = if rng.gen_bool(0.5) {
            let p = rng.gen_range(MASK_FRACTION_RANGE.0..=MASK_FRACTION_RANGE.1);
            let valid = depth.valid_count();
            let (d, k) = random_mask(depth, p, &mut rng)?;
            let measured = if valid == 0 {
                0.0
            } else {
                k as f64 / valid as f64
            };
            (
                d,
                AugmentRecord {
                    augmentation: Augmentation::RandomMask { p },
                    measured,
                    dropped: k,
                },
            )
        } else {
            let a = rng.gen_range(RECT_FRACTION_RANGE.0..=RECT_FRACTION_RANGE.1);
            let (d, measured, dropped) = rectangle_occlusion(depth, a, &mut rng)?;
            (
                d,
                AugmentRecord {
                    augmentation: Augmentation::Rectangle { a },
                    measured,
                    dropped,
                },
            )
        };
        let pts = backproject(&kept, view)?.transformed(to_reference);
        cloud = cloud.concat(&pts);
        records.push(record);
    }
    Ok(AugmentedCloud { cloud, records })
}

/// Number of auxiliary frames for one training sample, uniform in 1..=4.
pub fn sample_aux_count<R: Rng>(rng: &mut R) -> usize {
    rng.gen_range(1..=MAX_AUX_FRAMES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraPose, Intrinsics};
    use nalgebra::{Point3, Vector3};

    fn flat(w: u32, h: u32) -> (DepthMap, CameraView) {
        let d = DepthMap::from_values(w, h, vec![2.0; (w * h) as usize]).unwrap();
        let k = Intrinsics::new(w as f64, w as f64, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap();
        (d, CameraView::new(k, CameraPose::identity(), 0))
    }

    #[test]
    fn mask_half_of_64x64() {
        let (d, _) = flat(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, k) = random_mask(&d, 0.5, &mut rng).unwrap();
        assert_eq!(k, 2048);
        assert_eq!(m.valid_count(), 2048);
    }

    #[test]
    fn quarter_rectangle_on_100x100() {
        let (d, _) = flat(100, 100);
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, _, dropped) = rectangle_occlusion(&d, 0.25, &mut rng).unwrap();
            assert!((2400..=2600).contains(&dropped), "{dropped}");
            assert_eq!(m.valid_count(), 10_000 - dropped);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let aux = vec![flat(16, 12), flat(16, 12), flat(16, 12)];
        let a = ggm_train_augment(&aux, &SimilarityTransform::identity(), 5).unwrap();
        let b = ggm_train_augment(&aux, &SimilarityTransform::identity(), 5).unwrap();
        assert_eq!(a, b);
        assert!(ggm_train_augment(&[], &SimilarityTransform::identity(), 5).is_err());
        assert!(
            ggm_train_augment(&vec![flat(4, 4); 5], &SimilarityTransform::identity(), 5).is_err()
        );
    }

    #[test]
    fn fraction_statistics_over_draws() {
        let aux = vec![flat(64, 48)];
        let (mut masks, mut rects) = (Vec::new(), Vec::new());
        let mut seed = 0;
        while masks.len() < 1000 || rects.len() < 1000 {
            let r = ggm_train_augment(&aux, &SimilarityTransform::identity(), seed)
                .unwrap()
                .records[0];
            match r.augmentation {
                Augmentation::RandomMask { .. } => masks.push(r.measured),
                Augmentation::Rectangle { .. } => rects.push(r.measured),
            }
            seed += 1;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(masks.iter().all(|f| (0.30..=0.70).contains(f)));
        assert!(rects.iter().all(|f| (0.20..=0.70).contains(f)));
        assert!((mean(&masks) - 0.50).abs() <= 0.03);
        assert!((mean(&rects) - 0.45).abs() <= 0.03);
    }

    fn grid_cloud(offset: f64) -> Vec<Point3<f64>> {
        let mut v = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                v.push(Point3::new(offset + i as f64 * 0.1, j as f64 * 0.1, 1.0));
            }
        }
        v
    }

    #[test]
    fn ggm_dedup_cases() {
        let reference = PointCloud::new(grid_cloud(0.0), "ref").unwrap();
        // empty cache
        let g = assemble_ggm(
            &reference,
            &Cache3D::default(),
            &SimilarityTransform::identity(),
        )
        .unwrap();
        assert_eq!(g.combined, reference);

        // cache identical to the reference
        let cache = Cache3D::new(Some(0.05))
            .update(&reference, &[], &[])
            .unwrap();
        let g = assemble_ggm(&reference, &cache, &SimilarityTransform::identity()).unwrap();
        assert!(g.auxiliary.is_empty());

        // reference plus a disjoint block, seen through a similarity
        let block = grid_cloud(5.0);
        let union = reference.concat(&PointCloud::new(block.clone(), "ref").unwrap());
        let to_ref = SimilarityTransform::new(
            2.0,
            nalgebra::Matrix3::identity(),
            Vector3::new(0.3, 0.0, 0.0),
        )
        .unwrap();
        let cache_pts = union.transformed(&to_ref.inverse());
        let cache = Cache3D::new(Some(0.025))
            .update(&cache_pts, &[], &[])
            .unwrap();
        let g = assemble_ggm(&reference, &cache, &to_ref).unwrap();
        assert_eq!(g.auxiliary.len(), block.len());
        let idx = NnIndex::new(&block);
        for p in g.auxiliary.positions() {
            assert!(idx.nearest(p).unwrap().dist_sq.sqrt() <= 0.05 + 1e-12);
        }
        assert_eq!(
            &g.combined.positions()[..reference.len()],
            reference.positions()
        );
        assert_eq!(g.combined.frame(), "ref");
    }
}
