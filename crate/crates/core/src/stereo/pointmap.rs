use nalgebra::Point3;

use crate::geometry::{CameraView, ColorImage};
use crate::memory::Cache3D;

/// World coordinates of visible cache points as RGB, normalized per axis
/// over the joint valid set of a target/reference pair. Misses are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMapImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl PointMapImage {
    pub fn get(&self, u: u32, v: u32) -> Option<[f64; 3]> {
        let i = v as usize * self.width as usize + u as usize;
        self.valid[i].then_some(self.rgb[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn to_color_image(&self) -> ColorImage {
        ColorImage {
            width: self.width,
            height: self.height,
            data: self.rgb.clone(),
        }
    }
}

fn bounds<'a>(hits: impl Iterator<Item = &'a Point3<f64>>) -> Option<([f64; 3], [f64; 3])> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut any = false;
    for p in hits {
        any = true;
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    any.then_some((lo, hi))
}

fn colorize(
    view: &CameraView,
    hits: &[Option<Point3<f64>>],
    b: Option<([f64; 3], [f64; 3])>,
) -> PointMapImage {
    let rgb = hits
        .iter()
        .map(|h| match (h, b) {
            (Some(p), Some((lo, hi))) => {
                let mut c = [0.0; 3];
                for k in 0..3 {
                    let span = hi[k] - lo[k];
                    c[k] = if span > 0.0 {
                        (p[k] - lo[k]) / span
                    } else {
                        0.0
                    };
                }
                c
            }
            _ => [0.0; 3],
        })
        .collect();
    PointMapImage {
        width: view.intrinsics.width,
        height: view.intrinsics.height,
        rgb,
        valid: hits.iter().map(Option::is_some).collect(),
    }
}

/// Pointmaps for a target view and an optional reference view, rendered
/// from the cache with one-pixel z-buffered splats.
pub fn make_pointmap_pair(
    target: &CameraView,
    reference: Option<&CameraView>,
    cache: &Cache3D,
) -> (PointMapImage, Option<PointMapImage>) {
    let ht = cache.render(target);
    let hr = reference.map(|r| cache.render(r));
    let joint = bounds(ht.iter().chain(hr.iter().flatten()).flatten());
    let pt = colorize(target, &ht, joint);
    let pr = reference
        .zip(hr.as_ref())
        .map(|(v, h)| colorize(v, h, joint));
    (pt, pr)
}

pub fn make_pointmap(view: &CameraView, cache: &Cache3D) -> PointMapImage {
    make_pointmap_pair(view, None, cache).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraPose, Intrinsics};
    use crate::pointcloud::PointCloud;
    use nalgebra::Vector3;

    fn cache_of(pts: Vec<Point3<f64>>) -> Cache3D {
        Cache3D::new(Some(1e-3))
            .update(&PointCloud::new(pts, "world").unwrap(), &[], &[])
            .unwrap()
    }

    fn view_at(eye: Point3<f64>) -> CameraView {
        CameraView::new(
            Intrinsics::from_fov(70.0, 60.0, 64, 48).unwrap(),
            CameraPose::look_at(eye, Point3::new(0.5, 0.5, 0.5), -Vector3::y()).unwrap(),
            0,
        )
    }

    #[test]
    fn single_axis_point_hits_principal_pixel() {
        let k = Intrinsics::new(10.0, 10.0, 4.5, 3.5, 9, 7).unwrap();
        let view = CameraView::new(k, CameraPose::identity(), 0);
        let pm = make_pointmap(&view, &cache_of(vec![Point3::new(0.0, 0.0, 2.5)]));
        assert_eq!(pm.valid_count(), 1);
        assert!(pm.get(4, 3).is_some());
    }

    #[test]
    fn empty_cache_all_invalid() {
        let pm = make_pointmap(&view_at(Point3::new(0.0, 0.0, -3.0)), &Cache3D::default());
        assert_eq!(pm.valid_count(), 0);
        assert!(pm.rgb.iter().all(|c| *c == [0.0; 3]));
    }

    #[test]
    fn identical_views_identical_maps() {
        let v = view_at(Point3::new(0.3, -0.2, -3.0));
        let cache = cache_of(vec![Point3::new(0.1, 0.2, 0.3), Point3::new(0.9, 0.7, 0.2)]);
        let (a, b) = make_pointmap_pair(&v, Some(&v), &cache);
        assert_eq!(Some(a), b);
    }

    #[test]
    fn cube_corners_share_colors_across_views() {
        let mut corners = Vec::new();
        for i in 0..8 {
            corners.push(Point3::new(
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            ));
        }
        let cache = cache_of(corners.clone());
        let va = view_at(Point3::new(-2.0, -1.5, -3.0));
        let vb = view_at(Point3::new(3.0, -1.0, -2.5));
        let (pa, pb) = make_pointmap_pair(&va, Some(&vb), &cache);
        let pb = pb.unwrap();
        let mut shared = 0;
        for c in &corners {
            let px = |v: &CameraView| v.project(c).and_then(|(p, _)| v.intrinsics.pixel_of(&p));
            if let (Some((ua, va_)), Some((ub, vb_))) = (px(&va), px(&vb)) {
                if let (Some(ca), Some(cb)) = (pa.get(ua, va_), pb.get(ub, vb_)) {
                    shared += 1;
                    for k in 0..3 {
                        assert!((ca[k] - cb[k]).abs() <= 1.0 / 255.0);
                        assert!((ca[k] - c[k]).abs() < 1e-12);
                    }
                }
            }
        }
        assert!(shared >= 4);
        // normalization is tight over the joint set
        let all: Vec<[f64; 3]> = pa
            .rgb
            .iter()
            .zip(&pa.valid)
            .chain(pb.rgb.iter().zip(&pb.valid))
            .filter(|(_, v)| **v)
            .map(|(c, _)| *c)
            .collect();
        for k in 0..3 {
            let lo = all.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
            let hi = all.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
        }
    }
}
