//! Analytic test scenes: ray-cast spheres, boxes, panels and an enclosing
//! room, each with a solid checker texture.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    panorama::pano_to_direction, CameraPose, CameraView, ColorImage, DepthMap, Intrinsics,
};

/// Hits closer than this along the ray are ignored.
const T_EPS: f64 = 1e-9;

/// 3D checker: `a` and `b` alternate every `period` along each world axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checker {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub period: f64,
}

impl Checker {
    pub fn color_at(&self, p: &Point3<f64>) -> [f64; 3] {
        let k = |x: f64| (x / self.period).floor() as i64;
        if (k(p.x) + k(p.y) + k(p.z)).rem_euclid(2) == 0 {
            self.a
        } else {
            self.b
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Solid axis-aligned box, seen from outside.
    Cuboid {
        min: [f64; 3],
        max: [f64; 3],
    },
    /// Axis-aligned box seen from inside (walls, floor, ceiling).
    Room {
        min: [f64; 3],
        max: [f64; 3],
    },
    /// Two-sided parallelogram `origin + a·edge_u + b·edge_v`, `a, b ∈ [0, 1]`.
    Panel {
        origin: [f64; 3],
        edge_u: [f64; 3],
        edge_v: [f64; 3],
    },
}

fn slabs(o: &Point3<f64>, d: &Vector3<f64>, min: &[f64; 3], max: &[f64; 3]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-300 {
            if o[k] < min[k] || o[k] > max[k] {
                return None;
            }
            continue;
        }
        let a = (min[k] - o[k]) / d[k];
        let b = (max[k] - o[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some((t0, t1))
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Sphere { radius, .. } => *radius > 0.0,
            Shape::Cuboid { min, max } | Shape::Room { min, max } => {
                (0..3).all(|k| max[k] > min[k])
            }
            Shape::Panel { edge_u, edge_v, .. } => {
                Vector3::from(*edge_u).cross(&Vector3::from(*edge_v)).norm() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate scene shape {self:?}")))
        }
    }

    /// Smallest ray parameter `t > 0` with `o + t·d` on the surface.
    pub fn intersect(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match self {
            Shape::Sphere { center, radius } => {
                let oc = o - Point3::from(*center);
                let a = d.norm_squared();
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // numerically stable roots
                let q = if b >= 0.0 { -(b + sq) } else { -b + sq };
                let (r0, r1) = (q / a, c / q);
                let (lo, hi) = if r0 < r1 { (r0, r1) } else { (r1, r0) };
                [lo, hi].into_iter().find(|t| *t > T_EPS && t.is_finite())
            }
            Shape::Cuboid { min, max } => {
                slabs(o, d, min, max).and_then(|(t0, _)| (t0 > T_EPS).then_some(t0))
            }
            Shape::Room { min, max } => {
                slabs(o, d, min, max).and_then(|(_, t1)| (t1 > T_EPS).then_some(t1))
            }
            Shape::Panel {
                origin,
                edge_u,
                edge_v,
            } => {
                let (eu, ev) = (Vector3::from(*edge_u), Vector3::from(*edge_v));
                let n = eu.cross(&ev);
                let den = n.dot(d);
                if den.abs() < 1e-300 {
                    return None;
                }
                let t = n.dot(&(Point3::from(*origin) - o)) / den;
                if t <= T_EPS {
                    return None;
                }
                let rel = o + d * t - Point3::from(*origin);
                // coordinates in the (edge_u, edge_v) basis
                let (uu, uv, vv) = (eu.dot(&eu), eu.dot(&ev), ev.dot(&ev));
                let (ru, rv) = (rel.dot(&eu), rel.dot(&ev));
                let det = uu * vv - uv * uv;
                let a = (ru * vv - rv * uv) / det;
                let b = (rv * uu - ru * uv) / det;
                ((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)).then_some(t)
            }
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        match self {
            Shape::Sphere { center, radius } => ((p - Point3::from(*center)).norm() - radius).abs(),
            Shape::Cuboid { min, max } | Shape::Room { min, max } => {
                let mut outside = Vector3::zeros();
                let mut inside = f64::INFINITY;
                for k in 0..3 {
                    outside[k] = (min[k] - p[k]).max(p[k] - max[k]).max(0.0);
                    inside = inside.min((p[k] - min[k]).min(max[k] - p[k]));
                }
                if outside.norm() > 0.0 {
                    outside.norm()
                } else {
                    inside
                }
            }
            Shape::Panel {
                origin,
                edge_u,
                edge_v,
            } => {
                let (eu, ev) = (Vector3::from(*edge_u), Vector3::from(*edge_v));
                let n = eu.cross(&ev).normalize();
                (p - Point3::from(*origin)).dot(&n).abs()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub texture: Checker,
}

/// Result of a ray query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Point3<f64>,
    pub color: [f64; 3],
    pub primitive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub name: String,
    pub primitives: Vec<Primitive>,
}

pub const PRESETS: [&str; 4] = ["spheres", "boxes", "mixed", "room"];

fn checker(a: [f64; 3], b: [f64; 3], period: f64) -> Checker {
    Checker { a, b, period }
}

// Wall coordinates avoid multiples of common voxel sizes so that surfaces
// never sit exactly on a voxel boundary.
fn room() -> Primitive {
    Primitive {
        shape: Shape::Room {
            min: [-6.03, -4.01, -3.02],
            max: [6.03, 1.51, 4.84],
        },
        texture: checker([0.85, 0.82, 0.75], [0.35, 0.4, 0.5], 0.5),
    }
}

fn sphere(c: [f64; 3], r: f64, tex: Checker) -> Primitive {
    Primitive {
        shape: Shape::Sphere {
            center: c,
            radius: r,
        },
        texture: tex,
    }
}

fn cuboid(min: [f64; 3], max: [f64; 3], tex: Checker) -> Primitive {
    Primitive {
        shape: Shape::Cuboid { min, max },
        texture: tex,
    }
}

impl SyntheticScene {
    pub fn new(name: impl Into<String>, primitives: Vec<Primitive>) -> Result<Self> {
        let s = SyntheticScene {
            name: name.into(),
            primitives,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::invalid("scene has no primitives"));
        }
        for p in &self.primitives {
            p.shape.validate()?;
            if !(p.texture.period > 0.0) {
                return Err(Error::invalid("checker period must be positive"));
            }
        }
        Ok(())
    }

    /// Built-in scenes inside a room around the origin, with content
    /// 2–4.5 units in front of an identity camera.
    pub fn preset(name: &str) -> Result<Self> {
        let red = checker([0.9, 0.25, 0.2], [0.55, 0.1, 0.1], 0.2);
        let green = checker([0.3, 0.8, 0.35], [0.1, 0.4, 0.15], 0.25);
        let blue = checker([0.25, 0.4, 0.9], [0.1, 0.15, 0.45], 0.15);
        let yellow = checker([0.95, 0.85, 0.3], [0.5, 0.45, 0.1], 0.3);
        let prims = match name {
            "spheres" => vec![
                room(),
                sphere([-0.9, 0.71, 2.6], 0.8, red),
                sphere([1.0, 0.91, 3.3], 0.6, green),
                sphere([0.1, -0.2, 3.7], 0.75, blue),
            ],
            "boxes" => vec![
                room(),
                cuboid([-1.43, 0.47, 2.21], [-0.27, 1.51, 3.07], red),
                cuboid([0.31, -0.19, 2.93], [1.57, 1.51, 4.19], green),
                cuboid([-0.61, 0.93, 1.63], [0.23, 1.51, 2.13], blue),
            ],
            "mixed" => vec![
                room(),
                sphere([-0.7, 0.81, 2.9], 0.7, red),
                cuboid([0.33, 0.29, 2.47], [1.41, 1.51, 3.53], green),
                Primitive {
                    shape: Shape::Panel {
                        origin: [-1.9, -1.1, 3.9],
                        edge_u: [2.6, 0.0, 0.6],
                        edge_v: [0.0, 2.61, 0.0],
                    },
                    texture: yellow,
                },
            ],
            "room" => vec![room()],
            other => {
                return Err(Error::invalid(format!(
                    "unknown scene preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        SyntheticScene::new(name, prims)
    }

    /// Nearest surface along `o + t·d`, `t > 0`.
    pub fn cast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(t) = p.shape.intersect(o, d) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, i));
                }
            }
        }
        best.map(|(t, i)| {
            let point = o + d * t;
            Hit {
                t,
                point,
                color: self.primitives[i].texture.color_at(&point),
                primitive: i,
            }
        })
    }

    /// Distance from `p` to the nearest surface of any primitive.
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|q| q.shape.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Color image and z-depth seen by `view`; misses are invalid depth
    /// and black.
    pub fn render(&self, view: &CameraView) -> Result<(ColorImage, DepthMap)> {
        let k = view.intrinsics;
        let o = view.pose.center();
        let rows: Vec<Vec<(f64, [f64; 3])>> = (0..k.height)
            .into_par_iter()
            .map(|v| {
                (0..k.width)
                    .map(|u| {
                        // camera-frame z of the ray is 1, so t is z-depth
                        let d = view.pose.rotation * k.pixel_ray(u, v);
                        self.cast(&o, &d)
                            .map_or((f64::NAN, [0.0; 3]), |h| (h.t, h.color))
                    })
                    .collect()
            })
            .collect();
        let (depth, color): (Vec<f64>, Vec<[f64; 3]>) = rows.into_iter().flatten().unzip();
        Ok((
            ColorImage::from_data(k.width, k.height, color)?,
            DepthMap::from_values(k.width, k.height, depth)?,
        ))
    }

    /// Equirectangular color and ray distance around `center`.
    pub fn render_panorama(
        &self,
        center: Point3<f64>,
        width: u32,
        height: u32,
    ) -> Result<(ColorImage, DepthMap)> {
        if height == 0 || width != 2 * height {
            return Err(Error::invalid(format!(
                "panorama must be 2:1, got {width}x{height}"
            )));
        }
        let rows: Vec<Vec<(f64, [f64; 3])>> = (0..height)
            .into_par_iter()
            .map(|y| {
                (0..width)
                    .map(|x| {
                        let d = pano_to_direction(x as f64 + 0.5, y as f64 + 0.5, width, height);
                        self.cast(&center, &d)
                            .map_or((f64::NAN, [0.0; 3]), |h| (h.t, h.color))
                    })
                    .collect()
            })
            .collect();
        let (depth, color): (Vec<f64>, Vec<[f64; 3]>) = rows.into_iter().flatten().unzip();
        Ok((
            ColorImage::from_data(width, height, color)?,
            DepthMap::from_values(width, height, depth)?,
        ))
    }
}

/// Identity-pose camera at the origin.
pub fn default_start_view(intrinsics: Intrinsics) -> CameraView {
    CameraView::new(intrinsics, CameraPose::identity(), 0)
}
