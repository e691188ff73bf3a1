use nalgebra::Point3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraView;

pub const DEFAULT_SAMPLES: usize = 8192;
pub const MIN_SAMPLES: usize = 1000;
pub const DEFAULT_SEED: u64 = 0x5eed;

const CONTAIN_TOL: f64 = 1e-9;

/// Viewing volume between two z-depths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frustum {
    pub view: CameraView,
    pub near: f64,
    pub far: f64,
}

impl Frustum {
    pub fn new(view: CameraView, near: f64, far: f64) -> Result<Self> {
        let f = Frustum { view, near, far };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.far > self.near && self.far.is_finite()) {
            return Err(Error::invalid(format!(
                "frustum needs 0 < near < far, got near {} far {}",
                self.near, self.far
            )));
        }
        self.view.intrinsics.validate()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let pc = self.view.pose.to_camera(p);
        let z = pc.z;
        let tol = CONTAIN_TOL * self.far;
        if z < self.near - tol || z > self.far + tol {
            return false;
        }
        let k = &self.view.intrinsics;
        let x = k.fx * pc.x / z + k.cx;
        let y = k.fy * pc.y / z + k.cy;
        let (w, h) = (k.width as f64, k.height as f64);
        x >= -CONTAIN_TOL * w
            && x <= w * (1.0 + CONTAIN_TOL)
            && y >= -CONTAIN_TOL * h
            && y <= h * (1.0 + CONTAIN_TOL)
    }

    /// Maps a unit-cube sample to a point inside the frustum, uniform in
    /// volume when the sample is uniform in the cube.
    pub fn point_at(&self, s: &[f64; 3]) -> Point3<f64> {
        let k = &self.view.intrinsics;
        let (n3, f3) = (self.near.powi(3), self.far.powi(3));
        // cross-section area grows as z², so invert the z³ CDF
        let z = (n3 + s[2] * (f3 - n3)).cbrt();
        let x = s[0] * k.width as f64;
        let y = s[1] * k.height as f64;
        self.view.pose.to_world(&(k.unproject(x, y) * z))
    }

    pub fn volume(&self) -> f64 {
        let k = &self.view.intrinsics;
        let area_at_unit = (k.width as f64 / k.fx) * (k.height as f64 / k.fy);
        area_at_unit * (self.far.powi(3) - self.near.powi(3)) / 3.0
    }
}

/// Latin-hypercube samples of the unit cube: each axis is split into `n`
/// strata and every stratum is hit exactly once.
pub fn stratified_unit_samples(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes: [Vec<f64>; 3] = Default::default();
    for axis in axes.iter_mut() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        *axis = strata
            .into_iter()
            .map(|k| (k as f64 + rng.gen::<f64>()) / n as f64)
            .collect();
    }
    (0..n)
        .map(|i| [axes[0][i], axes[1][i], axes[2][i]])
        .collect()
}

/// Fraction of `a`'s volume inside `b`, estimated from the given unit samples.
pub fn overlap_with_samples(a: &Frustum, b: &Frustum, unit: &[[f64; 3]]) -> f64 {
    if unit.is_empty() {
        return 0.0;
    }
    let inside = unit.iter().filter(|s| b.contains(&a.point_at(s))).count();
    inside as f64 / unit.len() as f64
}

/// Monte-Carlo estimate of vol(a ∩ b) / vol(a) with stratified samples
/// inside `a`.
pub fn frustum_overlap(a: &Frustum, b: &Frustum, samples: usize, seed: u64) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "overlap estimate needs at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    Ok(overlap_with_samples(
        a,
        b,
        &stratified_unit_samples(samples, seed),
    ))
}

/// Closed-form overlap when `b` is `a` moved by `delta` along its optical
/// axis (either direction), `|delta| ≤ far − near`.
pub fn axial_shift_overlap(near: f64, far: f64, delta: f64) -> f64 {
    let d = delta.abs();
    ((far - d).powi(3) - near.powi(3)).max(0.0) / (far.powi(3) - near.powi(3))
}
