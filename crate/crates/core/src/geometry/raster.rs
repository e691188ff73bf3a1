use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-pixel depth along the camera `z` axis, row-major.
///
/// Non-finite and non-positive values are invalid and never reach
/// downstream operations.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "depth buffer has {} values, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(DepthMap {
            width,
            height,
            values,
            valid,
        })
    }

    /// Depth with an explicit mask; entries that are masked valid but hold a
    /// non-positive or non-finite depth are still treated as invalid.
    pub fn with_mask(width: u32, height: u32, values: Vec<f64>, mask: &[bool]) -> Result<Self> {
        let mut d = Self::from_values(width, height, values)?;
        if mask.len() != d.valid.len() {
            return Err(Error::invalid("depth mask size mismatch"));
        }
        for (v, m) in d.valid.iter_mut().zip(mask) {
            *v &= *m;
        }
        Ok(d)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        let i = v as usize * self.width as usize + u as usize;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Marks the given pixels invalid.
    pub fn masked(&self, drop: &[bool]) -> Result<Self> {
        if drop.len() != self.valid.len() {
            return Err(Error::invalid("drop mask size mismatch"));
        }
        let mut out = self.clone();
        for (v, d) in out.valid.iter_mut().zip(drop) {
            *v &= !*d;
        }
        Ok(out)
    }

    pub fn median(&self) -> Option<f64> {
        let mut vals: Vec<f64> = self
            .values
            .iter()
            .zip(&self.valid)
            .filter_map(|(d, m)| m.then_some(*d))
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(f64::total_cmp);
        let n = vals.len();
        Some(if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        })
    }

    /// Values with invalid pixels replaced by `fill`, for serialization.
    pub fn filled(&self, fill: f64) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(d, m)| if *m { *d } else { fill })
            .collect()
    }
}

/// Linear RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32) -> Self {
        ColorImage {
            width,
            height,
            data: vec![[0.0; 3]; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid("image buffer size mismatch"));
        }
        Ok(ColorImage {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> [f64; 3] {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, c: [f64; 3]) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = c;
    }

    /// Bilinear sample at a continuous coordinate (pixel centers at `+0.5`).
    /// Horizontal lookups wrap when `wrap_x` is set, otherwise they clamp;
    /// vertical lookups always clamp.
    pub fn sample_bilinear(&self, x: f64, y: f64, wrap_x: bool) -> [f64; 3] {
        let w = self.width as i64;
        let h = self.height as i64;
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let ix = |i: i64| -> usize {
            if wrap_x {
                i.rem_euclid(w) as usize
            } else {
                i.clamp(0, w - 1) as usize
            }
        };
        let iy = |i: i64| -> usize { i.clamp(0, h - 1) as usize };
        let at = |xi: usize, yi: usize| self.data[yi * w as usize + xi];
        let (xa, xb, ya, yb) = (ix(x0), ix(x0 + 1), iy(y0), iy(y0 + 1));
        let (c00, c10, c01, c11) = (at(xa, ya), at(xb, ya), at(xa, yb), at(xb, yb));
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = c00[c] * (1.0 - tx) + c10[c] * tx;
            let bot = c01[c] * (1.0 - tx) + c11[c] * tx;
            out[c] = top * (1.0 - ty) + bot * ty;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_depths_are_masked() {
        let d = DepthMap::from_values(2, 2, vec![1.0, -1.0, f64::NAN, 0.0]).unwrap();
        assert_eq!(d.valid_mask(), &[true, false, false, false]);
        assert_eq!(d.get(1, 0), None);
        assert_eq!(d.valid_count(), 1);
    }

    #[test]
    fn size_mismatch() {
        assert!(DepthMap::from_values(3, 2, vec![1.0; 5]).is_err());
    }

    #[test]
    fn median_of_valid() {
        let d = DepthMap::from_values(2, 2, vec![4.0, 1.0, f64::INFINITY, 2.0]).unwrap();
        assert_eq!(d.median(), Some(2.0));
    }

    #[test]
    fn bilinear_hits_pixel_centers() {
        let img = ColorImage::from_data(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
        assert_eq!(img.sample_bilinear(0.5, 0.5, false), [0.0; 3]);
        assert_eq!(img.sample_bilinear(1.5, 0.5, false), [1.0; 3]);
        assert_eq!(img.sample_bilinear(1.0, 0.5, false), [0.5; 3]);
        // wraps from the last column back to the first
        assert_eq!(img.sample_bilinear(2.0, 0.5, true), [0.5; 3]);
    }
}
