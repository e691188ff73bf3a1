use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ColorImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRole {
    Target,
    Reference,
    PointmapTarget,
    PointmapReference,
    Stitched,
}

/// Dense `F×H×W×C` tensor, channel-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    pub f: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub role: GridRole,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(
        f: usize,
        h: usize,
        w: usize,
        c: usize,
        role: GridRole,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != f * h * w * c {
            return Err(Error::invalid(format!(
                "grid data has {} values, expected {f}x{h}x{w}x{c}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature grid holds non-finite values"));
        }
        Ok(FeatureGrid {
            f,
            h,
            w,
            c,
            role,
            data,
        })
    }

    pub fn zeros(f: usize, h: usize, w: usize, c: usize, role: GridRole) -> Self {
        FeatureGrid {
            f,
            h,
            w,
            c,
            role,
            data: vec![0.0; f * h * w * c],
        }
    }

    pub fn from_fn(
        f: usize,
        h: usize,
        w: usize,
        c: usize,
        role: GridRole,
        mut g: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(f * h * w * c);
        for fi in 0..f {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        data.push(g(fi, y, x, ch));
                    }
                }
            }
        }
        FeatureGrid {
            f,
            h,
            w,
            c,
            role,
            data,
        }
    }

    #[inline]
    pub fn index(&self, fi: usize, y: usize, x: usize, ch: usize) -> usize {
        ((fi * self.h + y) * self.w + x) * self.c + ch
    }

    #[inline]
    pub fn at(&self, fi: usize, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.index(fi, y, x, ch)]
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.f, self.h, self.w, self.c)
    }

    pub fn with_role(mut self, role: GridRole) -> Self {
        self.role = role;
        self
    }

    /// Average-pools RGB frames by `factor` into an `F×H/factor×W/factor×3`
    /// grid. Trailing rows/columns that do not fill a cell are ignored.
    pub fn from_images(images: &[ColorImage], factor: usize, role: GridRole) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("pooling factor must be at least 1"));
        }
        let Some(first) = images.first() else {
            return Err(Error::invalid("no frames to pool"));
        };
        let (iw, ih) = (first.width as usize, first.height as usize);
        if images
            .iter()
            .any(|i| i.width as usize != iw || i.height as usize != ih)
        {
            return Err(Error::invalid("frames differ in size"));
        }
        let (h, w) = (ih / factor, iw / factor);
        if h == 0 || w == 0 {
            return Err(Error::invalid("pooling factor larger than the frame"));
        }
        let norm = (factor * factor) as f64;
        Ok(FeatureGrid::from_fn(
            images.len(),
            h,
            w,
            3,
            role,
            |fi, y, x, ch| {
                let img = &images[fi];
                let mut s = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        s += img.data[(y * factor + dy) * iw + x * factor + dx][ch];
                    }
                }
                s / norm
            },
        ))
    }

    /// Raw little-endian float32 payload plus a `{f, h, w, c, role}` sidecar.
    pub fn save_raw(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .data
            .iter()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect();
        std::fs::write(path, bytes).map_err(|e| Error::file(path, e))?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        crate::io::write_json(
            side,
            &GridShape {
                f: self.f,
                h: self.h,
                w: self.w,
                c: self.c,
                role: self.role,
            },
        )
    }

    pub fn load_raw(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        let s: GridShape = crate::io::read_json(side)?;
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        if bytes.len() != s.f * s.h * s.w * s.c * 4 {
            return Err(Error::format(
                "feature grid",
                "payload size does not match shape",
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        FeatureGrid::new(s.f, s.h, s.w, s.c, s.role, data)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridShape {
    f: usize,
    h: usize,
    w: usize,
    c: usize,
    role: GridRole,
}

/// Target/reference features side by side (target left), the matching
/// pointmap features, and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedPair {
    pub stitched: FeatureGrid,
    pub pointmap_latent: FeatureGrid,
    pub ssm_input: FeatureGrid,
}

impl StitchedPair {
    /// Width of one half.
    pub fn half_width(&self) -> usize {
        self.ssm_input.w / 2
    }
}

fn concat_width(left: &FeatureGrid, right: &FeatureGrid) -> FeatureGrid {
    let w = left.w;
    FeatureGrid::from_fn(
        left.f,
        left.h,
        2 * w,
        left.c,
        GridRole::Stitched,
        |fi, y, x, ch| {
            if x < w {
                left.at(fi, y, x, ch)
            } else {
                right.at(fi, y, x - w, ch)
            }
        },
    )
}

/// Stitches along width. Missing reference or pointmap grids count as zeros.
pub fn stitch(
    z_tar: &FeatureGrid,
    z_ref: Option<&FeatureGrid>,
    pm_tar: Option<&FeatureGrid>,
    pm_ref: Option<&FeatureGrid>,
) -> Result<StitchedPair> {
    let dims = z_tar.dims();
    for g in [z_ref, pm_tar, pm_ref].into_iter().flatten() {
        if g.dims() != dims {
            return Err(Error::invalid(format!(
                "grid dims {:?} differ from target {:?}",
                g.dims(),
                dims
            )));
        }
    }
    let zero = FeatureGrid::zeros(dims.0, dims.1, dims.2, dims.3, GridRole::Reference);
    let stitched = concat_width(z_tar, z_ref.unwrap_or(&zero));
    let pointmap_latent = concat_width(pm_tar.unwrap_or(&zero), pm_ref.unwrap_or(&zero));
    let mut ssm_input = stitched.clone();
    for (s, p) in ssm_input.data.iter_mut().zip(&pointmap_latent.data) {
        *s += p;
    }
    Ok(StitchedPair {
        stitched,
        pointmap_latent,
        ssm_input,
    })
}
