use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;
use crate::geometry::ColorImage;

pub fn to_rgb8(img: &ColorImage) -> RgbImage {
    RgbImage::from_fn(img.width, img.height, |u, v| {
        let c = img.get(u, v);
        Rgb(c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

pub fn from_rgb8(img: &RgbImage) -> ColorImage {
    let data = img
        .pixels()
        .map(|p| p.0.map(|x| x as f64 / 255.0))
        .collect();
    ColorImage {
        width: img.width(),
        height: img.height(),
        data,
    }
}

pub fn write_png(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    to_rgb8(img).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ColorImage> {
    Ok(from_rgb8(&image::open(path)?.to_rgb8()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_quantizes_to_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = ColorImage::from_data(2, 1, vec![[0.0, 0.5, 1.0], [0.2, 0.4, 0.6]]).unwrap();
        write_png(&p, &img).unwrap();
        let back = read_png(&p).unwrap();
        for (a, b) in back.data.iter().zip(&img.data) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
