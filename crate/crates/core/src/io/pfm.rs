//! Single-channel PFM depth maps and raw float32 grids with a JSON sidecar.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// Writes a little-endian `Pf` file. Invalid pixels are stored as 0.
pub fn write_pfm_to<W: Write>(mut out: W, depth: &DepthMap) -> Result<()> {
    let (w, h) = (depth.width() as usize, depth.height() as usize);
    write!(out, "Pf\n{} {}\n-1.0\n", w, h)?;
    let vals = depth.filled(0.0);
    let mut buf = Vec::with_capacity(w * h * 4);
    // PFM stores rows bottom to top
    for row in (0..h).rev() {
        for v in &vals[row * w..(row + 1) * w] {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn header_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::format("PFM", "unexpected end of header"));
        }
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            return Ok(t.to_string());
        }
    }
}

pub fn read_pfm_from<R: Read>(input: R) -> Result<DepthMap> {
    let mut r = BufReader::new(input);
    let magic = header_token(&mut r)?;
    if magic != "Pf" {
        return Err(Error::format(
            "PFM",
            format!("expected single-channel 'Pf', got '{magic}'"),
        ));
    }
    let dims = header_token(&mut r)?;
    let mut it = dims.split_whitespace().map(str::parse::<u32>);
    let (Some(Ok(w)), Some(Ok(h)), None) = (it.next(), it.next(), it.next()) else {
        return Err(Error::format(
            "PFM",
            format!("bad dimensions line '{dims}'"),
        ));
    };
    let scale: f64 = header_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("PFM", "bad scale line"))?;
    if scale == 0.0 {
        return Err(Error::format("PFM", "scale must be non-zero"));
    }
    let little = scale < 0.0;
    let (wu, hu) = (w as usize, h as usize);
    let mut raw = vec![0u8; wu * hu * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::format("PFM", "payload shorter than header dimensions"))?;
    let mut vals = vec![0.0; wu * hu];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let f = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, col) = (i / wu, i % wu);
        vals[(hu - 1 - row) * wu + col] = f as f64;
    }
    DepthMap::from_values(w, h, vals)
}

pub fn write_pfm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_pfm_to(std::io::BufWriter::new(f), depth)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_pfm_from(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGridSidecar {
    pub width: u32,
    pub height: u32,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `<path>` as little-endian float32 and `<path>.json` as `{width, height}`.
pub fn write_raw_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = depth
        .filled(0.0)
        .iter()
        .flat_map(|v| (*v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| Error::file(path, e))?;
    let side = RawGridSidecar {
        width: depth.width(),
        height: depth.height(),
    };
    super::write_json(sidecar_path(path), &side)
}

pub fn read_raw_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let side: RawGridSidecar = super::read_json(sidecar_path(path))?;
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    let n = side.width as usize * side.height as usize;
    if bytes.len() != n * 4 {
        return Err(Error::format(
            "raw float32",
            format!(
                "{} bytes for a {}x{} grid",
                bytes.len(),
                side.width,
                side.height
            ),
        ));
    }
    let vals = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DepthMap::from_values(side.width, side.height, vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_roundtrip_preserves_rows_and_mask() {
        let d = DepthMap::from_values(3, 2, vec![1.0, 2.0, 3.0, 4.0, f64::NAN, 6.5]).unwrap();
        let mut buf = Vec::new();
        write_pfm_to(&mut buf, &d).unwrap();
        assert!(buf.starts_with(b"Pf\n3 2\n-1.0\n"));
        // first stored row is the bottom image row
        assert_eq!(&buf[12..16], &4.0f32.to_le_bytes());
        let back = read_pfm_from(buf.as_slice()).unwrap();
        assert_eq!(back.valid_mask(), d.valid_mask());
        assert_eq!(back.get(2, 1), Some(6.5));
        assert_eq!(back.get(0, 0), Some(1.0));
    }

    #[test]
    fn pfm_big_endian_and_errors() {
        let mut buf = b"Pf\n1 1\n1.0\n".to_vec();
        buf.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(read_pfm_from(buf.as_slice()).unwrap().get(0, 0), Some(2.5));
        assert!(read_pfm_from(&b"PF\n1 1\n-1.0\n"[..]).is_err());
        assert!(read_pfm_from(&b"Pf\n2 2\n-1.0\n\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn raw_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.f32");
        let d = DepthMap::from_values(2, 2, vec![1.5, 0.0, 3.0, 4.0]).unwrap();
        write_raw_depth(&p, &d).unwrap();
        assert!(dir.path().join("d.f32.json").exists());
        assert_eq!(read_raw_depth(&p).unwrap(), d.clone());
    }
}
