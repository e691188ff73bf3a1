//! PLY point clouds: `vertex` elements with `x y z` and optional
//! `red green blue`, ASCII or binary little-endian.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;
use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType,
    ScalarType,
};
use ply_rs::writer::Writer;

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

const FRAME_COMMENT: &str = "frame ";

fn scalar(p: Option<&Property>) -> Option<f64> {
    Some(match p? {
        Property::Char(v) => *v as f64,
        Property::UChar(v) => *v as f64,
        Property::Short(v) => *v as f64,
        Property::UShort(v) => *v as f64,
        Property::Int(v) => *v as f64,
        Property::UInt(v) => *v as f64,
        Property::Float(v) => *v as f64,
        Property::Double(v) => *v,
        _ => return None,
    })
}

fn color_channel(p: Option<&Property>) -> Option<f64> {
    match p? {
        Property::UChar(v) => Some(*v as f64 / 255.0),
        Property::UShort(v) => Some(*v as f64 / 65535.0),
        Property::Float(v) => Some(*v as f64),
        Property::Double(v) => Some(*v),
        other => scalar(Some(other)).map(|v| v / 255.0),
    }
}

pub fn read_ply_from<R: Read>(mut input: R) -> Result<PointCloud> {
    let parser = Parser::<DefaultElement>::new();
    let ply = parser
        .read_ply(&mut input)
        .map_err(|e| Error::format("PLY", e.to_string()))?;
    let frame = ply
        .header
        .comments
        .iter()
        .find_map(|c| c.strip_prefix(FRAME_COMMENT))
        .unwrap_or(crate::pointcloud::WORLD_FRAME)
        .to_string();
    let Some(vertices) = ply.payload.get("vertex") else {
        return Ok(PointCloud::empty(frame));
    };
    let has_color = vertices.first().is_some_and(|v| {
        v.contains_key("red") && v.contains_key("green") && v.contains_key("blue")
    });
    let mut pts = Vec::with_capacity(vertices.len());
    let mut cols = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        let (Some(x), Some(y), Some(z)) =
            (scalar(v.get("x")), scalar(v.get("y")), scalar(v.get("z")))
        else {
            return Err(Error::format(
                "PLY",
                format!("vertex {i} lacks numeric x/y/z"),
            ));
        };
        pts.push(Point3::new(x, y, z));
        if has_color {
            let (Some(r), Some(g), Some(b)) = (
                color_channel(v.get("red")),
                color_channel(v.get("green")),
                color_channel(v.get("blue")),
            ) else {
                return Err(Error::format(
                    "PLY",
                    format!("vertex {i} has malformed color"),
                ));
            };
            cols.push([r, g, b]);
        }
    }
    PointCloud::with_colors(pts, has_color.then_some(cols), frame)
}

pub fn write_ply_to<W: Write>(mut out: W, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = match encoding {
        PlyEncoding::Ascii => Encoding::Ascii,
        PlyEncoding::BinaryLittleEndian => Encoding::BinaryLittleEndian,
    };
    ply.header
        .comments
        .push(format!("{FRAME_COMMENT}{}", cloud.frame()));
    let mut def = ElementDef::new("vertex".to_string());
    for name in ["x", "y", "z"] {
        def.properties.add(PropertyDef::new(
            name.to_string(),
            PropertyType::Scalar(ScalarType::Double),
        ));
    }
    let colors = cloud.colors();
    if colors.is_some() {
        for name in ["red", "green", "blue"] {
            def.properties.add(PropertyDef::new(
                name.to_string(),
                PropertyType::Scalar(ScalarType::UChar),
            ));
        }
    }
    ply.header.elements.add(def);

    let mut verts = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.positions().iter().enumerate() {
        let mut e = DefaultElement::new();
        e.insert("x".to_string(), Property::Double(p.x));
        e.insert("y".to_string(), Property::Double(p.y));
        e.insert("z".to_string(), Property::Double(p.z));
        if let Some(c) = colors {
            for (k, name) in ["red", "green", "blue"].iter().enumerate() {
                let byte = (c[i][k].clamp(0.0, 1.0) * 255.0).round() as u8;
                e.insert(name.to_string(), Property::UChar(byte));
            }
        }
        verts.push(e);
    }
    ply.payload.insert("vertex".to_string(), verts);
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| Error::format("PLY", e.to_string()))?;
    Ok(())
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_ply_from(BufReader::new(f))
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_ply_to(BufWriter::new(f), cloud, encoding)
}
