//! Minimal PLY reader/writer: ascii and binary_little_endian vertex data
//! with scalar x/y/z properties. Extra vertex properties are skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("missing vertex property {0}")]
    MissingProperty(&'static str),
    #[error("truncated body: {0}")]
    Truncated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw floating-point points, before voxelization.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        match name {
            "char" | "int8" => Some(Scalar::I8),
            "uchar" | "uint8" => Some(Scalar::U8),
            "short" | "int16" => Some(Scalar::I16),
            "ushort" | "uint16" => Some(Scalar::U16),
            "int" | "int32" => Some(Scalar::I32),
            "uint" | "uint32" => Some(Scalar::U32),
            "float" | "float32" => Some(Scalar::F32),
            "double" | "float64" => Some(Scalar::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
    has_list: bool,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(data: &[u8]) -> Result<Header, PlyError> {
    let end = b"end_header";
    let mut pos = 0usize;
    let mut lines = Vec::new();
    let mut body_offset = None;
    while pos < data.len() {
        let nl = data[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| PlyError::MalformedHeader("no end_header".into()))?;
        let line = std::str::from_utf8(&data[pos..nl])
            .map_err(|_| PlyError::MalformedHeader("non-utf8 header".into()))?
            .trim_end_matches('\r')
            .trim()
            .to_string();
        pos = nl + 1;
        if line.as_bytes() == end {
            body_offset = Some(pos);
            break;
        }
        lines.push(line);
    }
    let body_offset =
        body_offset.ok_or_else(|| PlyError::MalformedHeader("no end_header".into()))?;
    let mut it = lines.into_iter();
    if it.next().as_deref() != Some("ply") {
        return Err(PlyError::MalformedHeader("missing ply magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in it {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                format = Some(match words.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => {
                        return Err(PlyError::UnsupportedFormat(other.to_string()));
                    }
                    None => return Err(PlyError::MalformedHeader("format line".into())),
                });
            }
            Some("element") => {
                let name = words
                    .next()
                    .ok_or_else(|| PlyError::MalformedHeader("element name".into()))?;
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| PlyError::MalformedHeader("element count".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| PlyError::MalformedHeader("property before element".into()))?;
                let ty = words
                    .next()
                    .ok_or_else(|| PlyError::MalformedHeader("property type".into()))?;
                if ty == "list" {
                    el.has_list = true;
                    continue;
                }
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| PlyError::UnsupportedFormat(format!("property type {ty}")))?;
                let name = words
                    .next()
                    .ok_or_else(|| PlyError::MalformedHeader("property name".into()))?;
                el.props.push((name.to_string(), scalar));
            }
            Some(other) => {
                return Err(PlyError::MalformedHeader(format!("unknown keyword {other}")));
            }
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| PlyError::MalformedHeader("no format line".into()))?,
        elements,
        body_offset,
    })
}

/// Reads the vertex element of an ascii or binary little-endian PLY file.
pub fn read_ply(path: &Path) -> Result<PointCloud, PlyError> {
    let data = fs::read(path)?;
    let header = parse_header(&data)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or(PlyError::MissingProperty("x"))?;
    let vertex = &header.elements[vertex_pos];
    let xyz: [usize; 3] = {
        let find = |n: &str| vertex.props.iter().position(|(p, _)| p == n);
        [
            find("x").ok_or(PlyError::MissingProperty("x"))?,
            find("y").ok_or(PlyError::MissingProperty("y"))?,
            find("z").ok_or(PlyError::MissingProperty("z"))?,
        ]
    };
    if vertex.has_list {
        return Err(PlyError::UnsupportedFormat(
            "list property in vertex element".into(),
        ));
    }
    let mut points = Vec::with_capacity(vertex.count);
    match header.format {
        PlyFormat::Ascii => {
            let body = std::str::from_utf8(&data[header.body_offset..])
                .map_err(|_| PlyError::Truncated("non-utf8 ascii body".into()))?;
            let mut lines = body.lines();
            // elements appear in declaration order
            for el in &header.elements[..vertex_pos] {
                for _ in 0..el.count {
                    lines
                        .next()
                        .ok_or_else(|| PlyError::Truncated("preceding element".into()))?;
                }
            }
            for i in 0..vertex.count {
                let line = lines
                    .next()
                    .ok_or_else(|| PlyError::Truncated(format!("vertex {i}")))?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() < vertex.props.len() {
                    return Err(PlyError::Truncated(format!("vertex {i}")));
                }
                let mut p = [0.0f64; 3];
                for (axis, &col) in xyz.iter().enumerate() {
                    p[axis] = fields[col]
                        .parse()
                        .map_err(|e| PlyError::Truncated(format!("vertex {i}: {e}")))?;
                }
                points.push(p);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut offset = header.body_offset;
            for el in &header.elements[..vertex_pos] {
                if el.has_list {
                    return Err(PlyError::UnsupportedFormat(
                        "list property before vertex element".into(),
                    ));
                }
                let stride: usize = el.props.iter().map(|(_, s)| s.size()).sum();
                offset += stride * el.count;
            }
            let stride: usize = vertex.props.iter().map(|(_, s)| s.size()).sum();
            let prop_offsets: Vec<usize> = vertex
                .props
                .iter()
                .scan(0usize, |acc, (_, s)| {
                    let o = *acc;
                    *acc += s.size();
                    Some(o)
                })
                .collect();
            if offset + stride * vertex.count > data.len() {
                return Err(PlyError::Truncated("binary vertex data".into()));
            }
            for i in 0..vertex.count {
                let base = offset + i * stride;
                let mut p = [0.0f64; 3];
                for (axis, &col) in xyz.iter().enumerate() {
                    let (_, scalar) = vertex.props[col];
                    p[axis] = scalar.read_le(&data[base + prop_offsets[col]..]);
                }
                points.push(p);
            }
        }
    }
    Ok(PointCloud { points })
}

/// Writes x/y/z as double precision, exactly round-trippable.
pub fn write_ply(cloud: &PointCloud, path: &Path, format: PlyFormat) -> Result<(), PlyError> {
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        out,
        "ply\nformat {} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        fmt,
        cloud.points.len()
    )?;
    match format {
        PlyFormat::Ascii => {
            for p in &cloud.points {
                writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for p in &cloud.points {
                for v in p {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
