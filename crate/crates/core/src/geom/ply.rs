//! Reader and writer for the subset of PLY used for person clouds.
//!
//! Supported: `ascii 1.0` and `binary_little_endian 1.0`, a single `vertex`
//! element with `float` x/y/z, optional `uchar` red/green/blue and an optional
//! integer `part_label`. Other scalar vertex properties are skipped. Further
//! elements are accepted only when they declare zero items.

use std::io::Cursor;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::{FrameError, PersonFrame};

#[derive(Debug, Error, PartialEq)]
pub enum PlyError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported property `{name}`: {reason}")]
    UnsupportedProperty { name: String, reason: String },
    #[error("truncated body: expected {expected} vertices, read {read}")]
    TruncatedBody { expected: usize, read: usize },
    #[error("unparsable value `{token}` in vertex {vertex}")]
    BadValue { vertex: usize, token: String },
    #[error("invalid frame: {0}")]
    InvalidFrame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyForm {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, r: &mut Cursor<&[u8]>) -> std::io::Result<f64> {
        Ok(match self {
            Scalar::I8 => r.read_i8()? as f64,
            Scalar::U8 => r.read_u8()? as f64,
            Scalar::I16 => r.read_i16::<LittleEndian>()? as f64,
            Scalar::U16 => r.read_u16::<LittleEndian>()? as f64,
            Scalar::I32 => r.read_i32::<LittleEndian>()? as f64,
            Scalar::U32 => r.read_u32::<LittleEndian>()? as f64,
            Scalar::F32 => r.read_f32::<LittleEndian>()? as f64,
            Scalar::F64 => r.read_f64::<LittleEndian>()?,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Debug)]
struct Header {
    form: PlyForm,
    vertex_count: usize,
    props: Vec<(String, Scalar)>,
    body_offset: usize,
}

#[derive(Debug, Default)]
struct Layout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    part: Option<usize>,
}

fn malformed(msg: impl Into<String>) -> PlyError {
    PlyError::MalformedHeader(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut offset = 0usize;
    let next_line = |offset: &mut usize| -> Option<String> {
        if *offset >= bytes.len() {
            return None;
        }
        let rest = &bytes[*offset..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        *offset += end + 1;
        let line = &rest[..end];
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        Some(String::from_utf8_lossy(line).into_owned())
    };

    match next_line(&mut offset) {
        Some(l) if l.trim() == "ply" => {}
        _ => return Err(malformed("missing `ply` magic line")),
    }

    let mut form = None;
    let mut vertex_count = None;
    let mut props = Vec::new();
    // Name of the element currently being declared, with its item count.
    let mut current: Option<(String, usize)> = None;

    loop {
        let line = next_line(&mut offset).ok_or_else(|| malformed("missing `end_header`"))?;
        let mut tok = line.split_whitespace();
        let Some(keyword) = tok.next() else {
            continue;
        };
        match keyword {
            "end_header" => break,
            "comment" | "obj_info" => {}
            "format" => {
                if form.is_some() {
                    return Err(malformed("duplicate `format` line"));
                }
                let kind = tok.next().unwrap_or_default();
                let version = tok.next().unwrap_or_default();
                if version != "1.0" {
                    return Err(malformed(format!("unsupported version `{version}`")));
                }
                form = Some(match kind {
                    "ascii" => PlyForm::Ascii,
                    "binary_little_endian" => PlyForm::BinaryLe,
                    other => return Err(malformed(format!("unsupported format `{other}`"))),
                });
            }
            "element" => {
                let name = tok
                    .next()
                    .ok_or_else(|| malformed("element without a name"))?
                    .to_string();
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| malformed(format!("element `{name}` has no valid count")))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(malformed("duplicate `vertex` element"));
                    }
                    vertex_count = Some(count);
                } else if count != 0 {
                    return Err(malformed(format!(
                        "element `{name}` is not supported (only `vertex`)"
                    )));
                }
                current = Some((name, count));
            }
            "property" => {
                let Some((elem, _)) = &current else {
                    return Err(malformed("property declared before any element"));
                };
                let ty = tok
                    .next()
                    .ok_or_else(|| malformed("property without a type"))?;
                if ty == "list" {
                    let name = tok.last().unwrap_or("?").to_string();
                    if elem == "vertex" {
                        return Err(PlyError::UnsupportedProperty {
                            name,
                            reason: "list properties are not supported".into(),
                        });
                    }
                    continue;
                }
                let name = tok
                    .next()
                    .ok_or_else(|| malformed("property without a name"))?
                    .to_string();
                let scalar = Scalar::parse(ty).ok_or_else(|| PlyError::UnsupportedProperty {
                    name: name.clone(),
                    reason: format!("unknown type `{ty}`"),
                })?;
                if elem == "vertex" {
                    if props.iter().any(|(n, _)| *n == name) {
                        return Err(malformed(format!("duplicate property `{name}`")));
                    }
                    props.push((name, scalar));
                }
            }
            other => return Err(malformed(format!("unknown header keyword `{other}`"))),
        }
    }

    let form = form.ok_or_else(|| malformed("missing `format` line"))?;
    let vertex_count = vertex_count.ok_or_else(|| malformed("missing `vertex` element"))?;
    Ok(Header {
        form,
        vertex_count,
        props,
        body_offset: offset,
    })
}

fn layout(props: &[(String, Scalar)]) -> Result<Layout, PlyError> {
    let find = |name: &str| props.iter().position(|(n, _)| n == name);
    let mut out = Layout::default();
    for (slot, axis) in ["x", "y", "z"].into_iter().enumerate() {
        let i = find(axis).ok_or_else(|| malformed(format!("missing property `{axis}`")))?;
        if props[i].1 != Scalar::F32 {
            return Err(PlyError::UnsupportedProperty {
                name: axis.into(),
                reason: "coordinates must be 32-bit float".into(),
            });
        }
        out.xyz[slot] = i;
    }
    let channels: Vec<Option<usize>> = ["red", "green", "blue"].into_iter().map(find).collect();
    match channels.as_slice() {
        [Some(r), Some(g), Some(b)] => {
            for &i in &[*r, *g, *b] {
                if props[i].1 != Scalar::U8 {
                    return Err(PlyError::UnsupportedProperty {
                        name: props[i].0.clone(),
                        reason: "color channels must be 8-bit unsigned".into(),
                    });
                }
            }
            out.rgb = Some([*r, *g, *b]);
        }
        [None, None, None] => {}
        _ => return Err(malformed("incomplete red/green/blue properties")),
    }
    if let Some(i) = find("part_label") {
        if !props[i].1.is_integer() {
            return Err(PlyError::UnsupportedProperty {
                name: "part_label".into(),
                reason: "part labels must be an integer type".into(),
            });
        }
        out.part = Some(i);
    }
    Ok(out)
}

fn assemble(rows: &[Vec<f64>], lay: &Layout) -> Result<PersonFrame, PlyError> {
    let points = rows
        .iter()
        .map(|r| [r[lay.xyz[0]], r[lay.xyz[1]], r[lay.xyz[2]]])
        .collect();
    let colors = lay.rgb.map(|[ri, gi, bi]| {
        rows.iter()
            .map(|r| [r[ri] / 255.0, r[gi] / 255.0, r[bi] / 255.0])
            .collect()
    });
    let part_labels = lay
        .part
        .map(|pi| rows.iter().map(|r| r[pi] as i32).collect());
    Ok(PersonFrame::new(points, colors, part_labels, 0.0)?)
}

/// Parse a PLY document into a frame with `timestamp_s = 0`.
pub fn parse_ply(bytes: &[u8]) -> Result<PersonFrame, PlyError> {
    let header = parse_header(bytes)?;
    let lay = layout(&header.props)?;
    let body = &bytes[header.body_offset..];
    let n = header.vertex_count;
    let width = header.props.len();
    let mut rows = Vec::with_capacity(n);

    match header.form {
        PlyForm::Ascii => {
            let text = String::from_utf8_lossy(body);
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for v in 0..n {
                let line = lines
                    .next()
                    .ok_or(PlyError::TruncatedBody { expected: n, read: v })?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() < width {
                    return Err(PlyError::TruncatedBody { expected: n, read: v });
                }
                let mut row = Vec::with_capacity(width);
                for (tok, (_, scalar)) in toks.iter().zip(&header.props) {
                    let value = if scalar.is_integer() {
                        tok.parse::<i64>().map(|x| x as f64).ok()
                    } else {
                        tok.parse::<f64>().ok()
                    };
                    let mut value = value.ok_or_else(|| PlyError::BadValue {
                        vertex: v,
                        token: tok.to_string(),
                    })?;
                    if *scalar == Scalar::F32 {
                        value = value as f32 as f64;
                    }
                    row.push(value);
                }
                rows.push(row);
            }
        }
        PlyForm::BinaryLe => {
            let stride: usize = header.props.iter().map(|(_, s)| s.size()).sum();
            let available = body.len() / stride.max(1);
            if available < n {
                return Err(PlyError::TruncatedBody {
                    expected: n,
                    read: available,
                });
            }
            let mut cur = Cursor::new(body);
            for _ in 0..n {
                let mut row = Vec::with_capacity(width);
                for (_, scalar) in &header.props {
                    // Length was checked above, so reads cannot run short.
                    row.push(scalar.read_le(&mut cur).expect("body length checked"));
                }
                rows.push(row);
            }
        }
    }
    assemble(&rows, &lay)
}

fn to_u8(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Serialize a frame. Coordinates are stored as 32-bit floats, colors as
/// 8-bit channels.
pub fn write_ply(frame: &PersonFrame, form: PlyForm) -> Result<Vec<u8>, FrameError> {
    frame.validate()?;
    let mut header = String::from("ply\n");
    header.push_str(match form {
        PlyForm::Ascii => "format ascii 1.0\n",
        PlyForm::BinaryLe => "format binary_little_endian 1.0\n",
    });
    header.push_str("comment georeid person frame\n");
    header.push_str(&format!("element vertex {}\n", frame.points.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if frame.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if frame.part_labels.is_some() {
        header.push_str("property int part_label\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for (i, p) in frame.points.iter().enumerate() {
        let rgb = frame.colors.as_ref().map(|c| c[i].map(to_u8));
        let part = frame.part_labels.as_ref().map(|l| l[i]);
        match form {
            PlyForm::Ascii => {
                // f32 Display is the shortest string that round-trips exactly.
                let mut line = format!("{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32);
                if let Some([r, g, b]) = rgb {
                    line.push_str(&format!(" {r} {g} {b}"));
                }
                if let Some(label) = part {
                    line.push_str(&format!(" {label}"));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyForm::BinaryLe => {
                for &v in p {
                    out.write_f32::<LittleEndian>(v as f32).expect("vec write");
                }
                if let Some(rgb) = rgb {
                    out.extend_from_slice(&rgb);
                }
                if let Some(label) = part {
                    out.write_i32::<LittleEndian>(label).expect("vec write");
                }
            }
        }
    }
    Ok(out)
}
