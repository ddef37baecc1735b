//! PLY point clouds: ascii and binary little-endian.
//!
//! Reading accepts any scalar property type and any extra elements (skipped).
//! Writing always emits `double x, y, z`, `uchar red, green, blue` and, when
//! present, `uint instance_id`, so a write/read round trip is bit-exact.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use mbgs_core::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<[u8; 3]>,
    pub instance_ids: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>) -> Self {
        let colors = vec![[128, 128, 128]; positions.len()];
        PointCloud { positions, colors, instance_ids: None }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Where a parse failed: a 1-based line for headers and ascii bodies, a byte
/// offset into the binary body otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b} of the binary body"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlyError {
    #[error("{at}: {message}")]
    Parse { at: Location, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err<T>(at: Location, message: impl Into<String>) -> Result<T, PlyError> {
    Err(PlyError::Parse { at, message: message.into() })
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

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("eight bytes")),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    lines: usize,
}

fn read_header(r: &mut impl BufRead) -> Result<Header, PlyError> {
    let mut line = String::new();
    let mut n = 0;
    let mut next = |line: &mut String| -> Result<usize, PlyError> {
        line.clear();
        n += 1;
        if r.read_line(line)? == 0 {
            return parse_err(Location::Line(n), "unexpected end of header");
        }
        Ok(n)
    };
    let at = next(&mut line)?;
    if line.trim_end() != "ply" {
        return parse_err(Location::Line(at), "missing 'ply' magic");
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let at = next(&mut line)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", kind, _version] => {
                format = Some(match *kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return parse_err(Location::Line(at), format!("unsupported format '{other}'")),
                })
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .or_else(|_| parse_err(Location::Line(at), format!("bad element count '{count}'")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", c, i, _name] => {
                let (c, i) = match (Scalar::parse(c), Scalar::parse(i)) {
                    (Some(c), Some(i)) => (c, i),
                    _ => return parse_err(Location::Line(at), "unknown list property type"),
                };
                match elements.last_mut() {
                    Some(e) => e.properties.push(Property::List(c, i)),
                    None => return parse_err(Location::Line(at), "property before any element"),
                }
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .map_or_else(|| parse_err(Location::Line(at), format!("unknown property type '{ty}'")), Ok)?;
                match elements.last_mut() {
                    Some(e) => e.properties.push(Property::Scalar(name.to_string(), ty)),
                    None => return parse_err(Location::Line(at), "property before any element"),
                }
            }
            _ => return parse_err(Location::Line(at), format!("unrecognized header line '{}'", line.trim_end())),
        }
    }
    let format = match format {
        Some(f) => f,
        None => return parse_err(Location::Line(n), "header has no format line"),
    };
    Ok(Header { format, elements, lines: n })
}

/// Column indices of the vertex properties we read.
struct Columns {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    instance: Option<usize>,
}

fn columns(e: &Element, header_lines: usize) -> Result<Columns, PlyError> {
    let find = |n: &str| {
        e.properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
    };
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return parse_err(Location::Line(header_lines), "vertex element lacks x, y, z"),
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    Ok(Columns { xyz, rgb, instance: find("instance_id") })
}

fn color_byte(v: f64, at: Location) -> Result<u8, PlyError> {
    if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
        return parse_err(at, format!("color value {v} is not a byte"));
    }
    Ok(v as u8)
}

fn instance_value(v: f64, at: Location) -> Result<u32, PlyError> {
    if !(0.0..=u32::MAX as f64).contains(&v) || v.fract() != 0.0 {
        return parse_err(at, format!("instance id {v} is not a nonnegative integer"));
    }
    Ok(v as u32)
}

pub fn read_ply(r: impl Read) -> Result<PointCloud, PlyError> {
    let mut r = std::io::BufReader::new(r);
    let header = read_header(&mut r)?;
    let vertex = header.elements.iter().position(|e| e.name == "vertex");
    let vertex = match vertex {
        Some(v) => v,
        None => return parse_err(Location::Line(header.lines), "no vertex element"),
    };
    let cols = columns(&header.elements[vertex], header.lines)?;
    let mut cloud = PointCloud {
        positions: Vec::with_capacity(header.elements[vertex].count),
        colors: Vec::with_capacity(header.elements[vertex].count),
        instance_ids: cols.instance.map(|_| Vec::with_capacity(header.elements[vertex].count)),
    };
    let mut row = Vec::new();
    let push = |row: &[f64], at: Location, cloud: &mut PointCloud| -> Result<(), PlyError> {
        let p = Vec3::new(row[cols.xyz[0]], row[cols.xyz[1]], row[cols.xyz[2]]);
        if !p.is_finite() {
            return parse_err(at, "non-finite vertex position");
        }
        cloud.positions.push(p);
        cloud.colors.push(match cols.rgb {
            Some([a, b, c]) => [color_byte(row[a], at)?, color_byte(row[b], at)?, color_byte(row[c], at)?],
            None => [128, 128, 128],
        });
        if let (Some(i), Some(ids)) = (cols.instance, cloud.instance_ids.as_mut()) {
            ids.push(instance_value(row[i], at)?);
        }
        Ok(())
    };
    match header.format {
        PlyFormat::Ascii => {
            let mut line_no = header.lines;
            let mut line = String::new();
            for (ei, e) in header.elements.iter().enumerate() {
                for _ in 0..e.count {
                    line.clear();
                    line_no += 1;
                    if r.read_line(&mut line)? == 0 {
                        return parse_err(Location::Line(line_no), format!("file ends inside element '{}'", e.name));
                    }
                    if ei != vertex {
                        continue;
                    }
                    row.clear();
                    let mut words = line.split_whitespace();
                    for p in &e.properties {
                        let mut take = |what: &str| -> Result<f64, PlyError> {
                            let w = match words.next() {
                                Some(w) => w,
                                None => return parse_err(Location::Line(line_no), format!("missing value for {what}")),
                            };
                            w.parse::<f64>()
                                .or_else(|_| parse_err(Location::Line(line_no), format!("bad number '{w}'")))
                        };
                        match p {
                            Property::Scalar(name, _) => row.push(take(name)?),
                            Property::List(..) => {
                                let n = take("list length")? as usize;
                                for _ in 0..n {
                                    take("list entry")?;
                                }
                                row.push(0.0);
                            }
                        }
                    }
                    if words.next().is_some() {
                        return parse_err(Location::Line(line_no), "extra values on vertex line");
                    }
                    push(&row, Location::Line(line_no), &mut cloud)?;
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut offset = 0usize;
            let mut buf = [0u8; 8];
            let mut read_scalar = |s: Scalar, offset: &mut usize| -> Result<f64, PlyError> {
                let n = s.size();
                if let Err(e) = r.read_exact(&mut buf[..n]) {
                    return if e.kind() == std::io::ErrorKind::UnexpectedEof {
                        parse_err(Location::Byte(*offset), "binary body ends early")
                    } else {
                        Err(e.into())
                    };
                }
                *offset += n;
                Ok(s.decode(&buf[..n]))
            };
            for (ei, e) in header.elements.iter().enumerate() {
                for _ in 0..e.count {
                    let at = Location::Byte(offset);
                    row.clear();
                    for p in &e.properties {
                        match p {
                            Property::Scalar(_, s) => row.push(read_scalar(*s, &mut offset)?),
                            Property::List(c, i) => {
                                let n = read_scalar(*c, &mut offset)? as usize;
                                for _ in 0..n {
                                    read_scalar(*i, &mut offset)?;
                                }
                                row.push(0.0);
                            }
                        }
                    }
                    if ei == vertex {
                        push(&row, at, &mut cloud)?;
                    }
                }
            }
        }
    }
    Ok(cloud)
}

fn check_cloud(cloud: &PointCloud) -> std::io::Result<()> {
    let bad = cloud.colors.len() != cloud.len()
        || cloud.instance_ids.as_ref().is_some_and(|i| i.len() != cloud.len())
        || cloud.positions.iter().any(|p| !p.is_finite());
    if bad {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "point cloud attributes are inconsistent or non-finite",
        ));
    }
    Ok(())
}

pub fn write_ply(mut w: impl Write, cloud: &PointCloud, format: PlyFormat) -> std::io::Result<()> {
    check_cloud(cloud)?;
    let name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut head = format!("ply\nformat {name} 1.0\nelement vertex {}\n", cloud.len());
    head.push_str("property double x\nproperty double y\nproperty double z\n");
    head.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    if cloud.instance_ids.is_some() {
        head.push_str("property uint instance_id\n");
    }
    head.push_str("end_header\n");
    w.write_all(head.as_bytes())?;
    let mut out = std::io::BufWriter::new(w);
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        let c = cloud.colors[i];
        let id = cloud.instance_ids.as_ref().map(|v| v[i]);
        match format {
            PlyFormat::Ascii => {
                // `{:?}` prints the shortest decimal that parses back to the same bits
                write!(out, "{:?} {:?} {:?} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2])?;
                if let Some(id) = id {
                    write!(out, " {id}")?;
                }
                out.write_all(b"\n")?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    out.write_all(&v.to_le_bytes())?;
                }
                out.write_all(&c)?;
                if let Some(id) = id {
                    out.write_all(&id.to_le_bytes())?;
                }
            }
        }
    }
    out.flush()
}

/// Error that also names the file.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct PlyFileError {
    pub path: String,
    #[source]
    pub source: PlyError,
}

pub fn load_ply(path: &Path) -> Result<PointCloud, PlyFileError> {
    let wrap = |source| PlyFileError { path: path.display().to_string(), source };
    let f = std::fs::File::open(path).map_err(|e| wrap(e.into()))?;
    read_ply(f).map_err(wrap)
}

pub fn save_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> std::io::Result<()> {
    crate::fsio::write_atomic(path, |w| write_ply(w, cloud, format))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PointCloud {
        PointCloud {
            positions: vec![Vec3::new(0.1, -2.5e-7, 3.0), Vec3::new(1.0 / 3.0, 1e300, -0.0)],
            colors: vec![[0, 128, 255], [1, 2, 3]],
            instance_ids: Some(vec![0, 7]),
        }
    }

    fn round_trip(format: PlyFormat) -> PointCloud {
        let mut buf = Vec::new();
        write_ply(&mut buf, &sample(), format).unwrap();
        read_ply(buf.as_slice()).unwrap()
    }

    #[test]
    fn round_trips_are_bit_exact() {
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let back = round_trip(f);
            assert_eq!(back, sample());
            for (a, b) in back.positions.iter().zip(&sample().positions) {
                assert_eq!(a.x.to_bits(), b.x.to_bits());
                assert_eq!(a.z.to_bits(), b.z.to_bits());
            }
        }
    }

    #[test]
    fn reads_float_vertices_and_skips_faces() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0.5 0\n3 0 1 1\n";
        let c = read_ply(text.as_bytes()).unwrap();
        assert_eq!(c.positions[1], Vec3::new(1.0, 0.5, 0.0));
        assert_eq!(c.colors[0], [128, 128, 128]);
        assert!(c.instance_ids.is_none());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n1 zero 0\n";
        match read_ply(text.as_bytes()) {
            Err(PlyError::Parse { at: Location::Line(9), .. }) => {}
            other => panic!("{other:?}"),
        }
        let bad = "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\n";
        assert!(matches!(read_ply(bad.as_bytes()), Err(PlyError::Parse { at: Location::Line(4), .. })));
        let truncated = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n";
        assert!(matches!(read_ply(truncated.as_bytes()), Err(PlyError::Parse { at: Location::Line(9), .. })));
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let mut buf = Vec::new();
        write_ply(&mut buf, &sample(), PlyFormat::BinaryLittleEndian).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_ply(buf.as_slice()), Err(PlyError::Parse { at: Location::Byte(_), .. })));
    }

    #[test]
    fn rejects_big_endian() {
        let t = "ply\nformat binary_big_endian 1.0\nend_header\n";
        assert!(read_ply(t.as_bytes()).is_err());
    }
}
