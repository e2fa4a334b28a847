//! PLY reader/writer for the `vertex` element (ASCII and binary little-endian).
//!
//! Recognized vertex properties: `x y z` (any numeric type), `red green blue`,
//! `change_label` and `epoch`. Other scalar vertex properties are kept as
//! [`ExtraProperty`] and written back; list properties on vertices and all
//! non-vertex elements are skipped with a warning.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ChangeLabel, CloudError, ExtraProperty, Location, Point3, PointCloud, ScalarKind};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

impl ScalarKind {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarKind::I8,
            "uchar" | "uint8" => ScalarKind::U8,
            "short" | "int16" => ScalarKind::I16,
            "ushort" | "uint16" => ScalarKind::U16,
            "int" | "int32" => ScalarKind::I32,
            "uint" | "uint32" => ScalarKind::U32,
            "float" | "float32" => ScalarKind::F32,
            "double" | "float64" => ScalarKind::F64,
            _ => return None,
        })
    }

    fn ply_name(self) -> &'static str {
        match self {
            ScalarKind::I8 => "char",
            ScalarKind::U8 => "uchar",
            ScalarKind::I16 => "short",
            ScalarKind::U16 => "ushort",
            ScalarKind::I32 => "int",
            ScalarKind::U32 => "uint",
            ScalarKind::F32 => "float",
            ScalarKind::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            ScalarKind::I8 | ScalarKind::U8 => 1,
            ScalarKind::I16 | ScalarKind::U16 => 2,
            ScalarKind::I32 | ScalarKind::U32 | ScalarKind::F32 => 4,
            ScalarKind::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarKind::I8 => b[0] as i8 as f64,
            ScalarKind::U8 => b[0] as f64,
            ScalarKind::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarKind::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarKind::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarKind::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarKind::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarKind::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn write_le(self, v: f64, out: &mut Vec<u8>) {
        match self {
            ScalarKind::I8 => out.push(v as i8 as u8),
            ScalarKind::U8 => out.push(v as u8),
            ScalarKind::I16 => out.extend((v as i16).to_le_bytes()),
            ScalarKind::U16 => out.extend((v as u16).to_le_bytes()),
            ScalarKind::I32 => out.extend((v as i32).to_le_bytes()),
            ScalarKind::U32 => out.extend((v as u32).to_le_bytes()),
            ScalarKind::F32 => out.extend((v as f32).to_le_bytes()),
            ScalarKind::F64 => out.extend(v.to_le_bytes()),
        }
    }

    fn is_float(self) -> bool {
        matches!(self, ScalarKind::F32 | ScalarKind::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, kind: ScalarKind },
    List { name: String, count: ScalarKind, item: ScalarKind },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    /// Byte offset of the first body byte.
    body_start: usize,
    /// Line number (1-based) of the first body line.
    body_line: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header, CloudError> {
    let herr = |line: usize, msg: String| CloudError::Header {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| herr(line_no + 1, "missing end_header".into()))?;
        let raw = &bytes[pos..pos + end];
        pos += end + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| herr(line_no, "header is not valid UTF-8".into()))?
            .trim_end_matches('\r');
        let mut tok = line.split_whitespace();
        let Some(key) = tok.next() else { continue };
        if line_no == 1 {
            if key != "ply" {
                return Err(herr(1, "missing `ply` magic".into()));
            }
            continue;
        }
        match key {
            "format" => {
                encoding = Some(match tok.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLittleEndian,
                    Some(other) => return Err(herr(line_no, format!("unsupported format `{other}`"))),
                    None => return Err(herr(line_no, "format line without encoding".into())),
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = tok.next().ok_or_else(|| herr(line_no, "element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| herr(line_no, "element count is not a non-negative integer".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| herr(line_no, "property before any element".into()))?;
                let ty = tok.next().ok_or_else(|| herr(line_no, "property without type".into()))?;
                let prop = if ty == "list" {
                    let count = tok.next().and_then(ScalarKind::parse);
                    let item = tok.next().and_then(ScalarKind::parse);
                    let name = tok.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) => Property::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(herr(line_no, "malformed list property".into())),
                    }
                } else {
                    let kind = ScalarKind::parse(ty)
                        .ok_or_else(|| herr(line_no, format!("unknown property type `{ty}`")))?;
                    let name = tok.next().ok_or_else(|| herr(line_no, "property without name".into()))?;
                    Property::Scalar {
                        name: name.to_string(),
                        kind,
                    }
                };
                el.props.push(prop);
            }
            "end_header" => break,
            other => return Err(herr(line_no, format!("unexpected header keyword `{other}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| herr(line_no, "no format line".into()))?;
    Ok(Header {
        encoding,
        elements,
        body_start: pos,
        body_line: line_no + 1,
    })
}

/// Where each vertex property lands in the cloud.
#[derive(Clone, Copy)]
enum Slot {
    Coord(usize),
    Color(usize),
    Label,
    Epoch,
    Extra(usize),
    Skip,
}

fn vertex_slots(el: &Element, path: &Path) -> Result<(Vec<Slot>, Vec<ExtraProperty>), CloudError> {
    let mut slots = Vec::with_capacity(el.props.len());
    let mut extras = Vec::new();
    for p in &el.props {
        let slot = match p {
            Property::List { name, .. } => {
                log::warn!("{}: dropping vertex list property `{name}`", path.display());
                Slot::Skip
            }
            Property::Scalar { name, kind } => match name.as_str() {
                "x" => Slot::Coord(0),
                "y" => Slot::Coord(1),
                "z" => Slot::Coord(2),
                "red" | "r" => Slot::Color(0),
                "green" | "g" => Slot::Color(1),
                "blue" | "b" => Slot::Color(2),
                "change_label" => Slot::Label,
                "epoch" => Slot::Epoch,
                _ => {
                    extras.push(ExtraProperty {
                        name: name.clone(),
                        kind: *kind,
                        values: Vec::with_capacity(el.count),
                    });
                    Slot::Extra(extras.len() - 1)
                }
            },
        };
        slots.push(slot);
    }
    for (axis, n) in ["x", "y", "z"].iter().enumerate() {
        if !slots.iter().any(|s| matches!(s, Slot::Coord(a) if *a == axis)) {
            return Err(CloudError::Header {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("vertex element lacks `{n}`"),
            });
        }
    }
    Ok((slots, extras))
}

struct VertexSink {
    slots: Vec<Slot>,
    coords: Vec<[f64; 3]>,
    colors: Option<Vec<[u8; 3]>>,
    labels: Option<Vec<ChangeLabel>>,
    epochs: Option<Vec<u32>>,
    extras: Vec<ExtraProperty>,
    cur: [f64; 3],
    cur_color: [u8; 3],
}

impl VertexSink {
    fn new(slots: Vec<Slot>, extras: Vec<ExtraProperty>, count: usize) -> Self {
        let has = |f: fn(&Slot) -> bool| slots.iter().any(f);
        VertexSink {
            colors: has(|s| matches!(s, Slot::Color(_))).then(|| Vec::with_capacity(count)),
            labels: has(|s| matches!(s, Slot::Label)).then(|| Vec::with_capacity(count)),
            epochs: has(|s| matches!(s, Slot::Epoch)).then(|| Vec::with_capacity(count)),
            coords: Vec::with_capacity(count),
            slots,
            extras,
            cur: [0.0; 3],
            cur_color: [0; 3],
        }
    }

    fn put(&mut self, prop: usize, v: f64) {
        match self.slots[prop] {
            Slot::Coord(a) => self.cur[a] = v,
            Slot::Color(c) => self.cur_color[c] = v.clamp(0.0, 255.0) as u8,
            Slot::Label => self.labels.as_mut().unwrap().push(ChangeLabel::from_code(v as u8)),
            Slot::Epoch => self.epochs.as_mut().unwrap().push(v as u32),
            Slot::Extra(e) => self.extras[e].values.push(v),
            Slot::Skip => {}
        }
    }

    fn finish_vertex(&mut self) {
        self.coords.push(self.cur);
        if let Some(c) = self.colors.as_mut() {
            c.push(self.cur_color);
        }
    }

    fn into_cloud<T: Real>(self, path: &Path, loc: impl Fn(usize) -> Location) -> Result<PointCloud<T>, CloudError> {
        let mut points = Vec::with_capacity(self.coords.len());
        for (i, c) in self.coords.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite()) {
                return Err(CloudError::Parse {
                    path: path.to_path_buf(),
                    location: loc(i),
                    msg: format!("vertex {i} has a non-finite coordinate"),
                });
            }
            points.push(Point3::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2])));
        }
        let mut cloud = PointCloud::new(points)?;
        if let Some(c) = self.colors {
            cloud = cloud.with_colors(c)?;
        }
        if let Some(l) = self.labels {
            cloud = cloud.with_labels(l)?;
        }
        if let Some(e) = self.epochs {
            cloud = cloud.with_epochs(e)?;
        }
        for e in self.extras {
            cloud = cloud.with_extra(e)?;
        }
        Ok(cloud)
    }
}

pub fn read_ply<T: Real>(path: &Path) -> Result<PointCloud<T>, CloudError> {
    let bytes = fs::read(path).map_err(|source| CloudError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header = parse_header(path, &bytes)?;
    match header.encoding {
        Encoding::Ascii => read_ascii_body(path, &bytes, &header),
        Encoding::BinaryLittleEndian => read_binary_body(path, &bytes, &header),
    }
}

fn read_ascii_body<T: Real>(path: &Path, bytes: &[u8], header: &Header) -> Result<PointCloud<T>, CloudError> {
    let body = std::str::from_utf8(&bytes[header.body_start..]).map_err(|e| CloudError::Parse {
        path: path.to_path_buf(),
        location: Location::Byte((header.body_start + e.valid_up_to()) as u64),
        msg: "ASCII body is not valid UTF-8".into(),
    })?;
    let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let line_of = |i: usize| Location::Line(header.body_line + i);
    let perr = |i: usize, msg: String| CloudError::Parse {
        path: path.to_path_buf(),
        location: line_of(i),
        msg,
    };
    let mut sink = None;
    let mut last_line = 0usize;
    for el in &header.elements {
        let is_vertex = el.name == "vertex" && sink.is_none();
        if !is_vertex {
            if el.count > 0 {
                log::warn!("{}: skipping element `{}`", path.display(), el.name);
            }
            for _ in 0..el.count {
                if lines.next().is_none() {
                    break;
                }
            }
            continue;
        }
        let (slots, extras) = vertex_slots(el, path)?;
        let mut s = VertexSink::new(slots, extras, el.count);
        for read in 0..el.count {
            let Some((i, line)) = lines.next() else {
                return Err(CloudError::VertexCount {
                    path: path.to_path_buf(),
                    expected: el.count,
                    found: read,
                    location: line_of(last_line + 1),
                });
            };
            last_line = i;
            let mut tok = line.split_whitespace();
            let mut next = |what: &str| -> Result<f64, CloudError> {
                let t = tok.next().ok_or_else(|| perr(i, format!("missing value for `{what}`")))?;
                t.parse::<f64>()
                    .map_err(|_| perr(i, format!("cannot parse `{t}` for `{what}`")))
            };
            for (pi, p) in el.props.iter().enumerate() {
                match p {
                    Property::Scalar { name, .. } => {
                        let v = next(name)?;
                        s.put(pi, v);
                    }
                    Property::List { name, .. } => {
                        let n = next(name)? as usize;
                        for _ in 0..n {
                            next(name)?;
                        }
                    }
                }
            }
            if tok.next().is_some() {
                return Err(perr(i, "trailing values on vertex line".into()));
            }
            s.finish_vertex();
        }
        sink = Some(s);
    }
    match sink {
        Some(s) => s.into_cloud(path, |i| line_of(i)),
        None => Ok(PointCloud::empty()),
    }
}

fn read_binary_body<T: Real>(path: &Path, bytes: &[u8], header: &Header) -> Result<PointCloud<T>, CloudError> {
    let mut pos = header.body_start;
    let mut sink = None;
    let truncated = |expected: usize, found: usize, pos: usize| CloudError::VertexCount {
        path: path.to_path_buf(),
        expected,
        found,
        location: Location::Byte(pos as u64),
    };
    let mut vertex_offsets = Vec::new();
    for el in &header.elements {
        let is_vertex = el.name == "vertex" && sink.is_none();
        let mut s = if is_vertex {
            let (slots, extras) = vertex_slots(el, path)?;
            vertex_offsets.reserve(el.count);
            Some(VertexSink::new(slots, extras, el.count))
        } else {
            if el.count > 0 {
                log::warn!("{}: skipping element `{}`", path.display(), el.name);
            }
            None
        };
        for read in 0..el.count {
            let start = pos;
            for (pi, p) in el.props.iter().enumerate() {
                match p {
                    Property::Scalar { kind, .. } => {
                        let end = pos + kind.size();
                        if end > bytes.len() {
                            return Err(truncated(el.count, read, start));
                        }
                        if let Some(s) = s.as_mut() {
                            s.put(pi, kind.read_le(&bytes[pos..end]));
                        }
                        pos = end;
                    }
                    Property::List { count, item, .. } => {
                        let end = pos + count.size();
                        if end > bytes.len() {
                            return Err(truncated(el.count, read, start));
                        }
                        let n = count.read_le(&bytes[pos..end]) as usize;
                        pos = end + n * item.size();
                        if pos > bytes.len() {
                            return Err(truncated(el.count, read, start));
                        }
                    }
                }
            }
            if let Some(s) = s.as_mut() {
                s.finish_vertex();
                vertex_offsets.push(start);
            }
        }
        if is_vertex {
            sink = s;
        }
    }
    if pos < bytes.len() {
        log::warn!("{}: {} trailing bytes after last element", path.display(), bytes.len() - pos);
    }
    match sink {
        Some(s) => s.into_cloud(path, |i| Location::Byte(vertex_offsets[i] as u64)),
        None => Ok(PointCloud::empty()),
    }
}

pub fn write_ply<T: Real>(cloud: &PointCloud<T>, path: &Path, encoding: Encoding) -> Result<(), CloudError> {
    let io = |source| CloudError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    write_ply_to(cloud, &mut w, encoding).map_err(io)?;
    w.flush().map_err(io)
}

/// Serializes `cloud` as PLY into any writer.
pub fn write_ply_to<T: Real, W: Write>(cloud: &PointCloud<T>, w: &mut W, encoding: Encoding) -> std::io::Result<()> {
    let fmt = match encoding {
        Encoding::Ascii => "ascii",
        Encoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if cloud.colors().is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    if cloud.labels().is_some() {
        writeln!(w, "property uchar change_label")?;
    }
    if cloud.epochs().is_some() {
        writeln!(w, "property uint epoch")?;
    }
    for e in cloud.extras() {
        writeln!(w, "property {} {}", e.kind.ply_name(), e.name)?;
    }
    writeln!(w, "end_header")?;

    let mut buf = Vec::with_capacity(64);
    for (i, p) in cloud.iter().enumerate() {
        buf.clear();
        match encoding {
            Encoding::BinaryLittleEndian => {
                for a in 0..3 {
                    buf.extend(p[a].as_f64().to_le_bytes());
                }
                if let Some(c) = cloud.colors() {
                    buf.extend(c[i]);
                }
                if let Some(l) = cloud.labels() {
                    buf.push(l[i].code());
                }
                if let Some(e) = cloud.epochs() {
                    buf.extend(e[i].to_le_bytes());
                }
                for e in cloud.extras() {
                    e.kind.write_le(e.values[i], &mut buf);
                }
                w.write_all(&buf)?;
            }
            Encoding::Ascii => {
                write!(w, "{} {} {}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64())?;
                if let Some(c) = cloud.colors() {
                    write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
                }
                if let Some(l) = cloud.labels() {
                    write!(w, " {}", l[i].code())?;
                }
                if let Some(e) = cloud.epochs() {
                    write!(w, " {}", e[i])?;
                }
                for e in cloud.extras() {
                    if e.kind.is_float() {
                        write!(w, " {}", e.values[i])?;
                    } else {
                        write!(w, " {}", e.values[i] as i64)?;
                    }
                }
                writeln!(w)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn ascii_three_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "t.ply",
            b"ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n",
        );
        let c: PointCloud<f64> = read_ply(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.point(1), &Point3::new(1.0, 0.0, 0.0));
        assert_eq!(c.point(2), &Point3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn vertex_count_mismatch_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "t.ply",
            b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n",
        );
        match read_ply::<f64>(&p) {
            Err(CloudError::VertexCount { expected: 3, found: 2, location: Location::Line(l), .. }) => assert_eq!(l, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t.ply", b"ply\nformat ascii 1.0\nelement vertex x\nend_header\n");
        assert!(matches!(read_ply::<f64>(&p), Err(CloudError::Header { line: 3, .. })));
        let p = write(&dir, "u.ply", b"plx\n");
        assert!(matches!(read_ply::<f64>(&p), Err(CloudError::Header { line: 1, .. })));
    }

    #[test]
    fn bad_token_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "t.ply",
            b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 zz 0\n",
        );
        assert!(matches!(
            read_ply::<f64>(&p),
            Err(CloudError::Parse { location: Location::Line(9), .. })
        ));
    }

    #[test]
    fn truncated_binary_reports_byte() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        let body = bytes.len();
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            bytes.extend(v.to_le_bytes());
        }
        let p = write(&dir, "t.ply", &bytes);
        match read_ply::<f64>(&p) {
            Err(CloudError::VertexCount { found: 1, location: Location::Byte(b), .. }) => {
                assert_eq!(b as usize, body + 12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skips_faces_and_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "t.ply",
            b"ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nproperty list uchar int idx\nproperty float intensity\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 2 1 2 0.5\n1 0 0 0 1.5\n0 1 0 1 7 2.5\n3 0 1 2\n",
        );
        let c: PointCloud<f64> = read_ply(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.extras()[0].name, "intensity");
        assert_eq!(c.extras()[0].values, vec![0.5, 1.5, 2.5]);
    }
}
