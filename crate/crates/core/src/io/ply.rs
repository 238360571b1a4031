//! PLY point clouds. Written as `binary_little_endian 1.0` with float32
//! `x y z` and optional `nx ny nz`. The reader also accepts ASCII files and
//! any scalar property types on the vertex element.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} points but {} normals",
                    points.len(),
                    n.len()
                )));
            }
        }
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let has_n = self.normals.is_some();
        let mut header = format!(
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
            self.points.len()
        );
        if has_n {
            header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
        }
        header.push_str("end_header\n");
        let mut out = header.into_bytes();
        for (i, p) in self.points.iter().enumerate() {
            for c in p.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
            if let Some(n) = &self.normals {
                for c in n[i].iter() {
                    out.extend_from_slice(&(*c as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = b"end_header";
        let hpos = bytes
            .windows(end.len())
            .position(|w| w == end)
            .ok_or_else(|| Error::format("PLY", "missing end_header"))?;
        let mut body = hpos + end.len();
        if bytes.get(body) == Some(&b'\r') {
            body += 1;
        }
        if bytes.get(body) != Some(&b'\n') {
            return Err(Error::format("PLY", "end_header must end its line"));
        }
        body += 1;
        let header = std::str::from_utf8(&bytes[..hpos]).map_err(|_| Error::format("PLY", "header is not UTF-8"))?;
        let spec = parse_header(header)?;
        let values = match spec.encoding {
            Encoding::Ascii => read_ascii(&bytes[body..], &spec)?,
            Encoding::BinaryLe => read_binary(&bytes[body..], &spec, true)?,
            Encoding::BinaryBe => read_binary(&bytes[body..], &spec, false)?,
        };
        let idx = |name: &str| spec.props.iter().position(|p| p.name == name);
        let (x, y, z) = match (idx("x"), idx("y"), idx("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(Error::format("PLY", "vertex element lacks x, y, z")),
        };
        let normal_idx = match (idx("nx"), idx("ny"), idx("nz")) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            _ => None,
        };
        let np = spec.props.len();
        let points = (0..spec.count)
            .map(|i| Vec3::new(values[i * np + x], values[i * np + y], values[i * np + z]))
            .collect();
        let normals = normal_idx.map(|(a, b, c)| {
            (0..spec.count)
                .map(|i| Vec3::new(values[i * np + a], values[i * np + b], values[i * np + c]))
                .collect()
        });
        Ok(PointCloud { points, normals })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn decode(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                (if little { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

struct Prop {
    name: String,
    ty: Scalar,
}

struct VertexSpec {
    encoding: Encoding,
    count: usize,
    props: Vec<Prop>,
}

fn parse_header(header: &str) -> Result<VertexSpec> {
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::format("PLY", "missing ply magic"));
    }
    let mut encoding = None;
    let mut vertex: Option<(usize, Vec<Prop>)> = None;
    let mut in_vertex = false;
    let mut seen_other_before_vertex = false;
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _] => {
                encoding = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => Encoding::BinaryBe,
                    other => return Err(Error::format("PLY", format!("unknown format {other}"))),
                });
            }
            ["element", name, n] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::format("PLY", format!("bad element count {n:?}")))?;
                if *name == "vertex" {
                    vertex = Some((n, Vec::new()));
                    in_vertex = true;
                } else {
                    if vertex.is_none() && n > 0 {
                        seen_other_before_vertex = true;
                    }
                    in_vertex = false;
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(Error::format("PLY", "list properties on vertices are not supported"));
                }
            }
            ["property", ty, name] => {
                if in_vertex {
                    let ty = Scalar::parse(ty).ok_or_else(|| Error::format("PLY", format!("unknown type {ty}")))?;
                    if let Some((_, props)) = vertex.as_mut() {
                        props.push(Prop {
                            name: name.to_string(),
                            ty,
                        });
                    }
                }
            }
            _ => return Err(Error::format("PLY", format!("unrecognized header line {line:?}"))),
        }
    }
    if seen_other_before_vertex {
        return Err(Error::format("PLY", "vertex element must come first"));
    }
    let encoding = encoding.ok_or_else(|| Error::format("PLY", "missing format line"))?;
    let (count, props) = vertex.ok_or_else(|| Error::format("PLY", "missing vertex element"))?;
    Ok(VertexSpec { encoding, count, props })
}

fn read_binary(body: &[u8], spec: &VertexSpec, little: bool) -> Result<Vec<f64>> {
    let stride: usize = spec.props.iter().map(|p| p.ty.size()).sum();
    if body.len() < stride * spec.count {
        return Err(Error::format(
            "PLY",
            format!("body has {} bytes, need {}", body.len(), stride * spec.count),
        ));
    }
    let mut out = Vec::with_capacity(spec.count * spec.props.len());
    for i in 0..spec.count {
        let mut off = i * stride;
        for p in &spec.props {
            out.push(p.ty.decode(&body[off..], little));
            off += p.ty.size();
        }
    }
    Ok(out)
}

fn read_ascii(body: &[u8], spec: &VertexSpec) -> Result<Vec<f64>> {
    let text = std::str::from_utf8(body).map_err(|_| Error::format("PLY", "ASCII body is not UTF-8"))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut out = Vec::with_capacity(spec.count * spec.props.len());
    for i in 0..spec.count {
        let line = lines
            .next()
            .ok_or_else(|| Error::format("PLY", format!("missing vertex line {i}")))?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() < spec.props.len() {
            return Err(Error::format("PLY", format!("vertex line {i} has too few values")));
        }
        for v in &vals[..spec.props.len()] {
            out.push(
                v.parse::<f64>()
                    .map_err(|_| Error::format("PLY", format!("bad number {v:?}")))?,
            );
        }
    }
    Ok(out)
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    PointCloud::from_bytes(&fs::read(path)?)
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    fs::write(path, cloud.to_bytes())?;
    Ok(())
}
