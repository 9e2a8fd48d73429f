use std::path::Path;

use super::{atomic_write, read_bytes, IoError};
use crate::cloud::PointCloud;
use crate::gaussian::GaussianSet;
use crate::geometry::Vec3;
use crate::image::to_u8;
use crate::sh::{basis_count, MAX_SH_DEGREE};

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

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.props.iter().map(|p| p.1.size()).sum()
    }
}

/// Parsed vertex table: one column per property, all as f64.
struct VertexTable {
    count: usize,
    columns: Vec<(String, Vec<f64>)>,
}

impl VertexTable {
    fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.0 == name).map(|c| c.1.as_slice())
    }

    fn require(&self, name: &str, path: &Path) -> Result<&[f64], IoError> {
        self.column(name)
            .ok_or_else(|| IoError::format(path, format!("missing vertex property {name:?}")))
    }
}

fn parse(bytes: &[u8], path: &Path) -> Result<VertexTable, IoError> {
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| IoError::format(path, "no end_header"))?;
    let mut body = end + marker.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(IoError::format(path, "end_header not followed by newline"));
    }
    body += 1;
    let header =
        std::str::from_utf8(&bytes[..end]).map_err(|_| IoError::format(path, "header is not UTF-8"))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(IoError::format(path, "missing ply magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(IoError::format(path, format!("unsupported PLY format {fmt:?}")));
                }
                format_ok = true;
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| IoError::format(path, format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => {
                return Err(IoError::format(path, "list properties are not supported"));
            }
            ["property", ty, name] => {
                let e = elements
                    .last_mut()
                    .ok_or_else(|| IoError::format(path, "property before any element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| IoError::format(path, format!("unknown property type {ty:?}")))?;
                e.props.push((name.to_string(), ty));
            }
            _ => return Err(IoError::format(path, format!("malformed header line {line:?}"))),
        }
    }
    if !format_ok {
        return Err(IoError::format(path, "missing format line"));
    }
    let mut offset = body;
    for e in &elements {
        let stride = e.stride();
        let size = e
            .count
            .checked_mul(stride)
            .ok_or_else(|| IoError::format(path, "element size overflows"))?;
        if e.name != "vertex" {
            offset += size;
            continue;
        }
        let data = bytes.get(offset..offset + size).ok_or_else(|| {
            IoError::format(
                path,
                format!("truncated payload: {} vertices need {size} bytes", e.count),
            )
        })?;
        let mut columns: Vec<(String, Vec<f64>)> = e
            .props
            .iter()
            .map(|p| (p.0.clone(), Vec::with_capacity(e.count)))
            .collect();
        for row in data.chunks_exact(stride.max(1)).take(e.count) {
            let mut o = 0;
            for (k, (_, ty)) in e.props.iter().enumerate() {
                columns[k].1.push(ty.read(&row[o..]));
                o += ty.size();
            }
        }
        return Ok(VertexTable {
            count: e.count,
            columns,
        });
    }
    Err(IoError::format(path, "no vertex element"))
}

fn header(count: usize, props: &[(&str, &str)]) -> Vec<u8> {
    let mut h = format!("ply\nformat binary_little_endian 1.0\nelement vertex {count}\n");
    for (ty, name) in props {
        h.push_str(&format!("property {ty} {name}\n"));
    }
    h.push_str("end_header\n");
    h.into_bytes()
}

/// float x/y/z plus uchar red/green/blue when the cloud has colors.
pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let colored = cloud.colors.is_some();
    let mut props = vec![("float", "x"), ("float", "y"), ("float", "z")];
    if colored {
        props.extend([("uchar", "red"), ("uchar", "green"), ("uchar", "blue")]);
    }
    let mut out = header(cloud.len(), &props);
    for (i, p) in cloud.positions.iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(c) = &cloud.colors {
            out.extend(c[i].iter().map(|&v| to_u8(v)));
        }
    }
    out
}

pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<PointCloud, IoError> {
    let t = parse(bytes, path)?;
    let (x, y, z) = (
        t.require("x", path)?,
        t.require("y", path)?,
        t.require("z", path)?,
    );
    let positions = (0..t.count).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
    let colors = match (t.column("red"), t.column("green"), t.column("blue")) {
        (Some(r), Some(g), Some(b)) => Some(
            (0..t.count)
                .map(|i| [r[i] / 255.0, g[i] / 255.0, b[i] / 255.0])
                .collect(),
        ),
        _ => None,
    };
    PointCloud::new(positions, colors).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    atomic_write(path, &encode_cloud(cloud))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, IoError> {
    decode_cloud(&read_bytes(path)?, path)
}

/// Conventional splatting layout, all float32, unactivated values.
pub fn encode_gaussians(g: &GaussianSet) -> Vec<u8> {
    let rest = g.basis_count() - 1;
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
        .map(String::from)
        .to_vec();
    names.extend((0..3 * rest).map(|k| format!("f_rest_{k}")));
    names.push("opacity".into());
    names.extend((0..3).map(|k| format!("scale_{k}")));
    names.extend((0..4).map(|k| format!("rot_{k}")));
    let props: Vec<(&str, &str)> = names.iter().map(|n| ("float", n.as_str())).collect();
    let mut out = header(g.len(), &props);
    let mut row = Vec::with_capacity(names.len());
    for i in 0..g.len() {
        row.clear();
        row.extend_from_slice(&g.centers[i]);
        let sh = g.sh_coeffs(i);
        row.extend_from_slice(&sh[..3]);
        for c in 0..3 {
            for b in 1..=rest {
                row.push(sh[b * 3 + c]);
            }
        }
        row.push(g.opacity_logits[i]);
        row.extend_from_slice(&g.log_scales[i]);
        row.extend_from_slice(&g.rotations[i]);
        for v in &row {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_gaussians(bytes: &[u8], path: &Path) -> Result<GaussianSet, IoError> {
    let t = parse(bytes, path)?;
    let rest_count = (0..)
        .take_while(|k| t.column(&format!("f_rest_{k}")).is_some())
        .count();
    let degree = (0..=MAX_SH_DEGREE)
        .find(|&d| 3 * (basis_count(d) - 1) == rest_count)
        .ok_or_else(|| IoError::format(path, format!("{rest_count} f_rest properties match no SH degree")))?;
    let col = |n: &str| t.require(n, path);
    let xyz = [col("x")?, col("y")?, col("z")?];
    let dc = [col("f_dc_0")?, col("f_dc_1")?, col("f_dc_2")?];
    let rest: Vec<&[f64]> = (0..rest_count)
        .map(|k| col(&format!("f_rest_{k}")))
        .collect::<Result<_, _>>()?;
    let opacity = col("opacity")?;
    let scale = [col("scale_0")?, col("scale_1")?, col("scale_2")?];
    let rot = [col("rot_0")?, col("rot_1")?, col("rot_2")?, col("rot_3")?];
    let mut g = GaussianSet::empty(degree);
    let b = basis_count(degree);
    let mut sh = vec![0.0; 3 * b];
    for i in 0..t.count {
        for c in 0..3 {
            sh[c] = dc[c][i];
            for k in 1..b {
                sh[k * 3 + c] = rest[c * (b - 1) + k - 1][i];
            }
        }
        g.push(
            [xyz[0][i], xyz[1][i], xyz[2][i]],
            [scale[0][i], scale[1][i], scale[2][i]],
            [rot[0][i], rot[1][i], rot[2][i], rot[3][i]],
            opacity[i],
            &sh,
        );
    }
    Ok(g)
}

pub fn write_gaussians(path: &Path, g: &GaussianSet) -> Result<(), IoError> {
    atomic_write(path, &encode_gaussians(g))
}

pub fn read_gaussians(path: &Path) -> Result<GaussianSet, IoError> {
    decode_gaussians(&read_bytes(path)?, path)
}
