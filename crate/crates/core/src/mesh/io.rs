use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point3;

use super::TriMesh;
use crate::error::{Error, Result};

/// Supported mesh file formats. Binary PLY is not supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    PlyAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(Self::Obj),
            "off" => Some(Self::Off),
            "ply" => Some(Self::PlyAscii),
            _ => None,
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(Self::Obj),
            "off" => Ok(Self::Off),
            "ply" | "ply-ascii" => Ok(Self::PlyAscii),
            other => Err(Error::UnknownName {
                what: "mesh format",
                name: other.to_string(),
            }),
        }
    }
}

/// Loads a mesh. When `format` is `None` it is inferred from the extension.
pub fn load_mesh(path: &Path, format: Option<MeshFormat>) -> Result<TriMesh> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let format = match format.or_else(|| MeshFormat::from_path(path)) {
        Some(f) => f,
        None => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: "cannot infer mesh format from extension".into(),
            })
        }
    };
    let text = fs::read_to_string(path)?;
    parse_mesh(&text, format).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

/// Parses mesh text. Polygons with more than three corners are fan-split
/// from their first corner.
pub fn parse_mesh(text: &str, format: MeshFormat) -> Result<TriMesh> {
    let (vertices, polygons) = match format {
        MeshFormat::Obj => parse_obj(text)?,
        MeshFormat::Off => parse_off(text)?,
        MeshFormat::PlyAscii => parse_ply(text)?,
    };
    let mut faces = Vec::with_capacity(polygons.len());
    for poly in polygons {
        if poly.len() < 3 {
            return Err(parse_err(format!("polygon with {} corners", poly.len())));
        }
        for k in 1..poly.len() - 1 {
            faces.push([poly[0], poly[k], poly[k + 1]]);
        }
    }
    TriMesh::new(vertices, faces)
}

fn parse_err(message: impl Into<String>) -> Error {
    Error::Parse {
        path: "<text>".into(),
        message: message.into(),
    }
}

fn num<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(format!("invalid {what} `{tok}`")))
}

type Parsed = (Vec<Point3<f64>>, Vec<Vec<usize>>);

fn parse_obj(text: &str) -> Result<Parsed> {
    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = num(toks.next(), "x")?;
                let y = num(toks.next(), "y")?;
                let z = num(toks.next(), "z")?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(format!("line {}: bad face index `{tok}`", ln + 1)))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(parse_err(format!("line {}: face index 0", ln + 1)));
                    };
                    if resolved < 0 {
                        return Err(parse_err(format!("line {}: face index {idx}", ln + 1)));
                    }
                    poly.push(resolved as usize);
                }
                polygons.push(poly);
            }
            _ => {}
        }
    }
    Ok((vertices, polygons))
}

fn parse_off(text: &str) -> Result<Parsed> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| parse_err("empty file"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("OFF") {
        return Err(parse_err(format!("expected OFF header, found `{header}`")));
    }
    let counts: Vec<&str> = match head.next() {
        Some(first) => std::iter::once(first).chain(head).collect(),
        None => lines
            .next()
            .ok_or_else(|| parse_err("missing counts"))?
            .split_whitespace()
            .collect(),
    };
    let mut counts = counts.into_iter();
    let nv: usize = num(counts.next(), "vertex count")?;
    let nf: usize = num(counts.next(), "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| parse_err("truncated vertex list"))?;
        let mut toks = line.split_whitespace();
        let x = num(toks.next(), "x")?;
        let y = num(toks.next(), "y")?;
        let z = num(toks.next(), "z")?;
        vertices.push(Point3::new(x, y, z));
    }
    // Trailing tokens after the indices (per-face colours) are ignored.
    let mut polygons = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| parse_err("truncated face list"))?;
        let mut toks = line.split_whitespace();
        let k: usize = num(toks.next(), "face size")?;
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            poly.push(num(toks.next(), "face index")?);
        }
        polygons.push(poly);
    }
    Ok((vertices, polygons))
}

fn parse_ply(text: &str) -> Result<Parsed> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(parse_err("missing `ply` magic"));
    }

    struct Element {
        name: String,
        count: usize,
        props: Vec<(String, bool)>,
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or_else(|| parse_err("unterminated header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", ..] => ascii = true,
            ["format", other, ..] => {
                return Err(parse_err(format!("unsupported PLY format `{other}`")));
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: num(Some(count), "element count")?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err("property before element"))?
                .props
                .push((name.to_string(), true)),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err("property before element"))?
                .props
                .push((name.to_string(), false)),
            ["end_header"] => break,
            _ => {}
        }
    }
    if !ascii {
        return Err(parse_err("missing ascii format line"));
    }

    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    let mut body = lines.filter(|l| !l.trim().is_empty());
    for el in &elements {
        for _ in 0..el.count {
            let line = body
                .next()
                .ok_or_else(|| parse_err(format!("truncated `{}` element", el.name)))?;
            let mut toks = line.split_whitespace();
            let mut xyz = [None; 3];
            let mut poly = None;
            for (prop, is_list) in &el.props {
                if *is_list {
                    let k: usize = num(toks.next(), "list length")?;
                    let mut items = Vec::with_capacity(k);
                    for _ in 0..k {
                        items.push(num::<usize>(toks.next(), "list item")?);
                    }
                    if prop == "vertex_indices" || prop == "vertex_index" {
                        poly = Some(items);
                    }
                } else {
                    let v: f64 = num(toks.next(), prop)?;
                    match prop.as_str() {
                        "x" => xyz[0] = Some(v),
                        "y" => xyz[1] = Some(v),
                        "z" => xyz[2] = Some(v),
                        _ => {}
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => match xyz {
                    [Some(x), Some(y), Some(z)] => vertices.push(Point3::new(x, y, z)),
                    _ => return Err(parse_err("vertex element lacks x/y/z")),
                },
                "face" => polygons.push(poly.ok_or_else(|| parse_err("face without vertex_indices"))?),
                _ => {}
            }
        }
    }
    Ok((vertices, polygons))
}

/// Writes OBJ text (`v` and `f` lines, 1-based). Coordinates use the
/// shortest round-trip float representation.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for p in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    fs::write(path, write_obj(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn single_triangle_off() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let mesh = parse_mesh(text, MeshFormat::Off).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.face_count(), 1);
    }

    #[test]
    fn off_quad_is_fan_split() {
        let text = "OFF\n# a unit square\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let mesh = parse_mesh(text, MeshFormat::Off).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn off_with_face_colors() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2 255 0 0\n";
        let mesh = parse_mesh(text, MeshFormat::Off).unwrap();
        assert_eq!(mesh.face_count(), 1);
    }

    #[test]
    fn obj_with_slashes_and_negative_indices() {
        let text = "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 -1//1\n";
        let mesh = parse_mesh(text, MeshFormat::Obj).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn ply_ascii_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 1\n1 0 0 1\n1 1 0 1\n0 1 0 1\n4 0 1 2 3\n";
        let mesh = parse_mesh(text, MeshFormat::PlyAscii).unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.face_count(), 2);
    }

    #[test]
    fn binary_ply_is_rejected() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(
            parse_mesh(text, MeshFormat::PlyAscii),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn malformed_off_is_parse_error() {
        let text = "OFF\n3 1 0\n0 0 zero\n";
        assert!(matches!(parse_mesh(text, MeshFormat::Off), Err(Error::Parse { .. })));
    }

    #[test]
    fn out_of_range_face() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n";
        assert!(matches!(
            parse_mesh(text, MeshFormat::Off),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn icosphere_obj_counts() {
        let sphere = primitives::icosphere(3);
        let parsed = parse_mesh(&write_obj(&sphere), MeshFormat::Obj).unwrap();
        // V = 10 * 4^s + 2, F = 20 * 4^s
        assert_eq!(parsed.vertex_count(), 642);
        assert_eq!(parsed.face_count(), 1280);
    }

    #[test]
    fn missing_file() {
        let err = load_mesh(Path::new("/nonexistent/mesh.off"), None).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }
}
