//! OFF, OBJ and ASCII PLY readers; OFF writer.
//!
//! Polygonal faces are fan-triangulated. Vertex order is always kept as in the file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Mesh, MeshOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    PlyAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("off") => Ok(Self::Off),
            Some("obj") => Ok(Self::Obj),
            Some("ply") => Ok(Self::PlyAscii),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer mesh format from {}",
                path.display()
            ))),
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "obj" => Ok(Self::Obj),
            "ply" | "ply-ascii" => Ok(Self::PlyAscii),
            other => Err(Error::InvalidArgument(format!("unknown mesh format {other:?}"))),
        }
    }
}

/// Loads a mesh, inferring the format from the extension when `format` is `None`.
pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<Mesh> {
    load_mesh_with(path, format, MeshOptions::default())
}

pub fn load_mesh_with(
    path: impl AsRef<Path>,
    format: Option<MeshFormat>,
    options: MeshOptions,
) -> Result<Mesh> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_mesh(&text, format, options)
}

pub fn parse_mesh(text: &str, format: MeshFormat, options: MeshOptions) -> Result<Mesh> {
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(text)?,
        MeshFormat::Obj => parse_obj(text)?,
        MeshFormat::PlyAscii => parse_ply(text)?,
    };
    Mesh::with_options(vertices, faces, options)
}

type Raw = (Vec<[f64; 3]>, Vec<[usize; 3]>);

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid number {tok:?}")))
}

fn triangulate(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len() - 1 {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
}

/// Tokens of non-empty, non-comment lines paired with 1-based line numbers.
fn significant_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn parse_off(text: &str) -> Result<Raw> {
    let mut lines = significant_lines(text);
    let (ln, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut header: Vec<&str> = first;
    if header[0].eq_ignore_ascii_case("OFF") {
        header.remove(0);
        if header.is_empty() {
            header = lines
                .next()
                .map(|(_, t)| t)
                .ok_or_else(|| parse_err(ln, "missing OFF counts"))?;
        }
    } else if header[0].to_ascii_uppercase().ends_with("OFF") {
        return Err(parse_err(ln, format!("unsupported OFF variant {:?}", header[0])));
    }
    if header.len() < 2 {
        return Err(parse_err(ln, "expected vertex and face counts"));
    }
    let nv: usize = parse_num(header[0], ln)?;
    let nf: usize = parse_num(header[1], ln)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, t) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("expected {nv} vertices")))?;
        if t.len() < 3 {
            return Err(parse_err(ln, "vertex needs three coordinates"));
        }
        vertices.push([
            parse_num(t[0], ln)?,
            parse_num(t[1], ln)?,
            parse_num(t[2], ln)?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, t) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("expected {nf} faces")))?;
        let count: usize = parse_num(t[0], ln)?;
        if count < 3 || t.len() < count + 1 {
            return Err(parse_err(ln, "face needs at least three indices"));
        }
        let poly: Vec<usize> = t[1..=count]
            .iter()
            .map(|s| parse_num(s, ln))
            .collect::<Result<_>>()?;
        triangulate(&poly, &mut faces);
    }
    Ok((vertices, faces))
}

fn parse_obj(text: &str) -> Result<Raw> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, t) in significant_lines(text) {
        match t[0] {
            "v" => {
                if t.len() < 4 {
                    return Err(parse_err(ln, "vertex needs three coordinates"));
                }
                vertices.push([
                    parse_num(t[1], ln)?,
                    parse_num(t[2], ln)?,
                    parse_num(t[3], ln)?,
                ]);
            }
            "f" => {
                if t.len() < 4 {
                    return Err(parse_err(ln, "face needs at least three indices"));
                }
                let poly: Vec<usize> = t[1..]
                    .iter()
                    .map(|s| {
                        let idx: i64 = parse_num(s.split('/').next().unwrap_or(""), ln)?;
                        let n = vertices.len() as i64;
                        let resolved = if idx < 0 { n + idx } else { idx - 1 };
                        if idx == 0 || resolved < 0 {
                            return Err(parse_err(ln, format!("invalid face index {idx}")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                triangulate(&poly, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_ply(text: &str) -> Result<Raw> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(1, "missing ply magic")),
    }
    let mut nv = None;
    let mut nf = None;
    let mut current = "";
    let mut vertex_props: Vec<String> = Vec::new();
    loop {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "unterminated header"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.first().copied() {
            Some("format") => {
                if t.get(1) != Some(&"ascii") {
                    return Err(parse_err(ln, "only ascii PLY is supported"));
                }
            }
            Some("element") if t.len() >= 3 => {
                let count: usize = parse_num(t[2], ln)?;
                current = if t[1] == "vertex" {
                    nv = Some(count);
                    "vertex"
                } else if t[1] == "face" {
                    nf = Some(count);
                    "face"
                } else {
                    return Err(parse_err(ln, format!("unsupported element {:?}", t[1])));
                };
            }
            Some("property") if current == "vertex" => {
                vertex_props.push(t.last().unwrap_or(&"").to_string());
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let nv = nv.ok_or_else(|| parse_err(0, "no vertex element"))?;
    let nf = nf.unwrap_or(0);
    let pos = |name: &str| vertex_props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (pos("x"), pos("y"), pos("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(0, "vertex element lacks x/y/z")),
    };
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = body.next().ok_or_else(|| parse_err(0, "truncated vertex list"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() < vertex_props.len() {
            return Err(parse_err(ln, "too few vertex properties"));
        }
        vertices.push([parse_num(t[ix], ln)?, parse_num(t[iy], ln)?, parse_num(t[iz], ln)?]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = body.next().ok_or_else(|| parse_err(0, "truncated face list"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        let count: usize = parse_num(t[0], ln)?;
        if count < 3 || t.len() < count + 1 {
            return Err(parse_err(ln, "face needs at least three indices"));
        }
        let poly: Vec<usize> = t[1..=count]
            .iter()
            .map(|s| parse_num(s, ln))
            .collect::<Result<_>>()?;
        triangulate(&poly, &mut faces);
    }
    Ok((vertices, faces))
}

/// OFF text; coordinates use shortest round-trip formatting so reading it back is lossless.
pub fn to_off_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF\n{} {} 0", mesh.n_vertices(), mesh.n_faces());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

pub fn write_off(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_off_string(mesh)).map_err(Error::io(path))
}
