//! ASCII OBJ input and vertex-colored ASCII PLY output.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::math::Vec3;

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let file = fs::File::open(path)?;
    parse_obj(BufReader::new(file), path)
}

/// Parses `v` and `f` records; polygon faces are fan-triangulated. Face
/// indices are 1-based, negative indices count back from the latest vertex.
pub fn parse_obj(reader: impl Read, path: &Path) -> Result<Mesh> {
    let reader = BufReader::new(reader);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(err(lineno, "vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tokens {
                    let head = t.split('/').next().unwrap_or("");
                    let raw: i64 = head
                        .parse()
                        .map_err(|e| err(lineno, format!("bad face index {t:?}: {e}")))?;
                    let resolved = match raw {
                        0 => return Err(err(lineno, "face index 0 is invalid".into())),
                        r if r > 0 => r - 1,
                        r => vertices.len() as i64 + r,
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(lineno, format!("face index {raw} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(err(lineno, "face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

pub fn write_obj(mesh: &Mesh, mut out: impl Write) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

fn to_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an ASCII PLY with `uchar` RGB per vertex. `colors` are in `[0, 1]`
/// and are clamped.
pub fn write_ply(mesh: &Mesh, colors: &[[f64; 3]], mut out: impl Write) -> Result<()> {
    if colors.len() != mesh.vertex_count() {
        return Err(Error::invalid(format!(
            "{} colors for {} vertices",
            colors.len(),
            mesh.vertex_count()
        )));
    }
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.faces.len()
    )?;
    for (v, c) in mesh.vertices.iter().zip(colors) {
        writeln!(
            out,
            "{:.6} {:.6} {:.6} {} {} {}",
            v.x,
            v.y,
            v.z,
            to_byte(c[0]),
            to_byte(c[1]),
            to_byte(c[2])
        )?;
    }
    for f in &mesh.faces {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

/// Reads back the PLY subset produced by [`write_ply`].
pub fn read_ply(reader: impl Read) -> Result<(Mesh, Vec<[u8; 3]>)> {
    let path = Path::new("<ply>");
    let err = |line: usize, message: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (mut nv, mut nf) = (None, None);
    for (no, line) in lines.by_ref() {
        let line = line?;
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["element", "vertex", n] => nv = n.parse::<usize>().ok(),
            ["element", "face", n] => nf = n.parse::<usize>().ok(),
            ["end_header"] => break,
            ["format", f, ..] if *f != "ascii" => return Err(err(no + 1, "only ascii PLY is supported")),
            _ => {}
        }
    }
    let (nv, nf) = (
        nv.ok_or_else(|| err(0, "missing vertex element"))?,
        nf.unwrap_or(0),
    );
    let mut vertices = Vec::with_capacity(nv);
    let mut colors = Vec::with_capacity(nv);
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nv {
        let (no, line) = lines.next().ok_or_else(|| err(0, "truncated vertex list"))?;
        let line = line?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 6 {
            return Err(err(no + 1, "vertex row needs x y z r g b"));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| err(no + 1, "bad coordinate"));
        let b = |s: &str| s.parse::<u8>().map_err(|_| err(no + 1, "bad color"));
        vertices.push(Vec3::new(f(t[0])?, f(t[1])?, f(t[2])?));
        colors.push([b(t[3])?, b(t[4])?, b(t[5])?]);
    }
    for _ in 0..nf {
        let (no, line) = lines.next().ok_or_else(|| err(0, "truncated face list"))?;
        let line = line?;
        let t: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(no + 1, "bad face row"))?;
        if t.len() != 4 || t[0] != 3 {
            return Err(err(no + 1, "only triangle faces are supported"));
        }
        faces.push([t[1], t[2], t[3]]);
    }
    Ok((Mesh::new(vertices, faces)?, colors))
}
