use std::fmt::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::{number, read_text, write_text};
use crate::error::{Error, Result};
use crate::mesh::ClothMesh;

/// Reads the `v`/`f` subset of Wavefront OBJ. Texture and normal indices on
/// faces are ignored; faces must be triangles.
pub fn parse_obj(text: &str, path: &Path, thickness: f64) -> Result<ClothMesh> {
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(kind) = toks.next() else { continue };
        let rest: Vec<&str> = toks.collect();
        match kind {
            "v" => {
                if rest.len() != 3 && rest.len() != 4 {
                    return Err(Error::parse(path, line, format!("vertex needs 3 coordinates, found {}", rest.len())));
                }
                let c: Vec<f64> = rest[..3].iter().map(|t| number(path, line, t)).collect::<Result<_>>()?;
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("face has {} vertices; only triangles are supported", rest.len()),
                    ));
                }
                let mut idx = [0i64; 3];
                for (k, t) in rest.iter().enumerate() {
                    let head = t.split('/').next().unwrap_or("");
                    let v: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(path, line, format!("bad vertex index '{t}'")))?;
                    let n = vertices.len() as i64;
                    idx[k] = match v {
                        0 => return Err(Error::parse(path, line, "vertex index 0 is invalid")),
                        v if v < 0 && -v <= n => n + v,
                        v if v > 0 => v - 1,
                        _ => return Err(Error::parse(path, line, format!("relative index {v} before vertex {n}"))),
                    };
                }
                faces.push((line, idx));
            }
            "vn" | "vt" | "vp" | "o" | "g" | "s" | "usemtl" | "mtllib" => {}
            other => return Err(Error::parse(path, line, format!("unsupported record '{other}'"))),
        }
    }
    let n = vertices.len();
    let mut triangles = Vec::with_capacity(faces.len());
    for (line, f) in faces {
        if let Some(bad) = f.iter().find(|&&v| v as usize >= n) {
            return Err(Error::parse(path, line, format!("vertex index {} exceeds {n} vertices", bad + 1)));
        }
        triangles.push(f.map(|v| v as usize));
    }
    if triangles.is_empty() {
        return Err(Error::parse(path, text.lines().count().max(1), "no faces"));
    }
    ClothMesh::new(vertices, triangles, thickness)
}

pub fn load_mesh(path: &Path, thickness: f64) -> Result<ClothMesh> {
    parse_obj(&read_text(path)?, path, thickness)
}

/// OBJ text for `positions` with the connectivity of `triangles`. Numbers use
/// the shortest representation that parses back to the same value.
pub fn write_obj(positions: &[Vector3<f64>], triangles: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(32 * (positions.len() + triangles.len()));
    for p in positions {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn save_mesh(path: &Path, mesh: &ClothMesh) -> Result<()> {
    write_text(path, &write_obj(&mesh.rest_vertices, &mesh.triangles))
}

/// One simulated frame as OBJ.
pub fn save_frame(path: &Path, positions: &[Vector3<f64>], mesh: &ClothMesh) -> Result<()> {
    write_text(path, &write_obj(positions, &mesh.triangles))
}
