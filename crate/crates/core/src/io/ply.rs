use std::fmt::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::{number, read_text, write_text};
use crate::error::{Error, Result};

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
}

/// Vertex positions from an ASCII PLY file. Other elements are skipped.
pub fn parse_ply(text: &str, path: &Path) -> Result<Vec<Vector3<f64>>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    let mut header_end = None;
    for (line, l) in lines.by_ref() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", "1.0"] => format_seen = true,
            ["format", other, ..] => return Err(Error::parse(path, line, format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            ["property", "list", _, _, name] => {
                let e = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, line, "property before any element"))?;
                e.properties.push(name.to_string());
                e.has_list = true;
            }
            ["property", _, name] => {
                let e = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, line, "property before any element"))?;
                e.properties.push(name.to_string());
            }
            ["end_header"] => {
                header_end = Some(line);
                break;
            }
            _ => return Err(Error::parse(path, line, format!("unexpected header line '{l}'"))),
        }
    }
    let Some(header_end) = header_end else {
        return Err(Error::parse(path, text.lines().count().max(1), "missing end_header"));
    };
    if !format_seen {
        return Err(Error::parse(path, header_end, "missing 'format ascii 1.0'"));
    }
    let Some(vi) = elements.iter().position(|e| e.name == "vertex") else {
        return Err(Error::parse(path, header_end, "no vertex element"));
    };
    let v = &elements[vi];
    if v.has_list {
        return Err(Error::parse(path, header_end, "vertex element has a list property"));
    }
    let col = |name: &str| {
        v.properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::parse(path, header_end, format!("vertex element lacks property '{name}'")))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
    let mut points = Vec::with_capacity(v.count.min(1 << 20));
    let mut last = header_end;
    for (ei, e) in elements.iter().enumerate() {
        for _ in 0..e.count {
            let Some((line, l)) = lines.next() else {
                return Err(Error::parse(
                    path,
                    last + 1,
                    format!("file ends inside element '{}' ({} expected)", e.name, e.count),
                ));
            };
            last = line;
            if ei != vi {
                continue;
            }
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != e.properties.len() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {} values, found {}", e.properties.len(), toks.len()),
                ));
            }
            for t in &toks {
                number(path, line, t)?;
            }
            points.push(Vector3::new(
                number(path, line, toks[cx])?,
                number(path, line, toks[cy])?,
                number(path, line, toks[cz])?,
            ));
        }
    }
    if let Some((line, _)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(Error::parse(path, line, "data after the last element"));
    }
    Ok(points)
}

pub fn load_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    parse_ply(&read_text(path)?, path)
}

pub fn write_ply(points: &[Vector3<f64>]) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    );
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn save_ply(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    write_text(path, &write_ply(points))
}
