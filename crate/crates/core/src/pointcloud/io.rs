//! ASCII XYZ and ASCII PLY reading and writing.
//!
//! PLY support covers the `vertex` element only; faces and any other
//! elements are skipped. Coordinates are written with Rust's shortest
//! round-trip float formatting, so save→load is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, PointCloud};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Xyz,
    Ply,
}

impl PointFormat {
    /// Infers the format from a file extension (`.xyz`, `.txt`, `.ply`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("xyz") | Some("txt") => Some(PointFormat::Xyz),
            Some("ply") => Some(PointFormat::Ply),
            _ => None,
        }
    }
}

pub fn load_point_cloud(path: &Path, format: PointFormat) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let points = match format {
        PointFormat::Xyz => parse_xyz(&text)?,
        PointFormat::Ply => parse_ply(&text)?,
    };
    if points.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    PointCloud::new(points)
}

pub fn save_point_cloud(pc: &PointCloud, path: &Path, format: PointFormat) -> Result<()> {
    let mut out = String::with_capacity(pc.len() * 48);
    if format == PointFormat::Ply {
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", pc.len());
        out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    }
    for p in pc.points() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_coord(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        message: "expected three coordinates".into(),
    })?;
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{tok}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("`{tok}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_xyz(text: &str) -> Result<Vec<Point3>> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // extra columns (normals, colors) are ignored
        let mut toks = line.split_whitespace();
        let x = parse_coord(toks.next(), i + 1)?;
        let y = parse_coord(toks.next(), i + 1)?;
        let z = parse_coord(toks.next(), i + 1)?;
        points.push([x, y, z]);
    }
    Ok(points)
}

fn parse_ply(text: &str) -> Result<Vec<Point3>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing `ply` magic".into(),
            })
        }
    }

    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut header_done = false;
    for (i, raw) in lines.by_ref() {
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("only ascii PLY is supported, found `{fmt}`"),
                    });
                }
            }
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count.parse::<usize>().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("bad vertex count `{count}`"),
                    })?);
                } else if vertex_count.is_none() {
                    // elements before the vertex block would shift the body
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "vertex must be the first element".into(),
                    });
                }
            }
            ["property", .., name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => {}
        }
    }
    if !header_done {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "missing end_header".into(),
        });
    }
    let count = vertex_count.ok_or(Error::Parse {
        line: 1,
        message: "no vertex element".into(),
    })?;
    let col = |name: &str| {
        props.iter().position(|p| p == name).ok_or(Error::Parse {
            line: 1,
            message: format!("vertex element has no `{name}` property"),
        })
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);

    let mut points = Vec::with_capacity(count);
    for (i, raw) in lines {
        if points.len() == count {
            break;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let x = parse_coord(toks.get(cx).copied(), i + 1)?;
        let y = parse_coord(toks.get(cy).copied(), i + 1)?;
        let z = parse_coord(toks.get(cz).copied(), i + 1)?;
        points.push([x, y, z]);
    }
    if points.len() != count {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("expected {count} vertices, found {}", points.len()),
        });
    }
    Ok(points)
}
