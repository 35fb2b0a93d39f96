//! ASCII XYZ, OFF and PLY readers/writers. Only vertex positions are kept.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloudFormat {
    Xyz,
    Off,
    Ply,
}

impl CloudFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "xyz" | "txt" => Some(CloudFormat::Xyz),
            "off" => Some(CloudFormat::Off),
            "ply" => Some(CloudFormat::Ply),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::Xyz => "xyz",
            CloudFormat::Off => "off",
            CloudFormat::Ply => "ply",
        }
    }
}

impl std::str::FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" => Ok(CloudFormat::Xyz),
            "off" => Ok(CloudFormat::Off),
            "ply" => Ok(CloudFormat::Ply),
            other => Err(Error::InvalidArgument(format!("unknown cloud format '{other}'"))),
        }
    }
}

/// Reads a point cloud from `path`.
pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    Ok(parse_cloud(&text, format, &name)?.with_source(name))
}

/// Writes `cloud` to `path`.
pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud, format: CloudFormat) -> Result<()> {
    std::fs::write(path, write_cloud(cloud, format))?;
    Ok(())
}

/// Parses the text of a cloud file. `name` is only used in error messages.
pub fn parse_cloud(text: &str, format: CloudFormat, name: &str) -> Result<PointCloud> {
    let points = match format {
        CloudFormat::Xyz => parse_xyz(text, name)?,
        CloudFormat::Off => parse_off(text, name)?,
        CloudFormat::Ply => parse_ply(text, name)?,
    };
    if points.is_empty() {
        return Err(Error::Parse {
            path: name.into(),
            line: text.lines().count().max(1),
            message: "no points".into(),
        });
    }
    PointCloud::new(points)
}

/// Serialises `cloud`. Coordinates use the shortest representation that
/// parses back to the same `f64`.
pub fn write_cloud(cloud: &PointCloud, format: CloudFormat) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    match format {
        CloudFormat::Xyz => {}
        CloudFormat::Off => {
            let _ = writeln!(out, "OFF\n{} 0 0", cloud.len());
        }
        CloudFormat::Ply => {
            let _ = write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
                cloud.len()
            );
        }
    }
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

fn parse_err(name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: name.into(),
        line,
        message: message.into(),
    }
}

fn parse_coords<'a>(
    mut tokens: impl Iterator<Item = &'a str>,
    name: &str,
    line: usize,
) -> Result<Vec3> {
    let mut c = [0.0; 3];
    for slot in &mut c {
        let tok = tokens
            .next()
            .ok_or_else(|| parse_err(name, line, "expected 3 coordinates"))?;
        *slot = tok
            .parse::<f64>()
            .map_err(|_| parse_err(name, line, format!("invalid number '{tok}'")))?;
    }
    if !c.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            path: name.into(),
            line,
        });
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_xyz(text: &str, name: &str) -> Result<Vec<Vec3>> {
    content_lines(text)
        .map(|(line, l)| {
            let n = l.split_whitespace().count();
            if n != 3 {
                return Err(parse_err(name, line, format!("expected 3 columns, found {n}")));
            }
            parse_coords(l.split_whitespace(), name, line)
        })
        .collect()
}

fn parse_count(tok: Option<&str>, name: &str, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(name, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(name, line, format!("invalid {what} '{tok}'")))
}

fn parse_off(text: &str, name: &str) -> Result<Vec<Vec3>> {
    let mut lines = content_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_err(name, 1, "empty file"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("OFF") {
        return Err(parse_err(name, line, "missing OFF header"));
    }
    let rest: Vec<&str> = tokens.collect();
    let (count_line, counts) = if rest.is_empty() {
        let (l, c) = lines
            .next()
            .ok_or_else(|| parse_err(name, line, "missing vertex/face counts"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (line, rest)
    };
    let expected = parse_count(counts.first().copied(), name, count_line, "vertex count")?;
    let mut points = Vec::with_capacity(expected);
    for (line, l) in lines.take(expected) {
        points.push(parse_coords(l.split_whitespace(), name, line)?);
    }
    if points.len() != expected {
        return Err(Error::CountMismatch {
            path: name.into(),
            expected,
            found: points.len(),
        });
    }
    Ok(points)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

fn parse_ply(text: &str, name: &str) -> Result<Vec<Vec3>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "ply")) => {}
        Some((line, _)) => return Err(parse_err(name, line, "missing 'ply' magic")),
        None => return Err(parse_err(name, 1, "empty file")),
    }

    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    let mut format_seen = false;
    for (line, l) in lines.by_ref() {
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_err(name, line, "only ASCII PLY is supported"));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let el_name = tok
                    .next()
                    .ok_or_else(|| parse_err(name, line, "element without name"))?;
                let count = parse_count(tok.next(), name, line, "element count")?;
                elements.push(PlyElement {
                    name: el_name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(name, line, "property before element"))?;
                let parts: Vec<&str> = tok.collect();
                if parts.first() == Some(&"list") {
                    if el.name == "vertex" {
                        return Err(parse_err(name, line, "list properties on vertices are not supported"));
                    }
                    el.properties.push("<list>".into());
                } else {
                    let prop = parts
                        .get(1)
                        .ok_or_else(|| parse_err(name, line, "malformed property"))?;
                    el.properties.push(prop.to_string());
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            _ => return Err(parse_err(name, line, format!("unexpected header line '{l}'"))),
        }
    }
    if !header_done {
        return Err(parse_err(name, text.lines().count(), "missing end_header"));
    }
    if !format_seen {
        return Err(parse_err(name, 2, "missing format line"));
    }

    let mut points = Vec::new();
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                if lines.next().is_none() {
                    break;
                }
            }
            continue;
        }
        let index_of = |axis: &str| {
            el.properties
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| parse_err(name, 1, format!("vertex element lacks property '{axis}'")))
        };
        let idx = [index_of("x")?, index_of("y")?, index_of("z")?];
        points.reserve(el.count);
        for (line, l) in lines.by_ref().take(el.count) {
            let tokens: Vec<&str> = l.split_whitespace().collect();
            if tokens.len() < el.properties.len() {
                return Err(parse_err(
                    name,
                    line,
                    format!("expected {} values, found {}", el.properties.len(), tokens.len()),
                ));
            }
            points.push(parse_coords(idx.iter().map(|&i| tokens[i]), name, line)?);
        }
        if points.len() != el.count {
            return Err(Error::CountMismatch {
                path: name.into(),
                expected: el.count,
                found: points.len(),
            });
        }
    }
    Ok(points)
}
