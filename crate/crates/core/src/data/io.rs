//! ASCII PLY and OBJ point clouds, plus the single-value area sidecar.
//!
//! Reals are written with `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64` exactly. All text I/O is independent of
//! the process locale.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{DataError, PointCloud};
use crate::vec3::{self, Vec3};

/// Values of one extra per-vertex PLY property.
#[derive(Debug, Clone, PartialEq)]
pub enum PlyValues {
    Float(Vec<f64>),
    Int(Vec<i64>),
}

impl PlyValues {
    pub fn len(&self) -> usize {
        match self {
            PlyValues::Float(v) => v.len(),
            PlyValues::Int(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> f64 {
        match self {
            PlyValues::Float(v) => v[i],
            PlyValues::Int(v) => v[i] as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyColumn {
    pub name: String,
    pub values: PlyValues,
}

impl PlyColumn {
    pub fn float(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            values: PlyValues::Float(values),
        }
    }

    pub fn int(name: &str, values: Vec<i64>) -> Self {
        Self {
            name: name.to_string(),
            values: PlyValues::Int(values),
        }
    }
}

/// What a loader saw besides points and normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub normals_present: bool,
    /// Lines or elements the loader does not interpret.
    pub skipped: usize,
    /// Points whose stored normal had zero length (normals are then dropped).
    pub zero_normals: usize,
    /// Per-vertex PLY properties other than x, y, z, normals and patch ids.
    pub extra: Vec<PlyColumn>,
}

fn fmt_real(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("write to string");
}

fn parse_real(token: &str, line: usize) -> Result<f64, DataError> {
    token.parse::<f64>().map_err(|_| DataError::Parse {
        line,
        message: format!("expected a number, found `{token}`"),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Writes `points` with arbitrary extra per-vertex columns.
pub fn write_ply_columns(
    path: &Path,
    points: &[Vec3],
    columns: &[PlyColumn],
) -> Result<(), DataError> {
    if let Some(c) = columns.iter().find(|c| c.values.len() != points.len()) {
        return Err(DataError::Invalid(format!(
            "column `{}` has {} values for {} points",
            c.name,
            c.values.len(),
            points.len()
        )));
    }
    let mut out = String::with_capacity(64 * points.len() * (3 + columns.len()));
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", points.len()).expect("write to string");
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}").expect("write to string");
    }
    for c in columns {
        let ty = match c.values {
            PlyValues::Float(_) => "double",
            PlyValues::Int(_) => "int",
        };
        writeln!(out, "property {ty} {}", c.name).expect("write to string");
    }
    out.push_str("end_header\n");
    for (i, p) in points.iter().enumerate() {
        for (a, v) in p.iter().enumerate() {
            if a > 0 {
                out.push(' ');
            }
            fmt_real(&mut out, *v);
        }
        for c in columns {
            out.push(' ');
            match &c.values {
                PlyValues::Float(v) => fmt_real(&mut out, v[i]),
                PlyValues::Int(v) => write!(out, "{}", v[i]).expect("write to string"),
            }
        }
        out.push('\n');
    }
    write_text(path, &out)
}

fn cloud_columns(cloud: &PointCloud) -> Vec<PlyColumn> {
    let mut cols = Vec::new();
    if let Some(n) = cloud.normals() {
        for (a, name) in ["nx", "ny", "nz"].into_iter().enumerate() {
            cols.push(PlyColumn::float(name, n.iter().map(|v| v[a]).collect()));
        }
    }
    if let Some(ids) = cloud.patch_ids() {
        cols.push(PlyColumn::int(
            "patch_id",
            ids.iter().map(|&i| i as i64).collect(),
        ));
    }
    cols
}

pub fn save_ply(path: &Path, cloud: &PointCloud) -> Result<(), DataError> {
    write_ply_columns(path, cloud.points(), &cloud_columns(cloud))
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, bool)>,
}

/// Reads an ASCII PLY file. Elements other than `vertex` are skipped.
pub fn load_ply(path: &Path) -> Result<(PointCloud, LoadReport), DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |line, message: &str| DataError::Parse {
        line,
        message: message.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(bad(1, "missing `ply` magic line")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut report = LoadReport::default();
    loop {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| bad(0, "header is missing `end_header`"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(bad(ln, &format!("unsupported PLY format `{other}`")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| bad(ln, "element count is not an integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad(ln, "property before any element"))?;
                el.props.push((name.to_string(), false));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad(ln, "property before any element"))?;
                let is_float = matches!(*ty, "float" | "double" | "float32" | "float64");
                el.props.push((name.to_string(), is_float));
            }
            _ => return Err(bad(ln, &format!("unrecognized header line `{line}`"))),
        }
    }
    let mut points = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut vertex_props: Vec<(String, bool)> = Vec::new();
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines
                    .next()
                    .ok_or_else(|| bad(0, &format!("file ends inside element `{}`", el.name)))?;
            }
            report.skipped += 1;
            continue;
        }
        let pos = |axis: &str| el.props.iter().position(|(n, _)| n == axis);
        let xyz = match (pos("x"), pos("y"), pos("z")) {
            (Some(x), Some(y), Some(z)) => [x, y, z],
            _ => return Err(bad(0, "vertex element lacks x, y, z properties")),
        };
        vertex_props = el.props.clone();
        columns = vec![Vec::with_capacity(el.count); el.props.len()];
        points.reserve(el.count);
        for _ in 0..el.count {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| bad(0, "file ends inside vertex data"))?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != el.props.len() {
                return Err(bad(
                    ln,
                    &format!("expected {} values, found {}", el.props.len(), tok.len()),
                ));
            }
            let vals = tok
                .iter()
                .map(|t| parse_real(t, ln))
                .collect::<Result<Vec<_>, _>>()?;
            points.push(xyz.map(|i| vals[i]));
            for (c, v) in columns.iter_mut().zip(vals) {
                c.push(v);
            }
        }
    }
    let find = |name: &str| vertex_props.iter().position(|(n, _)| n == name);
    let mut cloud = PointCloud::new(points);
    let mut used: Vec<usize> = ["x", "y", "z"].iter().filter_map(|n| find(n)).collect();
    if let (Some(a), Some(b), Some(c)) = (find("nx"), find("ny"), find("nz")) {
        used.extend([a, b, c]);
        let normals: Vec<Vec3> = (0..cloud.len())
            .map(|i| [columns[a][i], columns[b][i], columns[c][i]])
            .collect();
        report.zero_normals = normals.iter().filter(|n| vec3::norm(**n) == 0.0).count();
        if report.zero_normals == 0 {
            cloud = cloud.with_normals(normals)?;
            report.normals_present = true;
        }
    }
    if let Some(p) = find("patch_id") {
        used.push(p);
        let ids = columns[p].iter().map(|&v| v as u32).collect();
        cloud = cloud.with_patch_ids(ids)?;
    }
    for (i, (name, is_float)) in vertex_props.iter().enumerate() {
        if used.contains(&i) {
            continue;
        }
        let col = std::mem::take(&mut columns[i]);
        report.extra.push(if *is_float {
            PlyColumn::float(name, col)
        } else {
            PlyColumn::int(name, col.into_iter().map(|v| v as i64).collect())
        });
    }
    Ok((cloud, report))
}

/// Writes `v` lines and, when present, one `vn` line per point.
pub fn save_obj(path: &Path, cloud: &PointCloud) -> Result<(), DataError> {
    let mut out = String::new();
    let mut line = |tag: &str, p: &Vec3| {
        out.push_str(tag);
        for v in p {
            out.push(' ');
            fmt_real(&mut out, *v);
        }
        out.push('\n');
    };
    for p in cloud.points() {
        line("v", p);
    }
    for n in cloud.normals().unwrap_or(&[]) {
        line("vn", n);
    }
    write_text(path, &out)
}

/// Reads `v` and `vn` lines; every other directive is counted and skipped.
pub fn load_obj(path: &Path) -> Result<(PointCloud, LoadReport), DataError> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut report = LoadReport::default();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let mut tok = line.split_whitespace();
        let target = match tok.next() {
            None => continue,
            Some(t) if t.starts_with('#') => continue,
            Some("v") => &mut points,
            Some("vn") => &mut normals,
            Some(_) => {
                report.skipped += 1;
                continue;
            }
        };
        let vals = tok
            .map(|t| parse_real(t, ln))
            .collect::<Result<Vec<_>, _>>()?;
        // a fourth `v` component is an optional homogeneous weight
        if vals.len() < 3 || vals.len() > 4 {
            return Err(DataError::Parse {
                line: ln,
                message: format!("expected 3 coordinates, found {}", vals.len()),
            });
        }
        target.push([vals[0], vals[1], vals[2]]);
    }
    let mut cloud = PointCloud::new(points);
    if !normals.is_empty() {
        if normals.len() != cloud.len() {
            return Err(DataError::Invalid(format!(
                "{} normals for {} vertices",
                normals.len(),
                cloud.len()
            )));
        }
        cloud = cloud.with_normals(normals)?;
        report.normals_present = true;
    }
    Ok((cloud, report))
}

pub fn write_area_sidecar(path: &Path, area: f64) -> Result<(), DataError> {
    let mut s = String::new();
    fmt_real(&mut s, area);
    s.push('\n');
    write_text(path, &s)
}

pub fn read_area_sidecar(path: &Path) -> Result<f64, DataError> {
    let text = fs::read_to_string(path)?;
    let v = parse_real(text.trim(), 1)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(DataError::Invalid(format!(
            "area must be positive, found {v}"
        )))
    }
}
