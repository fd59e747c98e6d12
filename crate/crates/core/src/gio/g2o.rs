//! g2o text format for SE(2) and SE(3) pose graphs.
//!
//! Injected outliers are marked by trailing `# OUTLIER i j` comment lines so
//! that provenance survives a round trip while the file stays plain g2o.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{SMatrix, UnitQuaternion, Vector3};

use crate::error::{GraphError, IoError};
use crate::graph::{AnyGraph, Edge, PoseGraph, Provenance};
use crate::lie::{LieGroup, Se2, Se3};

/// Comment prefix marking an injected outlier loop.
pub const OUTLIER_MARKER: &str = "# OUTLIER";

/// Pose types with a g2o vertex/edge record.
pub trait G2oPose<const D: usize>: LieGroup<D> {
    const VERTEX_TAG: &'static str;
    const EDGE_TAG: &'static str;
    /// Number of measurement values in a record.
    const VALUES: usize;

    fn from_values(v: &[f64]) -> Result<Self, String>;
    fn to_values(&self) -> Vec<f64>;
}

impl G2oPose<3> for Se2 {
    const VERTEX_TAG: &'static str = "VERTEX_SE2";
    const EDGE_TAG: &'static str = "EDGE_SE2";
    const VALUES: usize = 3;

    fn from_values(v: &[f64]) -> Result<Self, String> {
        Ok(Se2::new(v[0], v[1], v[2]))
    }

    fn to_values(&self) -> Vec<f64> {
        vec![self.x, self.y, self.theta()]
    }
}

impl G2oPose<6> for Se3 {
    const VERTEX_TAG: &'static str = "VERTEX_SE3:QUAT";
    const EDGE_TAG: &'static str = "EDGE_SE3:QUAT";
    const VALUES: usize = 7;

    fn from_values(v: &[f64]) -> Result<Self, String> {
        let n = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
        if n < 1e-12 {
            return Err("quaternion has zero norm".into());
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[6], v[3], v[4], v[5]));
        Ok(Se3::new(Vector3::new(v[0], v[1], v[2]), q))
    }

    fn to_values(&self) -> Vec<f64> {
        let t = self.translation();
        let [qx, qy, qz, qw] = self.quaternion_xyzw();
        vec![t.x, t.y, t.z, qx, qy, qz, qw]
    }
}

/// How edges between consecutive vertex ids are classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Classification {
    /// Every edge with `|i − j| = 1` is odometry.
    #[default]
    Adjacent,
    /// Only the first edge between a consecutive pair is odometry; repeats
    /// are loops.
    FirstPerPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    pub classification: Classification,
}

/// Formats with 12 significant digits, shortest round-trip representation.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let r: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if r.abs() < 1e-5 || r.abs() >= 1e15 {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

/// Packs the upper triangle row-major.
pub fn pack_upper<const D: usize>(m: &SMatrix<f64, D, D>) -> Vec<f64> {
    let mut out = Vec::with_capacity(D * (D + 1) / 2);
    for r in 0..D {
        for c in r..D {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Rebuilds a symmetric matrix from its row-major upper triangle.
pub fn unpack_upper<const D: usize>(v: &[f64]) -> SMatrix<f64, D, D> {
    let mut m = SMatrix::<f64, D, D>::zeros();
    let mut k = 0;
    for r in 0..D {
        for c in r..D {
            m[(r, c)] = v[k];
            m[(c, r)] = v[k];
            k += 1;
        }
    }
    m
}

enum Record<'a> {
    Vertex { line: usize, id: usize, values: Vec<f64> },
    Edge { line: usize, from: usize, to: usize, values: Vec<f64>, info: Vec<f64> },
    Other(&'a str),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Dim {
    Two,
    Three,
}

fn perr(line: usize, reason: impl Into<String>) -> IoError {
    IoError::Parse { line, reason: reason.into() }
}

fn parse_id(tok: &str, line: usize) -> Result<usize, IoError> {
    tok.parse::<usize>().map_err(|_| perr(line, format!("invalid vertex id '{tok}'")))
}

fn parse_values(toks: &[&str], line: usize) -> Result<Vec<f64>, IoError> {
    toks.iter()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(perr(line, format!("non-finite value '{t}'"))),
            Err(_) => Err(perr(line, format!("invalid number '{t}'"))),
        })
        .collect()
}

fn tokenize<'a>(line: usize, toks: &[&'a str], dim: &mut Option<Dim>) -> Result<Record<'a>, IoError> {
    let (d, is_vertex, values) = match toks[0] {
        "VERTEX_SE2" => (Dim::Two, true, 3),
        "EDGE_SE2" => (Dim::Two, false, 3),
        "VERTEX_SE3:QUAT" => (Dim::Three, true, 7),
        "EDGE_SE3:QUAT" => (Dim::Three, false, 7),
        other => return Ok(Record::Other(other)),
    };
    match dim {
        Some(existing) if *existing != d => return Err(perr(line, "SE2 and SE3 records are mixed in one file")),
        _ => *dim = Some(d),
    }
    let info = if d == Dim::Two { 6 } else { 21 };
    let args = &toks[1..];
    if is_vertex {
        if args.len() != 1 + values {
            return Err(perr(line, format!("{} expects {} fields, found {}", toks[0], 1 + values, args.len())));
        }
        Ok(Record::Vertex { line, id: parse_id(args[0], line)?, values: parse_values(&args[1..], line)? })
    } else {
        if args.len() != 2 + values + info {
            return Err(perr(line, format!("{} expects {} fields, found {}", toks[0], 2 + values + info, args.len())));
        }
        Ok(Record::Edge {
            line,
            from: parse_id(args[0], line)?,
            to: parse_id(args[1], line)?,
            values: parse_values(&args[2..2 + values], line)?,
            info: parse_values(&args[2 + values..], line)?,
        })
    }
}

/// Parses a g2o file with the default options.
pub fn parse_g2o(text: &str) -> Result<AnyGraph, IoError> {
    parse_g2o_with(text, ParseOptions::default())
}

pub fn parse_g2o_with(text: &str, options: ParseOptions) -> Result<AnyGraph, IoError> {
    let mut dim = None;
    let mut records = Vec::new();
    let mut outliers: HashSet<(usize, usize)> = HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix(OUTLIER_MARKER) {
            let ids: Vec<&str> = rest.split_whitespace().collect();
            if ids.len() != 2 {
                return Err(perr(line, "outlier marker expects two vertex ids"));
            }
            outliers.insert((parse_id(ids[0], line)?, parse_id(ids[1], line)?));
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match tokenize(line, &toks, &mut dim)? {
            Record::Other(tag) => log::warn!("line {line}: skipping unknown record '{tag}'"),
            r => records.push(r),
        }
    }
    match dim {
        Some(Dim::Three) => build::<Se3, 6>(records, &outliers, options).map(AnyGraph::Se3),
        _ => build::<Se2, 3>(records, &outliers, options).map(AnyGraph::Se2),
    }
}

fn build<P: G2oPose<D>, const D: usize>(
    records: Vec<Record<'_>>,
    outliers: &HashSet<(usize, usize)>,
    options: ParseOptions,
) -> Result<PoseGraph<P, D>, IoError> {
    let mut vertices: BTreeMap<usize, (usize, P)> = BTreeMap::new();
    for r in &records {
        if let Record::Vertex { line, id, values } = r {
            let pose = P::from_values(values).map_err(|e| perr(*line, e))?;
            if vertices.insert(*id, (*line, pose)).is_some() {
                return Err(GraphError::DuplicateVertex(*id).into());
            }
        }
    }
    for (expected, (id, (line, _))) in vertices.iter().enumerate() {
        if *id != expected {
            return Err(perr(*line, format!("vertex ids are not contiguous from 0: id {expected} is missing")));
        }
    }
    let mut graph = PoseGraph::with_vertices(vertices.into_values().map(|(_, p)| p).collect());
    let mut seen_odometry = HashSet::new();
    for r in records {
        let Record::Edge { line, from, to, values, info } = r else { continue };
        let z = P::from_values(&values).map_err(|e| perr(line, e))?;
        let edge = match Edge::new(from, to, z, unpack_upper::<D>(&info)) {
            Ok(e) => e,
            Err(GraphError::InvalidInformationMatrix { .. }) => {
                return Err(perr(line, "information matrix is not symmetric positive-definite"))
            }
            Err(e) => return Err(e.into()),
        };
        let consecutive = from.abs_diff(to) == 1;
        let odometry = match options.classification {
            Classification::Adjacent => consecutive,
            Classification::FirstPerPair => consecutive && seen_odometry.insert((from.min(to), from.max(to))),
        };
        if odometry {
            graph.add_odometry(edge)?;
        } else {
            let provenance = if outliers.contains(&(from, to)) {
                Provenance::InjectedOutlier
            } else if outliers.is_empty() {
                Provenance::Unknown
            } else {
                Provenance::Inlier
            };
            match graph.add_loop(edge, provenance) {
                Err(GraphError::SelfLoop(_)) => return Err(perr(line, "edge connects a vertex to itself")),
                r => r?,
            }
        }
    }
    Ok(graph)
}

/// Writes vertices in id order, edges in stored order, then the outlier markers.
pub fn write_g2o<P: G2oPose<D>, const D: usize>(graph: &PoseGraph<P, D>) -> String {
    let mut out = String::new();
    for (id, v) in graph.vertices().iter().enumerate() {
        let _ = writeln!(out, "{} {} {}", P::VERTEX_TAG, id, join(&v.to_values()));
    }
    for r in graph.edge_order() {
        let e = graph.edge(*r);
        let _ = writeln!(out, "{} {} {} {} {}", P::EDGE_TAG, e.from, e.to, join(&e.measurement.to_values()), join(&pack_upper(e.information())));
    }
    for l in graph.loops().iter().filter(|l| l.provenance == Provenance::InjectedOutlier) {
        let _ = writeln!(out, "{OUTLIER_MARKER} {} {}", l.edge.from, l.edge.to);
    }
    out
}

pub fn write_any(graph: &AnyGraph) -> String {
    match graph {
        AnyGraph::Se2(g) => write_g2o(g),
        AnyGraph::Se3(g) => write_g2o(g),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format_number(*x)).collect::<Vec<_>>().join(" ")
}
