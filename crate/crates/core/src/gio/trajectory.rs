//! Trajectory export in TUM and CSV form, and TUM import.

use std::fmt::Write as _;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::g2o::format_number;
use crate::error::IoError;
use crate::lie::{LieGroup, Se3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    /// `index tx ty tz qx qy qz qw`, space separated, no header.
    Tum,
    /// Same columns, comma separated, with a header row.
    Csv,
}

pub const CSV_HEADER: &str = "index,tx,ty,tz,qx,qy,qz,qw";

/// One line per pose; planar poses are lifted with `z = 0`.
pub fn export_trajectory<P: LieGroup<D>, const D: usize>(poses: &[P], format: TrajectoryFormat) -> String {
    let sep = match format {
        TrajectoryFormat::Tum => " ",
        TrajectoryFormat::Csv => ",",
    };
    let mut out = String::new();
    if format == TrajectoryFormat::Csv {
        out.push_str(CSV_HEADER);
        out.push('\n');
    }
    for (k, p) in poses.iter().enumerate() {
        let p = p.to_se3();
        let t = p.translation();
        let q = p.quaternion_xyzw();
        let fields: Vec<String> = [t.x, t.y, t.z, q[0], q[1], q[2], q[3]].iter().map(|v| format_number(*v)).collect();
        let _ = writeln!(out, "{k}{sep}{}", fields.join(sep));
    }
    out
}

/// Parses TUM lines (`stamp tx ty tz qx qy qz qw`) sorted by stamp.
/// Blank lines and `#` comments are skipped.
pub fn parse_tum(text: &str) -> Result<Vec<(f64, Se3)>, IoError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| IoError::Parse { line, reason: format!("invalid number '{t}'") }))
            .collect::<Result<_, _>>()?;
        if vals.len() != 8 {
            return Err(IoError::Parse { line, reason: format!("expected 8 fields, found {}", vals.len()) });
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if q.norm() < 1e-12 {
            return Err(IoError::Parse { line, reason: "quaternion has zero norm".into() });
        }
        out.push((vals[0], Se3::new(Vector3::new(vals[1], vals[2], vals[3]), UnitQuaternion::from_quaternion(q))));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}
