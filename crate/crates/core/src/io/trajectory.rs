//! TUM trajectory files: `t x y z qx qy qz qw` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::log::rotation_to_quaternion;
use crate::error::{Error, Result};
use crate::liegroup::Rot3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub position: Vector3<f64>,
    pub rotation: Rot3,
}

impl Pose {
    pub fn new(t: f64, position: Vector3<f64>, rotation: Rot3) -> Self {
        Self { t, position, rotation }
    }
}

/// `printf("%.{digits}g")`: `digits` significant digits, trailing zeros
/// removed, scientific notation for very small or large magnitudes.
pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let strip = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip(mantissa), sign, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip(&format!("{:.*}", decimals, x))
    }
}

fn format_line(p: &Pose) -> String {
    let q = rotation_to_quaternion(&p.rotation);
    let fields = [p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]];
    let mut line = format!("{:.9}", p.t);
    for v in fields {
        line.push(' ');
        line.push_str(&format_g(v, 9));
    }
    line
}

/// Writes poses sorted by time.
pub fn write_trajectory(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    let mut sorted: Vec<&Pose> = poses.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut out = BufWriter::new(File::create(path)?);
    for p in sorted {
        writeln!(out, "{}", format_line(p))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let reader = BufReader::new(File::open(path)?);
    let mut poses = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let v: Vec<f64> = text
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", v.len())));
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(err(format!("quaternion norm {} is not 1", q.norm())));
        }
        let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        poses.push(Pose::new(
            v[0],
            Vector3::new(v[1], v[2], v[3]),
            Rot3::from_matrix_unchecked(r).normalized(),
        ));
    }
    Ok(poses)
}
