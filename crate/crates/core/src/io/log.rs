//! Line-delimited JSON logs:
//!
//! ```text
//! {"type":"imu","t":0.0,"w":[0,0,0],"a":[0,0,9.81]}
//! {"type":"contact","t":0.0,"feet":[{"id":0,"p":[0.3,0.2,-0.5],"touchdown":true}]}
//! {"type":"gt","t":0.0,"p":[0,0,0],"q":[0,0,0,1]}
//! ```
//!
//! Quaternions are `[x, y, z, w]`. Contact records list stance feet only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ContactPacket;
use crate::factors::{ContactMeasurement, FootId};
use crate::imu::ImuSample;
use crate::liegroup::Rot3;

/// Reference pose of the body at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthPose {
    pub t: f64,
    pub position: Vector3<f64>,
    pub rotation: Rot3,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Imu(ImuSample),
    Contact(ContactPacket),
    GroundTruth(GroundTruthPose),
}

impl LogRecord {
    pub fn t(&self) -> f64 {
        match self {
            LogRecord::Imu(s) => s.t,
            LogRecord::Contact(c) => c.t,
            LogRecord::GroundTruth(g) => g.t,
        }
    }

    /// Tie-break rank at equal timestamps.
    fn rank(&self) -> u8 {
        match self {
            LogRecord::Imu(_) => 0,
            LogRecord::Contact(_) => 1,
            LogRecord::GroundTruth(_) => 2,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFoot {
    id: FootId,
    p: [f64; 3],
    touchdown: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum RawRecord {
    Imu { t: f64, w: [f64; 3], a: [f64; 3] },
    Contact { t: f64, feet: Vec<RawFoot> },
    Gt { t: f64, p: [f64; 3], q: [f64; 4] },
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

fn from_raw(raw: RawRecord) -> std::result::Result<LogRecord, String> {
    Ok(match raw {
        RawRecord::Imu { t, w, a } => {
            if !finite(&[t]) || !finite(&w) || !finite(&a) {
                return Err("non-finite IMU value".into());
            }
            LogRecord::Imu(ImuSample::new(t, Vector3::from(w), Vector3::from(a)))
        }
        RawRecord::Contact { t, feet } => {
            if !t.is_finite() || feet.iter().any(|f| !finite(&f.p)) {
                return Err("non-finite contact value".into());
            }
            let feet = feet
                .into_iter()
                .map(|f| ContactMeasurement {
                    foot: f.id,
                    point: Vector3::from(f.p),
                    touchdown: f.touchdown,
                })
                .collect();
            LogRecord::Contact(ContactPacket::new(t, feet))
        }
        RawRecord::Gt { t, p, q } => {
            if !finite(&[t]) || !finite(&p) || !finite(&q) {
                return Err("non-finite ground-truth value".into());
            }
            let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
            if (quat.norm() - 1.0).abs() > 1e-6 {
                return Err(format!("quaternion norm {} is not 1", quat.norm()));
            }
            let r = UnitQuaternion::from_quaternion(quat).to_rotation_matrix().into_inner();
            LogRecord::GroundTruth(GroundTruthPose {
                t,
                position: Vector3::from(p),
                rotation: Rot3::from_matrix_unchecked(r).normalized(),
            })
        }
    })
}

fn to_raw(record: &LogRecord) -> RawRecord {
    match record {
        LogRecord::Imu(s) => RawRecord::Imu {
            t: s.t,
            w: s.gyro.into(),
            a: s.accel.into(),
        },
        LogRecord::Contact(c) => RawRecord::Contact {
            t: c.t,
            feet: c
                .feet
                .iter()
                .map(|f| RawFoot {
                    id: f.foot,
                    p: f.point.into(),
                    touchdown: f.touchdown,
                })
                .collect(),
        },
        LogRecord::GroundTruth(g) => {
            let q = rotation_to_quaternion(&g.rotation);
            RawRecord::Gt {
                t: g.t,
                p: g.position.into(),
                q,
            }
        }
    }
}

/// `[x, y, z, w]` with `w ≥ 0`.
pub(crate) fn rotation_to_quaternion(r: &Rot3) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(*r.matrix()));
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.i, s * q.j, s * q.k, s * q.w]
}

/// Parses a log and returns its records merged in time order. At equal
/// timestamps IMU records come before contact records, and contact before
/// ground truth.
pub fn parse_log_reader(reader: impl BufRead) -> Result<Vec<LogRecord>> {
    let mut records = Vec::new();
    let mut last = [f64::NEG_INFINITY; 3];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let raw: RawRecord = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let record = from_raw(raw).map_err(parse_err)?;
        let stream = record.rank() as usize;
        if record.t() <= last[stream] {
            return Err(parse_err(format!(
                "timestamp {} does not increase within its stream (previous {})",
                record.t(),
                last[stream]
            )));
        }
        last[stream] = record.t();
        records.push(record);
    }
    records.sort_by(|a, b| a.t().total_cmp(&b.t()).then(a.rank().cmp(&b.rank())));
    Ok(records)
}

pub fn parse_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    parse_log_reader(BufReader::new(File::open(path)?))
}

pub fn write_log(path: impl AsRef<Path>, records: &[LogRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, &to_raw(r)).map_err(|e| Error::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
