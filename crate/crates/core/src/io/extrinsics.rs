use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::LogRecord;
use crate::error::{Error, Result};
use crate::liegroup::Rot3;

/// Rigid transform from a sensor frame into the estimator body frame,
/// `x_body = R x_sensor + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extrinsic {
    /// Unit quaternion `[x, y, z, w]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Default for Extrinsic {
    fn default() -> Self {
        Self {
            rotation: [0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
        }
    }
}

impl Extrinsic {
    pub fn new(rotation: &Rot3, translation: Vector3<f64>) -> Self {
        Self {
            rotation: super::log::rotation_to_quaternion(rotation),
            translation: translation.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [x, y, z, w] = self.rotation;
        let norm = Quaternion::new(w, x, y, z).norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("extrinsic quaternion norm {norm} is not 1")));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Rot3 {
        let [x, y, z, w] = self.rotation;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Rot3::from_matrix_unchecked(q.to_rotation_matrix().into_inner()).normalized()
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

/// Expresses IMU readings and contact points in the body frame. IMU samples
/// are rotated only; contact points are rotated and translated. Ground truth
/// passes through.
pub fn apply_extrinsics(record: &LogRecord, imu: &Extrinsic, contact: &Extrinsic) -> LogRecord {
    match record {
        LogRecord::Imu(s) if !imu.is_identity() => {
            let r = imu.rotation();
            let mut s = *s;
            s.gyro = r.matrix() * s.gyro;
            s.accel = r.matrix() * s.accel;
            LogRecord::Imu(s)
        }
        LogRecord::Contact(c) if !contact.is_identity() => {
            let r = contact.rotation();
            let t = contact.translation();
            let mut c = c.clone();
            for f in &mut c.feet {
                f.point = r.matrix() * f.point + t;
            }
            LogRecord::Contact(c)
        }
        other => other.clone(),
    }
}
