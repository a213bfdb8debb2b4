use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::estimation::{Factor, Key, Linearization, NoiseModel, Values};
use crate::error::{Error, Result};
use crate::imu::SlotMap;
use crate::liegroup::{hat, SEK3};

/// Contact innovation `z − R̂ᵀ(f̂ − p̂)` for the foothold in `column`, and the
/// measurement Jacobian `H` with `Rᵀ(f − p) ≈ ẑ + Hξ`: `hat(ẑ)` on attitude,
/// `−I` on position and `I` on the foothold slot.
pub fn contact_residual_filter(
    x: &SEK3,
    slots: SlotMap,
    column: usize,
    z: &Vector3<f64>,
) -> Result<(Vector3<f64>, DMatrix<f64>)> {
    if column >= x.k() || !slots.is_foot(column) {
        return Err(Error::InvalidArgument(format!("column {column} is not a foothold slot")));
    }
    let z_hat = x.rotation().transpose() * (x.column(column) - x.column(slots.position));
    let mut h = DMatrix::zeros(3, x.tangent_dim());
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&z_hat));
    h.fixed_view_mut::<3, 3>(0, 3 * (slots.position + 1))
        .copy_from(&-Matrix3::identity());
    h.fixed_view_mut::<3, 3>(0, 3 * (column + 1))
        .copy_from(&Matrix3::identity());
    Ok((z - z_hat, h))
}

/// Filter-chart contact factor on a full filter state variable, used by the
/// graph measurement update.
#[derive(Debug, Clone)]
pub struct FilterContactFactor {
    keys: [Key; 1],
    slots: SlotMap,
    column: usize,
    z: Vector3<f64>,
    noise: NoiseModel,
}

impl FilterContactFactor {
    pub fn new(key: Key, slots: SlotMap, column: usize, z: Vector3<f64>, noise: NoiseModel) -> Self {
        Self {
            keys: [key],
            slots,
            column,
            z,
            noise,
        }
    }
}

impl Factor for FilterContactFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let x = values.group(&self.keys[0])?;
        let (r, h) = contact_residual_filter(x, self.slots, self.column, &self.z)?;
        Ok(Linearization {
            residual: DVector::from_column_slice(r.as_slice()),
            jacobians: vec![-h],
        })
    }
}

/// Contact factor between a base state `(R, p, v)` and a navigation-frame
/// foothold landmark, with residual `z − Rᵀ(f − p)`.
#[derive(Debug, Clone)]
pub struct LandmarkContactFactor {
    keys: [Key; 2],
    z: Vector3<f64>,
    noise: NoiseModel,
}

impl LandmarkContactFactor {
    pub fn new(nav: Key, landmark: Key, z: Vector3<f64>, noise: NoiseModel) -> Self {
        Self {
            keys: [nav, landmark],
            z,
            noise,
        }
    }
}

impl Factor for LandmarkContactFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let x = values.group(&self.keys[0])?;
        let f = values.vector(&self.keys[1])?;
        let f = Vector3::new(f[0], f[1], f[2]);
        let rt = x.rotation().transpose();
        let z_hat = rt * (f - x.column(0));
        let mut j_nav = DMatrix::zeros(3, x.tangent_dim());
        j_nav.fixed_view_mut::<3, 3>(0, 0).copy_from(&-hat(&z_hat));
        j_nav.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&Matrix3::identity());
        let j_landmark = DMatrix::from_iterator(3, 3, (-rt).iter().copied());
        Ok(Linearization {
            residual: DVector::from_column_slice((self.z - z_hat).as_slice()),
            jacobians: vec![j_nav, j_landmark],
        })
    }
}
