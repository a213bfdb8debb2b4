use nalgebra::{DMatrix, DVector, RowVector3};

use crate::estimation::{Factor, Key, Linearization, NoiseModel, Values};
use crate::error::{Error, Result};
use crate::imu::SlotMap;
use crate::liegroup::SEK3;

/// Terrain height residual `f_z − h` for the foothold in `column`, with its
/// Jacobian row `e₃ᵀR̂` on the foothold block.
pub fn height_row_filter(x: &SEK3, slots: SlotMap, column: usize, height: f64) -> Result<(f64, DMatrix<f64>)> {
    if column >= x.k() || !slots.is_foot(column) {
        return Err(Error::InvalidArgument(format!("column {column} is not a foothold slot")));
    }
    let mut row = DMatrix::zeros(1, x.tangent_dim());
    let e3r: RowVector3<f64> = x.rotation().matrix().row(2).into_owned();
    row.fixed_view_mut::<1, 3>(0, 3 * (column + 1)).copy_from(&e3r);
    Ok((x.column(column).z - height, row))
}

/// Height prior on a foothold slot of a full filter state.
#[derive(Debug, Clone)]
pub struct FilterHeightFactor {
    keys: [Key; 1],
    slots: SlotMap,
    column: usize,
    height: f64,
    noise: NoiseModel,
}

impl FilterHeightFactor {
    pub fn new(key: Key, slots: SlotMap, column: usize, height: f64, sigma: f64) -> Self {
        Self {
            keys: [key],
            slots,
            column,
            height,
            noise: NoiseModel::isotropic(1, sigma),
        }
    }
}

impl Factor for FilterHeightFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let (r, row) = height_row_filter(values.group(&self.keys[0])?, self.slots, self.column, self.height)?;
        Ok(Linearization {
            residual: DVector::from_element(1, r),
            jacobians: vec![row],
        })
    }
}

/// Height prior acting directly on a foothold landmark.
#[derive(Debug, Clone)]
pub struct LandmarkHeightFactor {
    keys: [Key; 1],
    height: f64,
    noise: NoiseModel,
}

impl LandmarkHeightFactor {
    pub fn new(landmark: Key, height: f64, sigma: f64) -> Self {
        Self {
            keys: [landmark],
            height,
            noise: NoiseModel::isotropic(1, sigma),
        }
    }
}

impl Factor for LandmarkHeightFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let f = values.vector(&self.keys[0])?;
        Ok(Linearization {
            residual: DVector::from_element(1, f[2] - self.height),
            jacobians: vec![DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0])],
        })
    }
}
