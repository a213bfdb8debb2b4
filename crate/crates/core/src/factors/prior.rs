use nalgebra::DMatrix;

use crate::estimation::{Factor, Key, Linearization, NoiseModel, Values, Variable};
use crate::error::Result;

/// Prior `local(mean, x)` on one variable.
#[derive(Debug, Clone)]
pub struct PriorFactor {
    keys: [Key; 1],
    mean: Variable,
    noise: NoiseModel,
}

impl PriorFactor {
    pub fn new(key: Key, mean: Variable, noise: NoiseModel) -> Self {
        Self {
            keys: [key],
            mean,
            noise,
        }
    }

    pub fn from_covariance(key: Key, mean: Variable, covariance: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::new(key, mean, NoiseModel::from_covariance(covariance)?))
    }

    pub fn mean(&self) -> &Variable {
        &self.mean
    }
}

impl Factor for PriorFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let residual = self.mean.local(values.get(&self.keys[0])?)?;
        let jacobian = self.mean.local_jacobian(&residual)?;
        Ok(Linearization {
            residual,
            jacobians: vec![jacobian],
        })
    }
}
