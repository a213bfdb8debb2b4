use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::noise::NoiseModel;
use super::values::{Key, Values};
use crate::error::Result;

/// Residual and one Jacobian block per connected key, before whitening.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
}

/// A measurement or motion constraint over a few keyed variables.
///
/// Jacobians are taken in each variable's retraction chart: right
/// perturbation for group variables, additive for vectors.
pub trait Factor: Debug + Send + Sync {
    fn keys(&self) -> &[Key];

    fn linearize(&self, values: &Values) -> Result<Linearization>;

    fn noise(&self) -> &NoiseModel;

    fn dim(&self) -> usize {
        self.noise().dim()
    }

    fn residual(&self, values: &Values) -> Result<DVector<f64>> {
        Ok(self.linearize(values)?.residual)
    }

    /// Loss of this factor at `values`.
    fn error(&self, values: &Values) -> Result<f64> {
        let r = self.residual(values)?;
        Ok(self.noise().loss(&self.noise().whiten(&r)))
    }
}

pub type SharedFactor = Arc<dyn Factor>;

/// Central-difference Jacobians of `factor` at `values`, one block per key.
pub fn numerical_jacobians(factor: &dyn Factor, values: &Values, step: f64) -> Result<Vec<DMatrix<f64>>> {
    let mut blocks = Vec::with_capacity(factor.keys().len());
    for key in factor.keys() {
        let base = values.get(key)?.clone();
        let dim = base.dim();
        let mut block = DMatrix::zeros(factor.dim(), dim);
        for c in 0..dim {
            let mut delta = DVector::zeros(dim);
            delta[c] = step;
            let mut plus = values.clone();
            plus.insert(*key, base.retract(&delta)?);
            let mut minus = values.clone();
            minus.insert(*key, base.retract(&(-delta))?);
            let d = (factor.residual(&plus)? - factor.residual(&minus)?) / (2.0 * step);
            block.set_column(c, &d);
        }
        blocks.push(block);
    }
    Ok(blocks)
}
