//! Levenberg-Marquardt over keyed manifold variables.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::factor::SharedFactor;
use super::linalg::EnvelopeCholesky;
use super::values::{Key, Values};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    /// Damping added to every diagonal entry of the normal equations.
    pub initial_lambda: f64,
    /// Multiplier applied to λ on rejection and divisor on acceptance.
    pub lambda_factor: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the error by less than this fraction.
    pub relative_tolerance: f64,
    /// Undamped steps that are always accepted.
    pub gauss_newton: bool,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-4,
            lambda_factor: 10.0,
            max_iterations: 25,
            relative_tolerance: 1e-8,
            gauss_newton: false,
        }
    }
}

impl LmSettings {
    /// One undamped Gauss-Newton step from the initial values.
    pub fn single_gauss_newton() -> Self {
        Self {
            max_iterations: 1,
            gauss_newton: true,
            ..Self::default()
        }
    }
}

/// Column layout of the stacked tangent vector.
#[derive(Debug, Clone)]
pub struct Ordering {
    keys: Vec<Key>,
    offsets: Vec<usize>,
    dims: Vec<usize>,
    index: HashMap<Key, usize>,
    dim: usize,
}

impl Ordering {
    /// Keys in insertion order, with `trailing` moved to the end. Variables
    /// connected to many others (a shared bias) belong at the end to keep the
    /// factor's envelope narrow.
    pub fn new(values: &Values, trailing: &[Key]) -> Self {
        let mut keys: Vec<Key> = values.keys().filter(|k| !trailing.contains(k)).copied().collect();
        keys.extend(trailing.iter().filter(|k| values.contains(k)).copied());
        let mut offsets = Vec::with_capacity(keys.len());
        let mut dims = Vec::with_capacity(keys.len());
        let mut index = HashMap::with_capacity(keys.len());
        let mut dim = 0;
        for (i, key) in keys.iter().enumerate() {
            let d = values.get(key).map(|v| v.dim()).unwrap_or(0);
            offsets.push(dim);
            dims.push(d);
            index.insert(*key, i);
            dim += d;
        }
        Self {
            keys,
            offsets,
            dims,
            index,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    /// `(offset, dim)` of `key`.
    pub fn range(&self, key: &Key) -> Option<(usize, usize)> {
        self.index.get(key).map(|&i| (self.offsets[i], self.dims[i]))
    }
}

struct NormalEquations {
    h: DMatrix<f64>,
    g: DVector<f64>,
    error: f64,
}

/// Accumulates `H = Σ JᵀJ` and `g = Σ Jᵀe` of the whitened, IRLS-reweighted
/// factors.
fn normal_equations(factors: &[SharedFactor], values: &Values, ordering: &Ordering) -> Result<NormalEquations> {
    let n = ordering.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut error = 0.0;
    for factor in factors {
        let lin = factor.linearize(values)?;
        let noise = factor.noise();
        let e = noise.whiten(&lin.residual);
        let w = noise.weight(&e);
        error += noise.loss(&e);
        let sw = w.sqrt();
        let keys = factor.keys();
        let mut blocks = Vec::with_capacity(keys.len());
        for (key, jac) in keys.iter().zip(&lin.jacobians) {
            let (offset, dim) = ordering
                .range(key)
                .ok_or_else(|| Error::Structure(format!("factor references unknown key {key}")))?;
            if jac.nrows() != lin.residual.len() || jac.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "Jacobian block for {key} is {}x{}, expected {}x{dim}",
                    jac.nrows(),
                    jac.ncols(),
                    lin.residual.len()
                )));
            }
            blocks.push((offset, noise.sqrt_information() * jac * sw));
        }
        let e = e * sw;
        for (a, (oa, ja)) in blocks.iter().enumerate() {
            let mut ga = g.rows_mut(*oa, ja.ncols());
            ga.gemv_tr(1.0, ja, &e, 1.0);
            for (ob, jb) in &blocks[a..] {
                let block = ja.tr_mul(jb);
                let mut hab = h.view_mut((*oa, *ob), (ja.ncols(), jb.ncols()));
                hab += &block;
                if oa != ob {
                    let mut hba = h.view_mut((*ob, *oa), (jb.ncols(), ja.ncols()));
                    hba += block.transpose();
                }
            }
        }
    }
    Ok(NormalEquations { h, g, error })
}

fn retract_all(values: &Values, ordering: &Ordering, delta: &DVector<f64>) -> Result<Values> {
    let mut out = values.clone();
    for key in ordering.keys() {
        let (offset, dim) = ordering.range(key).expect("ordered key");
        let updated = values.get(key)?.retract(&delta.rows(offset, dim).into_owned())?;
        out.insert(*key, updated);
    }
    Ok(out)
}

/// Keys with a component in the numerical null space of `h`.
fn unconstrained_keys(h: &DMatrix<f64>, ordering: &Ordering) -> Vec<Key> {
    let eig = h.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut flagged = vec![false; ordering.keys().len()];
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 1e-10 * scale {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        for (k, key) in ordering.keys().iter().enumerate() {
            let (offset, dim) = ordering.range(key).expect("ordered key");
            if v.rows(offset, dim).norm() > 1e-3 {
                flagged[k] = true;
            }
        }
    }
    ordering
        .keys()
        .iter()
        .zip(flagged)
        .filter(|(_, f)| *f)
        .map(|(k, _)| *k)
        .collect()
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub values: Values,
    pub iterations: usize,
    pub initial_error: f64,
    pub final_error: f64,
    ordering: Ordering,
    factor: EnvelopeCholesky,
}

impl LmResult {
    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    /// Joint marginal covariance of `keys`, from the information matrix of the
    /// linearization that produced the last accepted step.
    pub fn marginal_covariance(&self, keys: &[Key]) -> Result<DMatrix<f64>> {
        let mut idx = Vec::new();
        for key in keys {
            let (offset, dim) = self
                .ordering
                .range(key)
                .ok_or_else(|| Error::Structure(format!("no variable {key} in the solution")))?;
            idx.extend(offset..offset + dim);
        }
        let n = self.ordering.dim();
        let mut rhs = DMatrix::zeros(n, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            rhs[(i, c)] = 1.0;
        }
        let cols = self.factor.solve_matrix(&rhs);
        let out = DMatrix::from_fn(idx.len(), idx.len(), |i, j| cols[(idx[i], j)]);
        Ok((&out + out.transpose()) * 0.5)
    }
}

pub fn lm_optimize(factors: &[SharedFactor], init: &Values, settings: &LmSettings) -> Result<LmResult> {
    lm_optimize_ordered(factors, init, settings, &[])
}

/// [`lm_optimize`] with `trailing` keys eliminated last.
pub fn lm_optimize_ordered(
    factors: &[SharedFactor],
    init: &Values,
    settings: &LmSettings,
    trailing: &[Key],
) -> Result<LmResult> {
    let ordering = Ordering::new(init, trailing);
    let mut values = init.clone();
    let mut system = normal_equations(factors, &values, &ordering)?;
    let initial_error = system.error;
    let mut step_h = system.h.clone();
    let mut lambda = if settings.gauss_newton { 0.0 } else { settings.initial_lambda };
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        let mut damped = system.h.clone();
        if lambda > 0.0 {
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda;
            }
        }
        let Some(chol) = EnvelopeCholesky::factor(&damped) else {
            if settings.gauss_newton || lambda > 1e16 {
                break;
            }
            lambda *= settings.lambda_factor;
            continue;
        };
        let delta = -chol.solve(&system.g);
        let candidate = retract_all(&values, &ordering, &delta)
            .and_then(|c| normal_equations(factors, &c, &ordering).map(|s| (c, s)));
        match candidate {
            Ok((cand, cand_sys)) if settings.gauss_newton || cand_sys.error <= system.error => {
                let decrease = system.error - cand_sys.error;
                let converged = decrease <= settings.relative_tolerance * system.error.max(1e-300);
                step_h = std::mem::replace(&mut system, cand_sys).h;
                values = cand;
                lambda /= settings.lambda_factor;
                if converged {
                    break;
                }
            }
            _ => {
                if settings.gauss_newton {
                    break;
                }
                lambda *= settings.lambda_factor;
                if lambda > 1e16 {
                    break;
                }
            }
        }
    }

    let factor = match EnvelopeCholesky::factor(&step_h) {
        Some(f) => f,
        None => return Err(Error::UnderConstrained(unconstrained_keys(&step_h, &ordering))),
    };
    Ok(LmResult {
        values,
        iterations,
        initial_error,
        final_error: system.error,
        ordering,
        factor,
    })
}
