//! Fixed-lag window marginalization into a linear prior factor.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use super::belief::{schur_complement, select};
use super::factor::{Factor, Linearization, SharedFactor};
use super::lm::Ordering;
use super::noise::NoiseModel;
use super::values::{Key, Values, Variable};
use crate::error::{Error, Result};

/// Gaussian prior `½‖A δ + b‖²` on the local coordinates `δ` of its keys
/// around a fixed linearization point.
#[derive(Debug, Clone)]
pub struct LinearPriorFactor {
    keys: Vec<Key>,
    anchors: Vec<Variable>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    noise: NoiseModel,
}

impl LinearPriorFactor {
    pub fn new(keys: Vec<Key>, anchors: Vec<Variable>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let dim: usize = anchors.iter().map(Variable::dim).sum();
        if keys.len() != anchors.len() || a.ncols() != dim || a.nrows() != b.len() {
            return Err(Error::Dimension("linear prior layout".into()));
        }
        let noise = NoiseModel::unit(a.nrows());
        Ok(Self {
            keys,
            anchors,
            a,
            b,
            noise,
        })
    }

    /// Information matrix `AᵀA` over the stacked local coordinates.
    pub fn information(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.a
    }

    pub fn anchors(&self) -> &[Variable] {
        &self.anchors
    }
}

impl Factor for LinearPriorFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let mut residual = self.b.clone();
        let mut jacobians = Vec::with_capacity(self.keys.len());
        let mut offset = 0;
        for (key, anchor) in self.keys.iter().zip(&self.anchors) {
            let d = anchor.dim();
            let local = anchor.local(values.get(key)?)?;
            let a_k = self.a.columns(offset, d);
            residual += a_k * &local;
            jacobians.push(a_k * anchor.local_jacobian(&local)?);
            offset += d;
        }
        Ok(Linearization { residual, jacobians })
    }
}

#[derive(Debug)]
pub struct Marginalization {
    /// Factors that did not touch a dropped key.
    pub remaining: Vec<SharedFactor>,
    /// Prior on the boundary keys, absent when nothing couples to them.
    pub prior: Option<LinearPriorFactor>,
    pub boundary: Vec<Key>,
}

/// Consumes every factor touching `drop` and replaces them with the Schur
/// complement of their joint information onto the retained keys they touch,
/// linearized at `values`.
pub fn marginalize_window(factors: &[SharedFactor], values: &Values, drop: &[Key]) -> Result<Marginalization> {
    let dropped: HashSet<Key> = drop.iter().copied().collect();
    let (consumed, remaining): (Vec<_>, Vec<_>) = factors
        .iter()
        .cloned()
        .partition(|f| f.keys().iter().any(|k| dropped.contains(k)));
    if consumed.is_empty() {
        return Ok(Marginalization {
            remaining,
            prior: None,
            boundary: Vec::new(),
        });
    }

    let mut local = Values::new();
    let mut boundary = Vec::new();
    for key in drop {
        if values.contains(key) {
            local.insert(*key, values.get(key)?.clone());
        }
    }
    for f in &consumed {
        for key in f.keys() {
            let value = values.get(key).map_err(|_| {
                Error::Structure(format!("marginalized factor references key {key} that has no value"))
            })?;
            if !dropped.contains(key) && !local.contains(key) {
                boundary.push(*key);
                local.insert(*key, value.clone());
            }
        }
    }

    let ordering = Ordering::new(&local, &[]);
    let n = ordering.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for f in &consumed {
        let lin = f.linearize(&local)?;
        let noise = f.noise();
        let e = noise.whiten(&lin.residual);
        let sw = noise.weight(&e).sqrt();
        let e = e * sw;
        let blocks: Vec<_> = f
            .keys()
            .iter()
            .zip(&lin.jacobians)
            .map(|(k, j)| (ordering.range(k).expect("local key").0, noise.sqrt_information() * j * sw))
            .collect();
        for (oa, ja) in &blocks {
            let mut ga = g.rows_mut(*oa, ja.ncols());
            ga += ja.transpose() * &e;
            for (ob, jb) in &blocks {
                let mut hab = h.view_mut((*oa, *ob), (ja.ncols(), jb.ncols()));
                hab += ja.transpose() * jb;
            }
        }
    }

    let mut leaving = Vec::new();
    for key in drop.iter().filter(|k| local.contains(k)) {
        let (offset, dim) = ordering.range(key).expect("local key");
        leaving.extend(offset..offset + dim);
    }
    let keep: Vec<usize> = (0..n).filter(|i| !leaving.contains(i)).collect();
    if keep.is_empty() {
        return Ok(Marginalization {
            remaining,
            prior: None,
            boundary,
        });
    }
    let s = schur_complement(&h, &leaving)?;
    let h_ll = select(&h, &leaving, &leaving);
    let h_kl = select(&h, &keep, &leaving);
    let g_k = DVector::from_fn(keep.len(), |i, _| g[keep[i]]);
    let g_l = DVector::from_fn(leaving.len(), |i, _| g[leaving[i]]);
    let g_s = if leaving.is_empty() {
        g_k
    } else {
        let chol = h_ll
            .cholesky()
            .ok_or_else(|| Error::Singular("marginalized block".into()))?;
        g_k - h_kl * chol.solve(&g_l)
    };

    // ½δᵀSδ + g_sᵀδ = ½‖Aδ + b‖² + const with A = Λ^½Vᵀ, b = Λ^-½Vᵀg_s.
    let eig = s.symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let rank: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * scale && scale > 0.0)
        .collect();
    if rank.is_empty() {
        return Ok(Marginalization {
            remaining,
            prior: None,
            boundary,
        });
    }
    let mut a = DMatrix::zeros(rank.len(), keep.len());
    let mut b = DVector::zeros(rank.len());
    for (row, &i) in rank.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        a.row_mut(row).copy_from(&(v.transpose() * lambda.sqrt()));
        b[row] = v.dot(&g_s) / lambda.sqrt();
    }
    let anchors = boundary
        .iter()
        .map(|k| local.get(k).cloned())
        .collect::<Result<Vec<_>>>()?;
    let prior = LinearPriorFactor::new(boundary.clone(), anchors, a, b)?;
    Ok(Marginalization {
        remaining,
        prior: Some(prior),
        boundary,
    })
}
