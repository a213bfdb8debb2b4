use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::liegroup::{TangentK, SEK3};

/// A space with a right-perturbation retraction and its inverse.
pub trait Manifold: Clone {
    fn tangent_dim(&self) -> usize;
    fn retract(&self, delta: &DVector<f64>) -> Result<Self>;
    fn local(&self, other: &Self) -> Result<DVector<f64>>;
}

impl Manifold for SEK3 {
    fn tangent_dim(&self) -> usize {
        SEK3::tangent_dim(self)
    }

    fn retract(&self, delta: &DVector<f64>) -> Result<Self> {
        SEK3::retract(self, &TangentK::from_vector(delta.clone())?)
    }

    fn local(&self, other: &Self) -> Result<DVector<f64>> {
        Ok(SEK3::local(self, other)?.into_vector())
    }
}

impl Manifold for DVector<f64> {
    fn tangent_dim(&self) -> usize {
        self.len()
    }

    fn retract(&self, delta: &DVector<f64>) -> Result<Self> {
        if delta.len() != self.len() {
            return Err(Error::Dimension(format!("{} vs {}", delta.len(), self.len())));
        }
        Ok(self + delta)
    }

    fn local(&self, other: &Self) -> Result<DVector<f64>> {
        Ok(other - self)
    }
}

/// Mean on a manifold with a covariance in its tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief<M> {
    pub mean: M,
    pub covariance: DMatrix<f64>,
}

impl<M: Manifold> GaussianBelief<M> {
    pub fn new(mean: M, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.tangent_dim();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Dimension(format!(
                "covariance {}x{} for a {n}-dim tangent space",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self { mean, covariance })
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Kalman correction for the linearized model `residual ≈ H ξ + n`,
/// `n ~ N(0, R_n)`. The mean moves by `K·residual` through the right
/// retraction and the covariance uses the Joseph form.
pub fn ekf_update<M: Manifold>(
    belief: &GaussianBelief<M>,
    h: &DMatrix<f64>,
    residual: &DVector<f64>,
    r_n: &DMatrix<f64>,
) -> Result<GaussianBelief<M>> {
    let n = belief.mean.tangent_dim();
    let m = residual.len();
    if h.ncols() != n || h.nrows() != m || r_n.nrows() != m || r_n.ncols() != m {
        return Err(Error::Dimension(format!(
            "H is {}x{}, residual {m}, R {}x{}, state {n}",
            h.nrows(),
            h.ncols(),
            r_n.nrows(),
            r_n.ncols()
        )));
    }
    if m == 0 {
        return Ok(belief.clone());
    }
    let p = &belief.covariance;
    let pht = p * h.transpose();
    let s = symmetrize(&(h * &pht + r_n));
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Singular("innovation covariance".into()))?;
    let gain = chol.solve(&pht.transpose()).transpose();
    let delta = &gain * residual;
    let i_kh = DMatrix::identity(n, n) - &gain * h;
    let cov = &i_kh * p * i_kh.transpose() + &gain * r_n * gain.transpose();
    Ok(GaussianBelief {
        mean: belief.mean.retract(&delta)?,
        covariance: symmetrize(&cov),
    })
}

/// Information-form marginalization: returns
/// `Λ_rr − Λ_rl Λ_ll⁻¹ Λ_lr` over the indices not in `leaving`, in their
/// original order.
pub fn schur_complement(information: &DMatrix<f64>, leaving: &[usize]) -> Result<DMatrix<f64>> {
    let n = information.nrows();
    let (keep, leave) = partition(n, leaving)?;
    let l_ll = select(information, &leave, &leave);
    let l_lr = select(information, &leave, &keep);
    let l_rr = select(information, &keep, &keep);
    if leave.is_empty() {
        return Ok(l_rr);
    }
    let chol = symmetrize(&l_ll)
        .cholesky()
        .ok_or_else(|| Error::Singular("information block of the marginalized variables".into()))?;
    Ok(symmetrize(&(l_rr - l_lr.transpose() * chol.solve(&l_lr))))
}

/// Covariance of the variables that remain after marginalizing `leaving`.
///
/// This is the inverse of [`schur_complement`] applied to `P⁻¹`, which for a
/// Gaussian is exactly the retained block of `P`; it is extracted directly
/// to avoid the round trip through the information matrix.
pub fn marginalize_out(p: &DMatrix<f64>, leaving: &[usize]) -> Result<DMatrix<f64>> {
    if !p.is_square() {
        return Err(Error::Dimension("covariance is not square".into()));
    }
    if symmetrize(p).cholesky().is_none() {
        return Err(Error::Singular("covariance is not positive definite".into()));
    }
    let (keep, _) = partition(p.nrows(), leaving)?;
    Ok(select(p, &keep, &keep))
}

fn partition(n: usize, leaving: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if let Some(&bad) = leaving.iter().find(|&&i| i >= n) {
        return Err(Error::Dimension(format!("index {bad} out of range for dimension {n}")));
    }
    let mut leave: Vec<usize> = leaving.to_vec();
    leave.sort_unstable();
    leave.dedup();
    let keep = (0..n).filter(|i| leave.binary_search(i).is_err()).collect();
    Ok((keep, leave))
}

pub(crate) fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}
