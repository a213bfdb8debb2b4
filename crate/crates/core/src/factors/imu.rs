use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};

use crate::estimation::{Factor, Key, Linearization, NoiseModel, Values};
use crate::error::{Error, Result};
use crate::imu::{ImuBias, PreintegratedImu};
use crate::liegroup::so3::{self, hat};
use crate::liegroup::{Rot3, SEK3};

type Matrix9 = SMatrix<f64, 9, 9>;
type Matrix9x6 = SMatrix<f64, 9, 6>;

/// Residual `[r_R, r_p, r_v]` of a preintegrated increment between base states
/// `x_i`, `x_j` (rotation, position column 0, velocity column 1), with the
/// increment corrected to `bias`. Also returns the Jacobians with respect to
/// the tangents of `x_i`, `x_j` and the bias `[b_g; b_a]`.
///
/// ```text
/// r_R = Log(ΔR̃ᵀ R_iᵀ R_j)
/// r_p = R_iᵀ(p_j − p_i − v_i T − ½ g T²) − Δp̃
/// r_v = R_iᵀ(v_j − v_i − g T) − Δṽ
/// ```
pub fn imu_residual(
    xi: &SEK3,
    xj: &SEK3,
    pim: &PreintegratedImu,
    bias: &ImuBias,
    gravity: &Vector3<f64>,
) -> Result<(DVector<f64>, Matrix9, Matrix9, Matrix9x6)> {
    if xi.k() != 2 || xj.k() != 2 {
        return Err(Error::Dimension("IMU factor expects (R, p, v) states".into()));
    }
    let t = pim.delta_t();
    if t <= 0.0 {
        return Err(Error::InvalidArgument(format!("preintegration interval {t} is not positive")));
    }
    let (dr, dp, dv) = pim.bias_correct(bias);
    let ri = xi.rotation().matrix();
    let rj = xj.rotation().matrix();
    let rit = ri.transpose();
    let (pi, vi) = (xi.column(0), xi.column(1));
    let (pj, vj) = (xj.column(0), xj.column(1));

    let rel = Rot3::from_matrix_unchecked(dr.transpose() * rit * rj).normalized();
    let r_r = so3::log(&rel);
    let p_body = rit * (pj - pi - vi * t - gravity * (0.5 * t * t));
    let v_body = rit * (vj - vi - gravity * t);
    let r_p = p_body - dp;
    let r_v = v_body - dv;

    let jr_inv = so3::right_jacobian_inverse(&r_r);
    let rij = rit * rj;
    let i3 = Matrix3::identity();

    let mut j_i = Matrix9::zeros();
    j_i.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-jr_inv * rij.transpose()));
    j_i.fixed_view_mut::<3, 3>(3, 0).copy_from(&hat(&p_body));
    j_i.fixed_view_mut::<3, 3>(3, 3).copy_from(&-i3);
    j_i.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-i3 * t));
    j_i.fixed_view_mut::<3, 3>(6, 0).copy_from(&hat(&v_body));
    j_i.fixed_view_mut::<3, 3>(6, 6).copy_from(&-i3);

    let mut j_j = Matrix9::zeros();
    j_j.fixed_view_mut::<3, 3>(0, 0).copy_from(&jr_inv);
    j_j.fixed_view_mut::<3, 3>(3, 3).copy_from(&rij);
    j_j.fixed_view_mut::<3, 3>(6, 6).copy_from(&rij);

    let dbg = bias.gyro - pim.bias().gyro;
    let dr_dbg = pim.dr_dbg();
    let (dp_dbg, dp_dba) = pim.dp_dbias();
    let (dv_dbg, dv_dba) = pim.dv_dbias();
    let mut j_b = Matrix9x6::zeros();
    j_b.fixed_view_mut::<3, 3>(0, 0).copy_from(
        &(-jr_inv * so3::exp(&r_r).transpose() * so3::right_jacobian(&(dr_dbg * dbg)) * dr_dbg),
    );
    j_b.fixed_view_mut::<3, 3>(3, 0).copy_from(&-dp_dbg);
    j_b.fixed_view_mut::<3, 3>(3, 3).copy_from(&-dp_dba);
    j_b.fixed_view_mut::<3, 3>(6, 0).copy_from(&-dv_dbg);
    j_b.fixed_view_mut::<3, 3>(6, 3).copy_from(&-dv_dba);

    let mut residual = DVector::zeros(9);
    residual.fixed_rows_mut::<3>(0).copy_from(&r_r);
    residual.fixed_rows_mut::<3>(3).copy_from(&r_p);
    residual.fixed_rows_mut::<3>(6).copy_from(&r_v);
    Ok((residual, j_i, j_j, j_b))
}

fn dyn_matrix<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn bias_of(values: &Values, key: &Key) -> Result<ImuBias> {
    let b = values.vector(key)?;
    if b.len() != 6 {
        return Err(Error::Dimension(format!("bias {key} has dimension {}", b.len())));
    }
    Ok(ImuBias::from_slice(b.as_slice()))
}

/// Preintegrated IMU factor between two base states sharing one bias variable.
#[derive(Debug, Clone)]
pub struct ImuFactor {
    keys: [Key; 3],
    pim: Arc<PreintegratedImu>,
    gravity: Vector3<f64>,
    noise: NoiseModel,
}

impl ImuFactor {
    pub fn new(nav_i: Key, nav_j: Key, bias: Key, pim: Arc<PreintegratedImu>, gravity: Vector3<f64>) -> Result<Self> {
        if pim.delta_t() <= 0.0 {
            return Err(Error::InvalidArgument("empty preintegration interval".into()));
        }
        let noise = NoiseModel::from_covariance(&dyn_matrix(pim.covariance()))?;
        Ok(Self {
            keys: [nav_i, nav_j, bias],
            pim,
            gravity,
            noise,
        })
    }

    pub fn preintegrated(&self) -> &PreintegratedImu {
        &self.pim
    }
}

impl Factor for ImuFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let xi = values.group(&self.keys[0])?;
        let xj = values.group(&self.keys[1])?;
        let bias = bias_of(values, &self.keys[2])?;
        let (residual, j_i, j_j, j_b) = imu_residual(xi, xj, &self.pim, &bias, &self.gravity)?;
        Ok(Linearization {
            residual,
            jacobians: vec![dyn_matrix(&j_i), dyn_matrix(&j_j), dyn_matrix(&j_b)],
        })
    }
}

/// Preintegrated IMU factor with a per-state bias evolving as a random walk:
/// the residual stacks `r_b = b_j − b_i` under the preintegrated residual.
#[derive(Debug, Clone)]
pub struct CombinedImuFactor {
    keys: [Key; 4],
    pim: Arc<PreintegratedImu>,
    gravity: Vector3<f64>,
    noise: NoiseModel,
    bias_covariance: DMatrix<f64>,
}

impl CombinedImuFactor {
    pub fn new(
        nav_i: Key,
        nav_j: Key,
        bias_i: Key,
        bias_j: Key,
        pim: Arc<PreintegratedImu>,
        gravity: Vector3<f64>,
    ) -> Result<Self> {
        let t = pim.delta_t();
        if t <= 0.0 {
            return Err(Error::InvalidArgument("empty preintegration interval".into()));
        }
        let n = pim.noise();
        let mut cov = DMatrix::zeros(15, 15);
        cov.view_mut((0, 0), (9, 9)).copy_from(&dyn_matrix(pim.covariance()));
        for i in 0..3 {
            cov[(9 + i, 9 + i)] = n.gyro_bias_rw.powi(2) * t;
            cov[(12 + i, 12 + i)] = n.accel_bias_rw.powi(2) * t;
        }
        let bias_covariance = cov.view((9, 9), (6, 6)).into_owned();
        Ok(Self {
            keys: [nav_i, nav_j, bias_i, bias_j],
            noise: NoiseModel::from_covariance(&cov)?,
            pim,
            gravity,
            bias_covariance,
        })
    }

    /// Random-walk covariance of the bias residual.
    pub fn bias_covariance(&self) -> &DMatrix<f64> {
        &self.bias_covariance
    }
}

impl Factor for CombinedImuFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let xi = values.group(&self.keys[0])?;
        let xj = values.group(&self.keys[1])?;
        let bi = bias_of(values, &self.keys[2])?;
        let bj = bias_of(values, &self.keys[3])?;
        let (r9, j_i, j_j, j_b) = imu_residual(xi, xj, &self.pim, &bi, &self.gravity)?;
        let mut residual = DVector::zeros(15);
        residual.rows_mut(0, 9).copy_from(&r9);
        residual
            .rows_mut(9, 6)
            .copy_from(&(bj.to_vector() - bi.to_vector()));
        let mut ji = DMatrix::zeros(15, 9);
        ji.view_mut((0, 0), (9, 9)).copy_from(&j_i);
        let mut jj = DMatrix::zeros(15, 9);
        jj.view_mut((0, 0), (9, 9)).copy_from(&j_j);
        let mut jbi = DMatrix::zeros(15, 6);
        jbi.view_mut((0, 0), (9, 6)).copy_from(&j_b);
        jbi.view_mut((9, 0), (6, 6))
            .copy_from(&-DMatrix::<f64>::identity(6, 6));
        let mut jbj = DMatrix::zeros(15, 6);
        jbj.view_mut((9, 0), (6, 6))
            .copy_from(&DMatrix::<f64>::identity(6, 6));
        Ok(Linearization {
            residual,
            jacobians: vec![ji, jj, jbi, jbj],
        })
    }
}
