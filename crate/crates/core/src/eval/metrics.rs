//! Trajectory error metrics.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Pose;
use crate::liegroup::Rot3;

/// Maximum time offset between associated estimate and reference poses, s.
pub const ASSOCIATION_TOLERANCE: f64 = 0.01;

pub const DEFAULT_RPE_DELTA: f64 = 1.0;

/// Relative singular value below which the alignment is treated as rank
/// deficient.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sequence: String,
    pub pose_count: usize,
    /// Position RMSE after alignment, m.
    pub ape_t: f64,
    /// Attitude RMSE after alignment, deg.
    pub ape_r: f64,
    /// Vertical position RMSE after alignment, m.
    pub ape_z: f64,
    /// Relative translation RMSE, m.
    pub rpe_t: f64,
    /// Relative rotation RMSE, deg.
    pub rpe_r: f64,
    pub rpe_delta: f64,
    pub rpe_pairs: usize,
    pub convention: String,
}

/// Rigid transform taking estimate coordinates into the reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub rotation: Rot3,
    pub translation: Vector3<f64>,
}

impl Alignment {
    pub fn identity() -> Self {
        Self {
            rotation: Rot3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, pose: &Pose) -> Pose {
        Pose::new(
            pose.t,
            self.rotation.matrix() * pose.position + self.translation,
            &self.rotation * &pose.rotation,
        )
    }
}

/// Pairs each estimate with the nearest reference pose in time, keeping pairs
/// closer than `tolerance`. Both inputs must be sorted by time.
pub fn associate(est: &[Pose], reference: &[Pose], tolerance: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    if reference.is_empty() {
        return pairs;
    }
    let mut j = 0;
    for (i, e) in est.iter().enumerate() {
        while j + 1 < reference.len() && reference[j + 1].t <= e.t {
            j += 1;
        }
        let best = if j + 1 < reference.len() && (reference[j + 1].t - e.t).abs() < (reference[j].t - e.t).abs() {
            j + 1
        } else {
            j
        };
        if (reference[best].t - e.t).abs() <= tolerance {
            pairs.push((i, best));
        }
    }
    pairs
}

/// Least-squares rigid alignment `dst ≈ R src + t` without scale. When the
/// points are collinear the rotation about the common line is unobservable
/// and the smallest rotation taking one line onto the other is used; when
/// either set is a single point the rotation is the identity.
pub fn align_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Alignment> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "alignment needs matched non-empty point sets, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - mu_s) * (d - mu_d).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let s1 = svd.singular_values[order[0]];
    let s2 = svd.singular_values[order[1]];

    let scale = src
        .iter()
        .chain(dst)
        .map(|p| p.norm())
        .fold(1.0, f64::max);
    let rotation = if s1 <= RANK_TOLERANCE * scale * scale {
        Matrix3::identity()
    } else if s2 <= RANK_TOLERANCE * s1 {
        let a = u.column(order[0]).into_owned();
        let b = v_t.row(order[0]).transpose();
        minimal_rotation(&a, &b)
    } else {
        let v = v_t.transpose();
        let mut d = Matrix3::identity();
        if (v * u.transpose()).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
            // Flip the direction of least spread.
            let mut sorted_u = Matrix3::zeros();
            let mut sorted_v = Matrix3::zeros();
            for (k, &idx) in order.iter().enumerate() {
                sorted_u.set_column(k, &u.column(idx));
                sorted_v.set_column(k, &v.column(idx));
            }
            sorted_v * d * sorted_u.transpose()
        } else {
            v * u.transpose()
        }
    };
    let rotation = Rot3::from_matrix_unchecked(rotation).normalized();
    let translation = mu_d - rotation.matrix() * mu_s;
    Ok(Alignment { rotation, translation })
}

/// Smallest rotation taking unit vector `a` onto unit vector `b`.
fn minimal_rotation(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    let axis = a.cross(b);
    let sin = axis.norm();
    let cos = a.dot(b);
    if sin < 1e-12 {
        if cos > 0.0 {
            return Matrix3::identity();
        }
        let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let perp = a.cross(&helper).normalize();
        return *Rot3::from_axis_angle(&perp, std::f64::consts::PI).matrix();
    }
    *Rot3::from_axis_angle(&(axis / sin), sin.atan2(cos)).matrix()
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

fn relative(a: &Pose, b: &Pose) -> (Rot3, Vector3<f64>) {
    let r = Rot3::from_matrix_unchecked(a.rotation.transpose() * b.rotation.matrix());
    (r, a.rotation.transpose() * (b.position - a.position))
}

pub fn convention(rpe_delta: f64) -> String {
    format!(
        "APE: one least-squares SE(3) alignment (no scale) of associated positions; \
         RPE: unaligned relative pose error between each associated pose and the first associated pose at least \
         {rpe_delta} s later (within {ASSOCIATION_TOLERANCE} s of the target); association: nearest reference \
         pose within {ASSOCIATION_TOLERANCE} s; rotation errors are geodesic angles in degrees"
    )
}

/// APE, APE_z and RPE of `est` against `reference`. Both must be sorted by time.
pub fn evaluate(est: &[Pose], reference: &[Pose], rpe_delta: f64, sequence: &str) -> Result<MetricsReport> {
    if !(rpe_delta > 0.0) {
        return Err(Error::InvalidArgument(format!("rpe delta must be positive, got {rpe_delta}")));
    }
    let pairs = associate(est, reference, ASSOCIATION_TOLERANCE);
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 associated poses, found {}",
            pairs.len()
        )));
    }
    let src: Vec<_> = pairs.iter().map(|&(i, _)| est[i].position).collect();
    let dst: Vec<_> = pairs.iter().map(|&(_, j)| reference[j].position).collect();
    let alignment = align_rigid(&src, &dst)?;

    let mut ape_t = Vec::with_capacity(pairs.len());
    let mut ape_r = Vec::with_capacity(pairs.len());
    let mut ape_z = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let aligned = alignment.apply(&est[i]);
        let g = &reference[j];
        let dp = aligned.position - g.position;
        ape_t.push(dp.norm());
        ape_z.push(dp.z);
        let dr = Rot3::from_matrix_unchecked(g.rotation.transpose() * aligned.rotation.matrix());
        ape_r.push(dr.angle().to_degrees());
    }

    let mut rpe_t = Vec::new();
    let mut rpe_r = Vec::new();
    let mut k = 0;
    for a in 0..pairs.len() {
        let target = est[pairs[a].0].t + rpe_delta;
        if k < a {
            k = a;
        }
        while k < pairs.len() && est[pairs[k].0].t < target - 1e-9 {
            k += 1;
        }
        if k == pairs.len() {
            break;
        }
        if est[pairs[k].0].t - target > ASSOCIATION_TOLERANCE {
            continue;
        }
        let (re, pe) = relative(&est[pairs[a].0], &est[pairs[k].0]);
        let (rg, pg) = relative(&reference[pairs[a].1], &reference[pairs[k].1]);
        // E = Δgt⁻¹ Δest
        let dr = Rot3::from_matrix_unchecked(rg.transpose() * re.matrix());
        rpe_t.push((rg.transpose() * (pe - pg)).norm());
        rpe_r.push(dr.angle().to_degrees());
    }

    Ok(MetricsReport {
        sequence: sequence.to_string(),
        pose_count: pairs.len(),
        ape_t: rmse(ape_t.into_iter()),
        ape_r: rmse(ape_r.into_iter()),
        ape_z: rmse(ape_z.into_iter()),
        rpe_t: rmse(rpe_t.iter().copied()),
        rpe_r: rmse(rpe_r.into_iter()),
        rpe_delta,
        rpe_pairs: rpe_t.len(),
        convention: convention(rpe_delta),
    })
}
