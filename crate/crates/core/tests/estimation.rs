mod common;

use std::sync::Arc;

use legged_odom::estimation::linalg::EnvelopeCholesky;
use legged_odom::estimation::{
    ekf_update, lm_optimize, lm_optimize_ordered, marginalize_out, marginalize_window, schur_complement, Factor,
    GaussianBelief, Key, Linearization, LmSettings, NoiseModel, SharedFactor, Values, Variable,
};
use legged_odom::factors::{FilterContactFactor, PriorFactor};
use legged_odom::imu::SlotMap;
use legged_odom::Result;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// `Σ A_k x_k − b` over vector variables.
#[derive(Debug)]
struct LinearFactor {
    keys: Vec<Key>,
    blocks: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    noise: NoiseModel,
}

impl Factor for LinearFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn linearize(&self, values: &Values) -> Result<Linearization> {
        let mut r = -self.b.clone();
        for (k, a) in self.keys.iter().zip(&self.blocks) {
            r += a * values.vector(k)?;
        }
        Ok(Linearization {
            residual: r,
            jacobians: self.blocks.clone(),
        })
    }
}

fn vector(v: DVector<f64>) -> Variable {
    Variable::Vector(v)
}

/// Random linear chain `x0 - x1 - … - x{n-1}` of dimension `d`, with a prior on
/// `x0` and unary terms sprinkled along it.
fn linear_chain(rng: &mut impl Rng, n: u64, d: usize) -> Vec<SharedFactor> {
    let mut factors: Vec<SharedFactor> = Vec::new();
    let noise = |rng: &mut dyn rand::RngCore| {
        let s: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..1.0)).collect();
        NoiseModel::diagonal(&s)
    };
    factors.push(Arc::new(LinearFactor {
        keys: vec![Key::Nav(0)],
        blocks: vec![DMatrix::identity(d, d)],
        b: common::dvec(rng, d, 1.0),
        noise: noise(rng),
    }));
    for i in 0..n - 1 {
        factors.push(Arc::new(LinearFactor {
            keys: vec![Key::Nav(i), Key::Nav(i + 1)],
            blocks: vec![
                DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0)),
                DMatrix::identity(d, d) * -1.0 + DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.2..0.2)),
            ],
            b: common::dvec(rng, d, 1.0),
            noise: noise(rng),
        }));
        factors.push(Arc::new(LinearFactor {
            keys: vec![Key::Nav(i + 1)],
            blocks: vec![DMatrix::from_fn(1, d, |_, _| rng.gen_range(-1.0..1.0))],
            b: common::dvec(rng, 1, 1.0),
            noise: NoiseModel::isotropic(1, 0.5),
        }));
    }
    factors
}

/// Dense weighted normal equations over `keys`, in that order.
fn dense_system(factors: &[SharedFactor], keys: &[Key], d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = keys.len() * d;
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut zero = Values::new();
    for k in keys {
        zero.insert(*k, vector(DVector::zeros(d)));
    }
    for f in factors {
        let lin = f.linearize(&zero).unwrap();
        let w = f.noise().sqrt_information();
        let mut j = DMatrix::zeros(lin.residual.len(), n);
        for (k, blk) in f.keys().iter().zip(&lin.jacobians) {
            let c = keys.iter().position(|x| x == k).unwrap() * d;
            j.view_mut((0, c), (blk.nrows(), d)).copy_from(blk);
        }
        let wj = w * &j;
        h += wj.transpose() * &wj;
        g -= wj.transpose() * (w * &lin.residual);
    }
    (h, g)
}

fn zeros(keys: &[Key], d: usize) -> Values {
    let mut v = Values::new();
    for k in keys {
        v.insert(*k, vector(DVector::zeros(d)));
    }
    v
}

fn stacked(values: &Values, keys: &[Key]) -> DVector<f64> {
    let parts: Vec<f64> = keys.iter().flat_map(|k| values.vector(k).unwrap().iter().copied().collect::<Vec<_>>()).collect();
    DVector::from_vec(parts)
}

#[test]
fn lm_on_linear_graph_matches_dense_solve() {
    let mut rng = common::rng(31);
    for _ in 0..20 {
        let factors = linear_chain(&mut rng, 6, 3);
        let keys: Vec<Key> = (0..6).map(Key::Nav).collect();
        let result = lm_optimize(&factors, &zeros(&keys, 3), &LmSettings::default()).unwrap();
        let (h, g) = dense_system(&factors, &keys, 3);
        let dense = h.clone().cholesky().unwrap();
        let x = dense.solve(&g);
        // Damped steps stop at the relative error tolerance, not at the exact minimum.
        assert!((stacked(&result.values, &keys) - &x).amax() < 1e-7);
        let gn = lm_optimize(&factors, &zeros(&keys, 3), &LmSettings::single_gauss_newton()).unwrap();
        assert!((stacked(&gn.values, &keys) - &x).amax() < 1e-10);
        let cov = result.marginal_covariance(&keys).unwrap();
        assert!((cov - dense.inverse()).amax() < 1e-9);
        assert!(result.final_error <= result.initial_error);
    }
}

#[test]
fn single_gauss_newton_step_solves_linear_problems() {
    let mut rng = common::rng(32);
    let factors = linear_chain(&mut rng, 4, 2);
    let keys: Vec<Key> = (0..4).map(Key::Nav).collect();
    let gn = lm_optimize(&factors, &zeros(&keys, 2), &LmSettings::single_gauss_newton()).unwrap();
    let lm = lm_optimize(&factors, &zeros(&keys, 2), &LmSettings::default()).unwrap();
    assert_eq!(gn.iterations, 1);
    assert!((stacked(&gn.values, &keys) - stacked(&lm.values, &keys)).amax() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn affine_problems_do_not_depend_on_initialization(seed in any::<u64>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let factors = linear_chain(&mut rng, 4, 3);
        let keys: Vec<Key> = (0..4).map(Key::Nav).collect();
        let mut a = Values::new();
        let mut b = Values::new();
        for k in &keys {
            a.insert(*k, vector(common::dvec(&mut rng, 3, 5.0)));
            b.insert(*k, vector(common::dvec(&mut rng, 3, 5.0)));
        }
        let ra = lm_optimize(&factors, &a, &LmSettings::default()).unwrap();
        let rb = lm_optimize(&factors, &b, &LmSettings::default()).unwrap();
        prop_assert!((stacked(&ra.values, &keys) - stacked(&rb.values, &keys)).amax() < 1e-8);
    }
}

#[test]
fn trailing_keys_do_not_change_the_solution() {
    let mut rng = common::rng(33);
    let factors = linear_chain(&mut rng, 5, 3);
    let keys: Vec<Key> = (0..5).map(Key::Nav).collect();
    let a = lm_optimize(&factors, &zeros(&keys, 3), &LmSettings::default()).unwrap();
    let b = lm_optimize_ordered(&factors, &zeros(&keys, 3), &LmSettings::default(), &[Key::Nav(0), Key::Nav(2)]).unwrap();
    assert_eq!(b.ordering().keys()[3..], [Key::Nav(0), Key::Nav(2)]);
    assert!((stacked(&a.values, &keys) - stacked(&b.values, &keys)).amax() < 1e-10);
    let ca = a.marginal_covariance(&[Key::Nav(2)]).unwrap();
    let cb = b.marginal_covariance(&[Key::Nav(2)]).unwrap();
    assert!((ca - cb).amax() < 1e-10);
}

#[test]
fn unconstrained_variable_is_reported() {
    let f: SharedFactor = Arc::new(LinearFactor {
        keys: vec![Key::Nav(0)],
        blocks: vec![DMatrix::identity(2, 2)],
        b: DVector::zeros(2),
        noise: NoiseModel::unit(2),
    });
    let mut values = zeros(&[Key::Nav(0)], 2);
    values.insert(Key::Nav(7), vector(DVector::zeros(2)));
    match lm_optimize(&[f], &values, &LmSettings::default()) {
        Err(legged_odom::Error::UnderConstrained(keys)) => assert_eq!(keys, vec![Key::Nav(7)]),
        other => panic!("expected an under-constrained error, got {other:?}"),
    }
}

#[test]
fn window_marginalization_matches_dense_solve_on_three_node_chains() {
    let mut rng = common::rng(34);
    let d = 3;
    for _ in 0..50 {
        let factors = linear_chain(&mut rng, 3, d);
        let keys: Vec<Key> = (0..3).map(Key::Nav).collect();
        let gn = LmSettings::single_gauss_newton();
        let full = lm_optimize(&factors, &zeros(&keys, d), &gn).unwrap();

        let m = marginalize_window(&factors, &full.values, &[Key::Nav(0)]).unwrap();
        assert_eq!(m.boundary, vec![Key::Nav(1)]);
        let mut reduced: Vec<SharedFactor> = m.remaining.clone();
        reduced.push(Arc::new(m.prior.unwrap()));
        let kept = [Key::Nav(1), Key::Nav(2)];
        let after = lm_optimize(&reduced, &zeros(&kept, d), &gn).unwrap();

        // Dense oracle: solve the full system and read off the kept block.
        let (h, g) = dense_system(&factors, &keys, d);
        let chol = h.cholesky().unwrap();
        let x = chol.solve(&g);
        let p = chol.inverse();
        assert!((stacked(&after.values, &kept) - x.rows(d, 2 * d)).amax() < 1e-9);
        let cov = after.marginal_covariance(&kept).unwrap();
        assert!((cov - p.view((d, d), (2 * d, 2 * d))).amax() < 1e-9);
    }
}

#[test]
fn marginalizing_a_middle_node() {
    let mut rng = common::rng(35);
    let d = 2;
    let factors = linear_chain(&mut rng, 3, d);
    let keys: Vec<Key> = (0..3).map(Key::Nav).collect();
    let gn = LmSettings::single_gauss_newton();
    let full = lm_optimize(&factors, &zeros(&keys, d), &gn).unwrap();
    let m = marginalize_window(&factors, &full.values, &[Key::Nav(1)]).unwrap();
    // The prior on x0 and the unary term on x2 survive.
    assert_eq!(m.remaining.len(), 2);
    assert_eq!(m.boundary, vec![Key::Nav(0), Key::Nav(2)]);
    let mut reduced = m.remaining.clone();
    reduced.push(Arc::new(m.prior.unwrap()));
    let kept = [Key::Nav(0), Key::Nav(2)];
    let after = lm_optimize(&reduced, &zeros(&kept, d), &gn).unwrap();

    let (h, g) = dense_system(&factors, &keys, d);
    let chol = h.cholesky().unwrap();
    let x = chol.solve(&g);
    let p = chol.inverse();
    let idx = [0, 1, 4, 5];
    let sub = DMatrix::from_fn(4, 4, |i, j| p[(idx[i], idx[j])]);
    let x_kept = DVector::from_fn(4, |i, _| x[idx[i]]);
    assert!((stacked(&after.values, &kept) - x_kept).amax() < 1e-9);
    assert!((after.marginal_covariance(&kept).unwrap() - sub).amax() < 1e-9);
}

#[test]
fn marginalization_without_coupled_factors() {
    let mut rng = common::rng(36);
    let factors = linear_chain(&mut rng, 3, 2);
    let keys: Vec<Key> = (0..3).map(Key::Nav).collect();
    let m = marginalize_window(&factors, &zeros(&keys, 2), &[Key::Nav(9)]).unwrap();
    assert!(m.prior.is_none());
    assert_eq!(m.remaining.len(), factors.len());
}

fn well_conditioned_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
    let eig = DVector::from_fn(n, |_, _| rng.gen_range(0.1..10.0));
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

#[test]
fn schur_form_equals_covariance_submatrix() {
    let mut rng = common::rng(37);
    for _ in 0..100 {
        let n = rng.gen_range(3..15);
        let p = well_conditioned_spd(&mut rng, n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let leaving = &idx[..rng.gen_range(1..n)];
        let direct = marginalize_out(&p, leaving).unwrap();
        let info = p.clone().cholesky().unwrap().inverse();
        let via_schur = schur_complement(&info, leaving).unwrap().cholesky().unwrap().inverse();
        assert!((&direct - via_schur).amax() < 1e-10);
        assert_eq!(direct.nrows(), n - leaving.len());
    }
}

#[test]
fn marginalize_out_rejects_bad_indices() {
    let p = DMatrix::<f64>::identity(4, 4);
    assert!(marginalize_out(&p, &[4]).is_err());
    let q = well_conditioned_spd(&mut common::rng(40), 4);
    assert_eq!(marginalize_out(&q, &[1, 1]).unwrap(), marginalize_out(&q, &[1]).unwrap());
    assert_eq!(marginalize_out(&q, &[]).unwrap(), q);
    assert!(marginalize_out(&DMatrix::zeros(3, 4), &[0]).is_err());
}

#[test]
fn envelope_cholesky_matches_dense() {
    let mut rng = common::rng(38);
    for n in [1, 2, 5, 17, 40] {
        // Banded plus a dense trailing block, like a window with a shared bias.
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(3)..n.min(i + 4) {
                a[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let a = &a * a.transpose() + DMatrix::identity(n, n);
        let b = common::dvec(&mut rng, n, 1.0);
        let env = EnvelopeCholesky::factor(&a).unwrap();
        let dense = a.clone().cholesky().unwrap();
        assert!((env.solve(&b) - dense.solve(&b)).amax() < 1e-10);
        assert!((env.l() - dense.l()).amax() < 1e-10);
    }
    assert!(EnvelopeCholesky::factor(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ekf_update_matches_information_form(seed in any::<u64>(), n in 2usize..10, m in 1usize..6) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = well_conditioned_spd(&mut rng, n);
        let h = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let r_n = well_conditioned_spd(&mut rng, m) * 0.1;
        let mean = common::dvec(&mut rng, n, 1.0);
        let residual = common::dvec(&mut rng, m, 1.0);
        let belief = GaussianBelief::new(mean.clone(), p.clone()).unwrap();
        let post = ekf_update(&belief, &h, &residual, &r_n).unwrap();

        let r_inv = r_n.clone().cholesky().unwrap().inverse();
        let info = p.clone().cholesky().unwrap().inverse() + h.transpose() * &r_inv * &h;
        let cov = info.cholesky().unwrap().inverse();
        let expected = &mean + &cov * h.transpose() * &r_inv * &residual;
        prop_assert!((&post.mean - expected).amax() < 1e-9);
        prop_assert!((&post.covariance - cov).amax() < 1e-9);
    }
}

#[test]
fn ekf_update_equals_single_gauss_newton_on_the_group() {
    let mut rng = common::rng(39);
    let slots = SlotMap::default();
    for _ in 0..100 {
        let x = common::state(&mut rng, 5);
        let p = well_conditioned_spd(&mut rng, 18) * 0.01;
        let sigma = 0.03;
        let mut feet = Vec::new();
        for column in 2..5 {
            let truth = x.rotation().transpose() * (x.column(column) - x.column(0));
            feet.push((column, truth + common::vec3(&mut rng, 0.05)));
        }

        let mut h = DMatrix::zeros(9, 18);
        let mut innovation = DVector::zeros(9);
        for (i, (column, z)) in feet.iter().enumerate() {
            let (r, hi) = legged_odom::factors::contact_residual_filter(&x, slots, *column, z).unwrap();
            h.view_mut((3 * i, 0), (3, 18)).copy_from(&hi);
            innovation.rows_mut(3 * i, 3).copy_from(&r);
        }
        let belief = GaussianBelief::new(x.clone(), p.clone()).unwrap();
        let ekf = ekf_update(&belief, &h, &innovation, &(DMatrix::identity(9, 9) * sigma * sigma)).unwrap();

        let mut factors: Vec<SharedFactor> =
            vec![Arc::new(PriorFactor::from_covariance(Key::State(0), Variable::Group(x.clone()), &p).unwrap())];
        for (column, z) in &feet {
            factors.push(Arc::new(FilterContactFactor::new(Key::State(0), slots, *column, *z, NoiseModel::isotropic(3, sigma))));
        }
        let mut values = Values::new();
        values.insert(Key::State(0), Variable::Group(x.clone()));
        let gn = lm_optimize(&factors, &values, &LmSettings::single_gauss_newton()).unwrap();
        let mean = gn.values.group(&Key::State(0)).unwrap();
        assert!((mean.to_matrix() - ekf.mean.to_matrix()).amax() < 1e-8);
    }
}
