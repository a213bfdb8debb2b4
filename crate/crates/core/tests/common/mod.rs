#![allow(dead_code)]

use legged_odom::imu::{ImuBias, ImuSample};
use legged_odom::liegroup::{so3, SEK3};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vec3(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}

pub fn state(rng: &mut impl Rng, k: usize) -> SEK3 {
    let cols = (0..k).map(|_| vec3(rng, 2.0)).collect();
    SEK3::new(so3::exp(&vec3(rng, 1.2)), cols)
}

pub fn spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

pub fn dvec(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

pub fn samples(rng: &mut impl Rng, n: usize, dt: f64) -> Vec<ImuSample> {
    (0..n)
        .map(|i| ImuSample::new(i as f64 * dt, vec3(rng, 1.5), vec3(rng, 3.0) + Vector3::new(0.0, 0.0, 9.81)))
        .collect()
}

pub fn bias(rng: &mut impl Rng, scale: f64) -> ImuBias {
    ImuBias::new(vec3(rng, scale), vec3(rng, scale * 10.0))
}

pub fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}
