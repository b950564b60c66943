#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use tatml::MetricParams;

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `BBᵀ/n + I/2`, comfortably positive definite.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let b = gaussian(n, n, rng);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5
}

pub fn random_metric(dims: &[usize], rng: &mut impl Rng) -> MetricParams<f64> {
    MetricParams::new(dims.iter().map(|&n| random_spd(n, rng)).collect()).unwrap()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Dense inverse as an independent reference.
pub fn dense_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().try_inverse().expect("invertible")
}
