#![allow(dead_code)]

use gpddf::gp::{Dataset, Hyperparameters, Region};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn hyp(rng: &mut ChaCha8Rng) -> Hyperparameters {
    let signal = rng.random_range(0.5..2.0);
    Hyperparameters::new(
        signal,
        signal * rng.random_range(0.05..0.3),
        vec![rng.random_range(0.2..0.6), rng.random_range(0.2..0.6)],
        rng.random_range(-1.0..1.0),
    )
    .unwrap()
}

/// `n` regions with fresh ids starting at `first`, uniform in the unit square.
pub fn regions(rng: &mut ChaCha8Rng, first: usize, n: usize) -> Vec<Region> {
    (first..first + n).map(|id| Region::new(id, vec![rng.random(), rng.random()]).unwrap()).collect()
}

pub fn dataset(rng: &mut ChaCha8Rng, first: usize, n: usize, h: &Hyperparameters) -> Dataset {
    let r = regions(rng, first, n);
    let z = (0..n).map(|_| h.prior_mean + rng.random_range(-2.0..2.0)).collect();
    Dataset::new(r, z).unwrap()
}

/// The kernel written out directly.
pub fn kern(a: &Region, b: &Region, h: &Hyperparameters) -> f64 {
    let d2: f64 = a
        .feature
        .coords()
        .iter()
        .zip(b.feature.coords())
        .zip(&h.length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    h.signal_var * (-0.5 * d2).exp() + if a.id == b.id { h.noise_var } else { 0.0 }
}

pub fn kmat(a: &[Region], b: &[Region], h: &Hyperparameters) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kern(&a[i], &b[j], h))
}

/// Explicit inverse; the empty matrix inverts to itself.
pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return m.clone();
    }
    m.clone().try_inverse().expect("invertible")
}

pub fn residuals(data: &Dataset, h: &Hyperparameters) -> DVector<f64> {
    DVector::from_iterator(data.len(), data.values().iter().map(|z| z - h.prior_mean))
}

/// Direct-inverse GP posterior: the textbook formulas with an explicit inverse.
pub fn naive_posterior(data: &Dataset, query: &[Region], h: &Hyperparameters) -> (DVector<f64>, DMatrix<f64>) {
    let d = data.regions();
    let k_sd = kmat(query, d, h);
    let k_inv = inv(&kmat(d, d, h));
    let mean = DVector::from_element(query.len(), h.prior_mean) + &k_sd * &k_inv * residuals(data, h);
    let cov = kmat(query, query, h) - &k_sd * k_inv * k_sd.transpose();
    (mean, cov)
}

pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / y.abs().max(floor)).fold(0.0, f64::max)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Small closed-loop setup on which the three policies are compared.
pub fn comparison_config(seed: u64, policy: gpddf::config::Policy) -> gpddf::config::RunConfig {
    gpddf::config::RunConfig {
        rows: 20,
        cols: 20,
        vehicles: 5,
        users: 32,
        steps: 60,
        horizon: 4,
        signal_var: 1.0,
        noise_var: 0.01,
        length_scales: vec![0.3, 0.3],
        support_size: 36,
        field_base: 1.0,
        hotspots: 0,
        policy,
        seed,
        ..Default::default()
    }
}
