mod common;

use common::*;
use gpddf::gp::{gp_posterior, lgp_entropy, GaussianPredictive, Hyperparameters, Region, RegionId};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn posterior_matches_direct_inverse() {
    for seed in 0..200 {
        let mut r = rng(seed);
        let h = hyp(&mut r);
        let n = (seed % 30) as usize;
        let data = dataset(&mut r, 0, n, &h);
        let query = regions(&mut r, 1000, 1 + (seed % 8) as usize);
        let got = gp_posterior(&data, &query, &h).unwrap();
        let (mean, cov) = naive_posterior(&data, &query, &h);
        let floor = h.signal_var;
        assert!(max_rel(&got.cov, &cov, floor) < 1e-8, "seed {seed}");
        let mean_err = got.mean.iter().zip(mean.iter()).map(|(a, b)| (a - b).abs() / b.abs().max(floor)).fold(0.0, f64::max);
        assert!(mean_err < 1e-8, "seed {seed}: {mean_err}");
    }
}

#[test]
fn empty_data_is_exactly_the_prior() {
    let mut r = rng(5);
    let h = hyp(&mut r);
    let query = regions(&mut r, 0, 6);
    let got = gp_posterior(&gpddf::gp::Dataset::empty(), &query, &h).unwrap();
    assert_eq!(got.mean, DVector::from_element(6, h.prior_mean));
    assert_eq!(got.cov, gpddf::gp::cov_symmetric(&query, &h).unwrap());
}

#[test]
fn fuzzed_posteriors_are_symmetric_and_psd() {
    for seed in 0..1000 {
        let mut r = rng(10_000 + seed);
        let h = hyp(&mut r);
        let data = dataset(&mut r, 0, (seed % 41) as usize, &h);
        let query = regions(&mut r, 1000, 1 + (seed % 10) as usize);
        let p = gp_posterior(&data, &query, &h).unwrap();
        let scale = p.cov.trace().abs().max(h.signal_var);
        assert!(p.asymmetry() <= 1e-10, "seed {seed}");
        assert!(p.min_eigenvalue() >= -1e-8 * scale, "seed {seed}: {}", p.min_eigenvalue());
        for i in 0..query.len() {
            assert!(p.cov[(i, i)] <= h.prior_var() + 1e-12);
        }
    }
}

#[test]
fn entropy_of_a_diagonal_predictive() {
    let query: Vec<Region> = (0..2).map(|i| Region::new(i, vec![i as f64, 0.0]).unwrap()).collect();
    let pred = GaussianPredictive {
        query: query.iter().map(|r| r.id).collect::<Vec<RegionId>>(),
        mean: DVector::zeros(2),
        cov: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
    };
    let expected = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + 0.5 * 4f64.ln();
    assert!((lgp_entropy(&pred).unwrap() - expected).abs() < 1e-12);
    assert!((expected - 3.531025).abs() < 1e-6);
}

fn instance(seed: u64, n: usize, m: usize) -> (Hyperparameters, gpddf::gp::Dataset, Vec<Region>) {
    let mut r = rng(seed);
    let h = hyp(&mut r);
    let data = dataset(&mut r, 0, n, &h);
    let query = regions(&mut r, 1000, m);
    (h, data, query)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn more_data_never_increases_variance(seed in any::<u64>(), n in 0usize..30, extra in 1usize..10, m in 1usize..8) {
        let (h, data, query) = instance(seed, n + extra, m);
        let sub = gpddf::gp::Dataset::new(data.regions()[..n].to_vec(), data.values()[..n].to_vec()).unwrap();
        let small = gp_posterior(&sub, &query, &h).unwrap().variances();
        let big = gp_posterior(&data, &query, &h).unwrap().variances();
        for i in 0..m {
            prop_assert!(big[i] <= small[i] + 1e-8);
        }
    }

    #[test]
    fn entropy_mean_shift(seed in any::<u64>(), n in 0usize..20, m in 1usize..8, c in -5.0f64..5.0) {
        let (h, data, query) = instance(seed, n, m);
        let p = gp_posterior(&data, &query, &h).unwrap();
        let mut shifted = p.clone();
        shifted.mean.add_scalar_mut(c);
        let delta = lgp_entropy(&shifted).unwrap() - lgp_entropy(&p).unwrap();
        prop_assert!((delta - c * m as f64).abs() < 1e-12 * (1.0 + (c * m as f64).abs()));
    }

    #[test]
    fn prior_mean_shift_moves_the_posterior_mean(seed in any::<u64>(), n in 0usize..20, m in 1usize..6, c in -3.0f64..3.0) {
        let (h, data, query) = instance(seed, n, m);
        let h2 = Hyperparameters::new(h.signal_var, h.noise_var, h.length_scales.clone(), h.prior_mean + c).unwrap();
        let shifted = gpddf::gp::Dataset::new(data.regions().to_vec(), data.values().iter().map(|z| z + c).collect()).unwrap();
        let a = gp_posterior(&data, &query, &h).unwrap();
        let b = gp_posterior(&shifted, &query, &h2).unwrap();
        for i in 0..m {
            prop_assert!((b.mean[i] - a.mean[i] - c).abs() < 1e-9);
        }
        prop_assert!((b.cov - a.cov).amax() < 1e-12);
    }
}
