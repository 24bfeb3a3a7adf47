//! Closed-form linear-Gaussian oracle: for G(m) = A m with a Gaussian prior,
//! the smoother posterior must match the Kalman update. The oracle is a
//! direct matrix formula, fully independent of the ensemble code path.

use gcs_da::{run_esmda, EsmdaConfig};
use gcs_sim::ObservationSet;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N_PARAMS: usize = 10;
const N_OBS: usize = 20;
const N_MEMBERS: usize = 10_000;

struct Setup {
    a: DMatrix<f64>,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    d_obs: DVector<f64>,
    noise_std: f64,
}

fn setup(seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(N_OBS, N_PARAMS, |_, _| rng.random_range(-1.0..1.0));
    let prior_mean = DVector::from_fn(N_PARAMS, |i, _| 0.3 * i as f64 - 1.0);
    // well-conditioned SPD prior: diagonal plus a mild rank-one bump
    let u = DVector::from_fn(N_PARAMS, |i, _| ((i + 1) as f64 * 0.37).sin());
    let mut prior_cov = DMatrix::from_diagonal(&DVector::from_fn(N_PARAMS, |i, _| 0.5 + 0.1 * i as f64));
    prior_cov += 0.3 * &u * u.transpose();
    let truth = &prior_mean + DVector::from_fn(N_PARAMS, |i, _| if i % 2 == 0 { 0.8 } else { -0.5 });
    let noise_std = 0.5;
    let noise = DVector::from_fn(N_OBS, |_, _| noise_std * rng.random_range(-1.0..1.0));
    let d_obs = &a * truth + noise;
    Setup { a, prior_mean, prior_cov, d_obs, noise_std }
}

/// Exact Gaussian posterior: mean + K (d - A mean), cov - K A cov.
fn kalman_posterior(s: &Setup) -> (DVector<f64>, DMatrix<f64>) {
    let r = DMatrix::identity(N_OBS, N_OBS) * (s.noise_std * s.noise_std);
    let innov_cov = &s.a * &s.prior_cov * s.a.transpose() + r;
    let k = &s.prior_cov * s.a.transpose() * innov_cov.try_inverse().expect("SPD");
    let mean = &s.prior_mean + &k * (&s.d_obs - &s.a * &s.prior_mean);
    let cov = &s.prior_cov - &k * &s.a * &s.prior_cov;
    (mean, cov)
}

fn sample_prior(s: &Setup, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chol = s.prior_cov.clone().cholesky().expect("SPD prior").l();
    (0..N_MEMBERS)
        .map(|_| {
            let z = DVector::from_fn(N_PARAMS, |_, _| {
                // Box-Muller keeps this oracle free of distribution crates
                let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            });
            (&s.prior_mean + &chol * z).data.as_vec().clone()
        })
        .collect()
}

fn obs_from(s: &Setup) -> ObservationSet {
    ObservationSet {
        monitor_cells: (0..N_OBS).map(|i| (i, i + 1)).collect(),
        times: vec![1],
        values: Array2::from_shape_vec((1, N_OBS), s.d_obs.iter().cloned().collect()).unwrap(),
        noise_std: s.noise_std,
        truth_seed: 0,
    }
}

fn run_case(n_assimilations: usize) {
    let s = setup(2024);
    let (exact_mean, exact_cov) = kalman_posterior(&s);
    let prior = sample_prior(&s, 77);
    let obs = obs_from(&s);
    let model = gcs_da::forward_model::LinearForward { matrix: s.a.clone() };
    let mut cfg = EsmdaConfig::constant_alpha(n_assimilations, s.noise_std, 99).unwrap();
    cfg.bounds = None;

    let start = std::time::Instant::now();
    let (posterior, _diag) = run_esmda(&model, &prior, &obs, &cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "oracle case took {elapsed:.1} s");

    let mut mean = vec![0.0; N_PARAMS];
    for m in &posterior {
        for (a, b) in mean.iter_mut().zip(m) {
            *a += b / posterior.len() as f64;
        }
    }
    let mut var = vec![0.0; N_PARAMS];
    for m in &posterior {
        for i in 0..N_PARAMS {
            var[i] += (m[i] - mean[i]) * (m[i] - mean[i]) / (posterior.len() - 1) as f64;
        }
    }

    let mean_err: f64 = mean
        .iter()
        .enumerate()
        .map(|(i, v)| (v - exact_mean[i]) * (v - exact_mean[i]))
        .sum::<f64>()
        .sqrt();
    let mean_norm = exact_mean.norm();
    assert!(
        mean_err <= 0.05 * mean_norm,
        "N_a={n_assimilations}: posterior mean off by {:.2}% ",
        100.0 * mean_err / mean_norm
    );
    for i in 0..N_PARAMS {
        let want = exact_cov[(i, i)];
        let rel = (var[i] - want).abs() / want;
        assert!(rel <= 0.15, "N_a={n_assimilations}: variance {i} off by {:.1}%", 100.0 * rel);
    }
    println!(
        "N_a={n_assimilations}: mean err {:.2}%, worst variance err {:.1}%, {elapsed:.2} s",
        100.0 * mean_err / mean_norm,
        100.0
            * (0..N_PARAMS)
                .map(|i| (var[i] - exact_cov[(i, i)]).abs() / exact_cov[(i, i)])
                .fold(0.0f64, f64::max)
    );
}

#[test]
fn single_sweep_matches_kalman() {
    run_case(1);
}

#[test]
fn four_sweeps_match_kalman() {
    run_case(4);
}
