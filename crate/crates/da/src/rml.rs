//! Randomized maximum likelihood: per-member minimization of
//!   J(m) = (m - m_prior)' Cmm^-1 (m - m_prior) + (G(m) - d_j)' Cd^-1 (G(m) - d_j)
//! with perturbed data d_j, Adam as the optimizer, and gradients supplied by
//! the forward model's vector-Jacobian product. The hybrid variant optimizes
//! entirely against the surrogate and recomputes prior/posterior states with
//! the high-fidelity model.

use std::time::Instant;

use gcs_core::{par, seed};
use gcs_sim::ObservationSet;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use crate::diagnostics::{misfit_summary, DaDiagnostics};
use crate::esmda::{log_perm_bounds, perturb_observations};
use crate::forward_model::ForwardModel;
use crate::{CountingForward, DaError};

/// Which covariance weighs the data misfit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataCovChoice {
    /// Measurement-error covariance noise_std^2 I.
    Measurement,
    /// Ensemble covariance of the prior predictions, floored by the
    /// measurement variance to stay invertible.
    EnsembleDd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmlConfig {
    pub n_opt_steps: usize,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Gaussian-kernel correlation length of the prior covariance, in cells.
    pub correlation_length: f64,
    pub variance: f64,
    pub nugget: f64,
    pub data_cov: DataCovChoice,
    pub seed: u64,
    pub bounds: Option<(f64, f64)>,
}

impl Default for RmlConfig {
    fn default() -> Self {
        RmlConfig {
            n_opt_steps: 200,
            lr: 0.05,
            adam_betas: (0.9, 0.999),
            adam_eps: 1.0e-8,
            correlation_length: 4.0,
            variance: 2.0,
            nugget: 1.0e-3,
            data_cov: DataCovChoice::Measurement,
            seed: 0,
            bounds: Some(log_perm_bounds()),
        }
    }
}

impl RmlConfig {
    pub fn validate(&self) -> Result<(), DaError> {
        if !(self.correlation_length > 0.0) {
            return Err(DaError::Config("correlation length must be positive".into()));
        }
        if !(self.nugget > 0.0) {
            return Err(DaError::Config("nugget must be positive".into()));
        }
        if !(self.variance > 0.0) || !(self.lr > 0.0) {
            return Err(DaError::Config("variance and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Prior covariance operator on the grid: var * exp(-d^2 / (2 l^2)) plus a
/// nugget on the diagonal, applied through its precomputed
/// eigendecomposition.
pub struct CmmOperator {
    vectors: DMatrix<f64>,
    inv_values: DVector<f64>,
    n: usize,
}

impl CmmOperator {
    pub fn gaussian(nx: usize, ny: usize, length: f64, variance: f64, nugget: f64) -> Result<Self, DaError> {
        if !(length > 0.0 && variance > 0.0 && nugget > 0.0) {
            return Err(DaError::Config("covariance parameters must be positive".into()));
        }
        let n = nx * ny;
        let mut c = DMatrix::zeros(n, n);
        for a in 0..n {
            let (ax, ay) = ((a % nx) as f64, (a / nx) as f64);
            for b in a..n {
                let (bx, by) = ((b % nx) as f64, (b / nx) as f64);
                let d2 = (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
                let v = variance * (-d2 / (2.0 * length * length)).exp();
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        for a in 0..n {
            c[(a, a)] += nugget;
        }
        let eig = SymmetricEigen::new(c);
        // the nugget keeps every eigenvalue positive
        let inv_values = eig.eigenvalues.map(|v| 1.0 / v.max(nugget * 1.0e-6));
        Ok(CmmOperator { vectors: eig.eigenvectors, inv_values, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Cmm^-1 x through the eigenbasis.
    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        let proj = self.vectors.transpose() * v;
        let scaled = proj.component_mul(&self.inv_values);
        (&self.vectors * scaled).data.into()
    }
}

/// Fit the Gaussian-kernel correlation length (in cells) to the average
/// axis-aligned correlogram of the given rasters.
pub fn fit_correlation_length(rasters: &[Array2<f64>], max_lag: usize) -> f64 {
    let mut corr = vec![0.0; max_lag];
    for (lag, c) in corr.iter_mut().enumerate() {
        let r = lag + 1;
        let mut acc = 0.0;
        for raster in rasters {
            acc += gcs_core::stats::directional_correlation(raster, 0.0, r);
            acc += gcs_core::stats::directional_correlation(raster, 90.0, r);
        }
        *c = acc / (2.0 * rasters.len() as f64);
    }
    let mut best = (f64::INFINITY, 1.0);
    let mut l = 0.5;
    while l <= 16.0 {
        let sse: f64 = corr
            .iter()
            .enumerate()
            .map(|(lag, &c)| {
                let r = (lag + 1) as f64;
                let model = (-r * r / (2.0 * l * l)).exp();
                (c - model) * (c - model)
            })
            .sum();
        if sse < best.0 {
            best = (sse, l);
        }
        l += 0.05;
    }
    best.1
}

/// Symmetric inverse data covariance.
pub enum DataCovInverse {
    Diagonal(f64),
    Dense(Box<DMatrix<f64>>),
}

impl DataCovInverse {
    pub fn measurement(noise_std: f64) -> Self {
        DataCovInverse::Diagonal(1.0 / (noise_std * noise_std))
    }

    /// Ensemble covariance of prior predictions with the measurement
    /// variance added on the diagonal.
    pub fn from_ensemble(predictions: &[Vec<f64>], noise_std: f64) -> Self {
        let n_obs = predictions[0].len();
        let ne = predictions.len();
        let mut mean = vec![0.0; n_obs];
        for p in predictions {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / ne as f64;
            }
        }
        let mut c = DMatrix::zeros(n_obs, n_obs);
        for p in predictions {
            let d = DVector::from_iterator(n_obs, p.iter().zip(&mean).map(|(v, m)| v - m));
            c += &d * d.transpose();
        }
        c /= (ne - 1).max(1) as f64;
        for i in 0..n_obs {
            c[(i, i)] += noise_std * noise_std;
        }
        let inv = c.cholesky().expect("floored covariance is positive definite").inverse();
        DataCovInverse::Dense(Box::new(inv))
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            DataCovInverse::Diagonal(inv) => r.iter().map(|v| v * inv).collect(),
            DataCovInverse::Dense(m) => {
                let v = DVector::from_column_slice(r);
                (m.as_ref() * v).data.into()
            }
        }
    }

    pub fn quadratic(&self, r: &[f64]) -> f64 {
        let cr = self.apply(r);
        r.iter().zip(&cr).map(|(a, b)| a * b).sum()
    }
}

/// Cost (and gradient, when requested) of one member's objective. The
/// gradient assembles 2 Cmm^-1 (m - m_prior) with the model's
/// vector-Jacobian product seeded by 2 Cd^-1 (G(m) - d_j).
#[allow(clippy::too_many_arguments)]
pub fn rml_cost(
    member: usize,
    m: &[f64],
    m_prior: &[f64],
    d_j: &[f64],
    forward: &dyn ForwardModel,
    cmm: &CmmOperator,
    cd_inv: &DataCovInverse,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>), DaError> {
    let dm: Vec<f64> = m.iter().zip(m_prior).map(|(a, b)| a - b).collect();
    let cm = cmm.apply_inverse(&dm);
    let prior_term: f64 = dm.iter().zip(&cm).map(|(a, b)| a * b).sum();

    if want_grad {
        if !forward.provides_input_gradients() {
            return Err(DaError::GradientUnavailable);
        }
        let seed_fn = |pred: &[f64]| -> Vec<f64> {
            let r: Vec<f64> = pred.iter().zip(d_j).map(|(p, d)| p - d).collect();
            cd_inv.apply(&r).iter().map(|v| 2.0 * v).collect()
        };
        let (pred, data_grad) = forward.evaluate_with_vjp(member, m, &seed_fn)?;
        let r: Vec<f64> = pred.iter().zip(d_j).map(|(p, d)| p - d).collect();
        let data_term = cd_inv.quadratic(&r);
        let grad: Vec<f64> = cm.iter().zip(&data_grad).map(|(p, d)| 2.0 * p + d).collect();
        Ok((prior_term + data_term, Some(grad)))
    } else {
        let pred = forward.evaluate(member, m)?;
        let r: Vec<f64> = pred.iter().zip(d_j).map(|(p, d)| p - d).collect();
        let data_term = cd_inv.quadratic(&r);
        Ok((prior_term + data_term, None))
    }
}

/// Plain Adam over a parameter vector with projection onto the bounds.
struct VecAdam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl VecAdam {
    fn new(cfg: &RmlConfig, n: usize) -> Self {
        VecAdam {
            lr: cfg.lr,
            beta1: cfg.adam_betas.0,
            beta2: cfg.adam_betas.1,
            eps: cfg.adam_eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], bounds: Option<(f64, f64)>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            x[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            if let Some((lo, hi)) = bounds {
                x[i] = x[i].clamp(lo, hi);
            }
        }
    }
}

struct MemberResult {
    params: Vec<f64>,
    costs: Vec<f64>,
    excluded: bool,
}

fn optimize_member(
    member: usize,
    prior_m: &[f64],
    d_j: &[f64],
    forward: &dyn ForwardModel,
    cmm: &CmmOperator,
    cd_inv: &DataCovInverse,
    cfg: &RmlConfig,
) -> Result<MemberResult, DaError> {
    let mut m = prior_m.to_vec();
    let mut adam = VecAdam::new(cfg, m.len());
    let mut costs = Vec::with_capacity(cfg.n_opt_steps);
    for _ in 0..cfg.n_opt_steps {
        let (cost, grad) = rml_cost(member, &m, prior_m, d_j, forward, cmm, cd_inv, true)?;
        if !cost.is_finite() {
            return Ok(MemberResult { params: prior_m.to_vec(), costs, excluded: true });
        }
        costs.push(cost);
        adam.step(&mut m, &grad.expect("gradient requested"), cfg.bounds);
    }
    Ok(MemberResult { params: m, costs, excluded: false })
}

fn rml_core(
    prior: &[Vec<f64>],
    obs: &ObservationSet,
    forward: &dyn ForwardModel,
    cfg: &RmlConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>), DaError> {
    cfg.validate()?;
    if prior.is_empty() {
        return Err(DaError::Config("empty prior ensemble".into()));
    }
    if !forward.provides_input_gradients() && cfg.n_opt_steps > 0 {
        return Err(DaError::GradientUnavailable);
    }
    let d_obs = obs.flat_values();
    let n_params = prior[0].len();
    let (ny_nx, rem) = {
        // the prior covariance lives on the raster; infer a square-ish grid
        let nx = (n_params as f64).sqrt().round() as usize;
        (nx, n_params % nx.max(1))
    };
    let (nx, ny) = if rem == 0 && ny_nx > 0 { (ny_nx, n_params / ny_nx) } else { (n_params, 1) };
    let cmm = CmmOperator::gaussian(nx, ny, cfg.correlation_length, cfg.variance, cfg.nugget)?;

    let cd_inv = match cfg.data_cov {
        DataCovChoice::Measurement => DataCovInverse::measurement(obs.noise_std),
        DataCovChoice::EnsembleDd => {
            let preds: Result<Vec<Vec<f64>>, DaError> =
                par::map_indexed(prior.len(), |j| forward.evaluate(j, &prior[j])).into_iter().collect();
            DataCovInverse::from_ensemble(&preds?, obs.noise_std)
        }
    };

    let results = par::map_indexed(prior.len(), |j| {
        let d_j = perturb_observations(&d_obs, obs.noise_std, 1.0, seed::derive(cfg.seed, "rml-data", j as u64));
        optimize_member(j, &prior[j], &d_j, forward, &cmm, &cd_inv, cfg)
    });

    let mut posterior = Vec::with_capacity(prior.len());
    let mut histories = Vec::with_capacity(prior.len());
    let mut excluded = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        let r = r?;
        if r.excluded {
            excluded.push(j);
        }
        posterior.push(r.params);
        histories.push(r.costs);
    }
    Ok((posterior, histories, excluded))
}

/// Randomized maximum likelihood against a gradient-capable forward model.
/// Each member keeps a fixed perturbed data realization and runs
/// `n_opt_steps` Adam iterations.
pub fn run_rml(
    prior: &[Vec<f64>],
    obs: &ObservationSet,
    forward_with_grad: &dyn ForwardModel,
    cfg: &RmlConfig,
) -> Result<(Vec<Vec<f64>>, DaDiagnostics), DaError> {
    let counted = CountingForward::new(forward_with_grad);
    let t0 = Instant::now();
    let (posterior, histories, excluded) = rml_core(prior, obs, &counted, cfg)?;
    let mut diag = DaDiagnostics::new("rml", prior.len(), obs.n_obs());
    diag.timings.push("optimization", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let prior_preds: Result<Vec<Vec<f64>>, DaError> =
        par::map_indexed(prior.len(), |j| counted.evaluate(j, &prior[j])).into_iter().collect();
    let post_preds: Result<Vec<Vec<f64>>, DaError> =
        par::map_indexed(posterior.len(), |j| counted.evaluate(j, &posterior[j])).into_iter().collect();
    diag.timings.push("predictions", t0.elapsed().as_secs_f64());

    let (pm, pr) = misfit_summary(&prior_preds?, obs);
    diag.prior_misfits = pm;
    diag.prior_rmse = pr;
    let (qm, qr) = misfit_summary(&post_preds?, obs);
    diag.posterior_misfits = qm;
    diag.posterior_rmse = qr;
    diag.surrogate_calls = counted.calls();
    diag.excluded_members = excluded;
    diag.cost_histories = Some(histories);
    Ok((posterior, diag))
}

/// Surrogate-hybrid RML: the optimization runs entirely on the surrogate;
/// the high-fidelity model is called exactly twice per member, for the prior
/// and the recomputed posterior states.
pub fn run_sh_rml(
    prior: &[Vec<f64>],
    obs: &ObservationSet,
    surrogate_with_grad: &dyn ForwardModel,
    hf_forward: &dyn ForwardModel,
    cfg: &RmlConfig,
) -> Result<(Vec<Vec<f64>>, DaDiagnostics), DaError> {
    let surr = CountingForward::new(surrogate_with_grad);
    let hf = CountingForward::new(hf_forward);

    let t0 = Instant::now();
    let (posterior, histories, excluded) = rml_core(prior, obs, &surr, cfg)?;
    let mut diag = DaDiagnostics::new("sh-rml", prior.len(), obs.n_obs());
    diag.timings.push("optimization", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let prior_preds: Result<Vec<Vec<f64>>, DaError> =
        par::map_indexed(prior.len(), |j| hf.evaluate(j, &prior[j])).into_iter().collect();
    let post_preds: Result<Vec<Vec<f64>>, DaError> =
        par::map_indexed(posterior.len(), |j| hf.evaluate(j, &posterior[j])).into_iter().collect();
    diag.timings.push("hf_predictions", t0.elapsed().as_secs_f64());

    let (pm, pr) = misfit_summary(&prior_preds?, obs);
    diag.prior_misfits = pm;
    diag.prior_rmse = pr;
    let (qm, qr) = misfit_summary(&post_preds?, obs);
    diag.posterior_misfits = qm;
    diag.posterior_rmse = qr;
    diag.hf_calls = hf.calls();
    diag.surrogate_calls = surr.calls();
    diag.excluded_members = excluded;
    diag.cost_histories = Some(histories);
    Ok((posterior, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::LinearForward;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_obs(values: Vec<f64>, noise_std: f64) -> ObservationSet {
        let n = values.len();
        ObservationSet {
            monitor_cells: (0..n).map(|i| (i, i + 1)).collect(),
            times: vec![1],
            values: Array2::from_shape_vec((1, n), values).unwrap(),
            noise_std,
            truth_seed: 0,
        }
    }

    fn small_cfg() -> RmlConfig {
        RmlConfig {
            correlation_length: 1.5,
            variance: 1.0,
            nugget: 1.0e-3,
            bounds: None,
            ..RmlConfig::default()
        }
    }

    #[test]
    fn cost_is_zero_at_prior_with_matching_data() {
        // G(m) = I m, m = m_prior, d_j = G(m)
        let model = LinearForward { matrix: DMatrix::identity(4, 4) };
        let cmm = CmmOperator::gaussian(2, 2, 1.0, 1.0, 1.0e-3).unwrap();
        let cd = DataCovInverse::measurement(1.0);
        let m = vec![0.5, -0.2, 1.0, 0.0];
        let (cost, grad) = rml_cost(0, &m, &m, &m, &model, &cmm, &cd, true).unwrap();
        assert!(cost.abs() < 1e-24);
        assert!(grad.unwrap().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn doubling_residual_quadruples_data_term() {
        let model = LinearForward { matrix: DMatrix::identity(2, 2) };
        let cmm = CmmOperator::gaussian(2, 1, 1.0, 1.0, 1.0e-3).unwrap();
        let cd = DataCovInverse::measurement(0.5);
        let prior_m = vec![0.0, 0.0];
        let (c1, _) = rml_cost(0, &prior_m, &prior_m, &[1.0, 1.0], &model, &cmm, &cd, false).unwrap();
        let (c2, _) = rml_cost(0, &prior_m, &prior_m, &[2.0, 2.0], &model, &cmm, &cd, false).unwrap();
        assert!((c2 - 4.0 * c1).abs() < 1e-10 * c2.abs());
    }

    #[test]
    fn gradient_matches_finite_differences_on_linear_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearForward { matrix: a };
        let cmm = CmmOperator::gaussian(3, 2, 1.2, 0.8, 1.0e-3).unwrap();
        let cd = DataCovInverse::measurement(0.7);
        let m_prior: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d_j: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = rml_cost(0, &m, &m_prior, &d_j, &model, &cmm, &cd, true).unwrap();
        let grad = grad.unwrap();
        let h = 1.0e-5;
        for k in 0..5 {
            let idx = rng.random_range(0..6);
            let mut mp = m.clone();
            mp[idx] += h;
            let mut mm = m.clone();
            mm[idx] -= h;
            let (cp, _) = rml_cost(0, &mp, &m_prior, &d_j, &model, &cmm, &cd, false).unwrap();
            let (cm, _) = rml_cost(0, &mm, &m_prior, &d_j, &model, &cmm, &cd, false).unwrap();
            let fd = (cp - cm) / (2.0 * h);
            let rel = (fd - grad[idx]).abs() / fd.abs().max(grad[idx].abs()).max(1e-8);
            assert!(rel < 1e-3, "coordinate {k} (idx {idx}): {fd} vs {}", grad[idx]);
        }
    }

    #[test]
    fn gradient_direction_invariant_under_joint_term_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let m: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m_prior = vec![0.0; 4];
        let d_j = vec![0.3, -0.1, 0.2, 0.0];
        let unit_grad = |var_scale: f64, noise_scale: f64| -> Vec<f64> {
            let model = LinearForward { matrix: a.clone() };
            // scaling both terms by c: variance and noise^2 both divide by c
            let cmm = CmmOperator::gaussian(2, 2, 1.0, 1.0 / var_scale, 1.0e-3 / var_scale).unwrap();
            let cd = DataCovInverse::measurement(0.6 / noise_scale.sqrt());
            let (_, g) = rml_cost(0, &m, &m_prior, &d_j, &model, &cmm, &cd, true).unwrap();
            let g = g.unwrap();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.iter().map(|v| v / norm).collect()
        };
        let g1 = unit_grad(1.0, 1.0);
        let g2 = unit_grad(7.0, 7.0);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_steps_returns_the_prior() {
        let model = LinearForward { matrix: DMatrix::identity(3, 3) };
        let obs = flat_obs(vec![1.0, 2.0, 3.0], 0.5);
        let cfg = RmlConfig { n_opt_steps: 0, ..small_cfg() };
        let prior = vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]];
        let (posterior, diag) = run_rml(&prior, &obs, &model, &cfg).unwrap();
        assert_eq!(posterior, prior);
        assert!(diag.cost_histories.unwrap().iter().all(|h| h.is_empty()));
    }

    #[test]
    fn optimization_reduces_cost_and_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearForward { matrix: a };
        let obs = flat_obs((0..6).map(|i| 0.5 * i as f64).collect(), 0.3);
        let cfg = RmlConfig { n_opt_steps: 100, lr: 0.05, seed: 5, ..small_cfg() };
        let prior: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (p1, d1) = run_rml(&prior, &obs, &model, &cfg).unwrap();
        let (p2, _) = run_rml(&prior, &obs, &model, &cfg).unwrap();
        assert_eq!(p1, p2);
        let hist = d1.cost_histories.unwrap();
        for h in &hist {
            assert!(h.last().unwrap() < h.first().unwrap(), "cost did not decrease: {h:?}");
        }
        assert!(d1.posterior_rmse < d1.prior_rmse);
    }

    #[test]
    fn gradient_free_model_is_rejected() {
        struct NoGrad;
        impl ForwardModel for NoGrad {
            fn n_obs(&self) -> usize {
                1
            }
            fn n_params(&self) -> usize {
                1
            }
            fn evaluate(&self, _m: usize, p: &[f64]) -> Result<Vec<f64>, DaError> {
                Ok(vec![p[0]])
            }
        }
        let obs = flat_obs(vec![1.0], 0.5);
        let cfg = small_cfg();
        match run_rml(&[vec![0.0]], &obs, &NoGrad, &cfg) {
            Err(DaError::GradientUnavailable) => {}
            other => panic!("expected GradientUnavailable, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn sh_rml_counts_two_hf_calls_per_member_for_any_step_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let surrogate = LinearForward { matrix: a.clone() };
        let hf = LinearForward { matrix: a };
        let obs = flat_obs(vec![0.2, 0.4, -0.1], 0.5);
        let prior: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        for steps in [0usize, 7, 30] {
            let cfg = RmlConfig { n_opt_steps: steps, ..small_cfg() };
            let (_, diag) = run_sh_rml(&prior, &obs, &surrogate, &hf, &cfg).unwrap();
            assert_eq!(diag.hf_calls, 2 * 5, "steps {steps}");
            assert_eq!(diag.surrogate_calls, steps * 5);
        }
    }

    #[test]
    fn fitted_length_recovers_a_gaussian_field_scale() {
        // a raster with known smooth structure: correlation length ~ wavelength/(2 pi)
        let n = 48;
        let raster = Array2::from_shape_fn((n, n), |(iy, ix)| {
            ((ix as f64) / 3.0).sin() + ((iy as f64) / 3.0).cos()
        });
        let l = fit_correlation_length(&[raster], 8);
        assert!(l > 1.0 && l < 8.0, "fitted length {l}");
    }
}
