//! Ensemble smoother with multiple data assimilation, plus the
//! surrogate-hybrid variant that runs the intermediate sweeps on a cheap
//! model and recomputes prior and posterior with the high-fidelity one.
//!
//! The same data is assimilated n_assimilations times with the measurement
//! covariance inflated by alpha_i, sum(1/alpha_i) = 1. Member updates go
//! through a truncated eigendecomposition of the inflated innovation
//! covariance; perturbation streams are keyed (seed, sweep, member), so two
//! runs that evaluate the same models produce bitwise-identical ensembles.

use std::time::Instant;

use gcs_core::{par, seed};
use gcs_sim::ObservationSet;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diagnostics::{misfit_summary, DaDiagnostics};
use crate::forward_model::ForwardModel;
use crate::{CountingForward, DaError};

/// Clamp window for log-permeability parameters, ln(0.01 mD) to ln(20000 mD).
pub fn log_perm_bounds() -> (f64, f64) {
    (0.01f64.ln(), 20_000.0f64.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsmdaConfig {
    pub n_assimilations: usize,
    /// Inflation factors, one per sweep; sum of reciprocals must be 1.
    pub alpha: Vec<f64>,
    /// Measurement noise std building C_D = noise_std^2 I.
    pub noise_std: f64,
    /// Keep leading eigenpairs covering this energy fraction.
    pub svd_energy_cutoff: f64,
    pub seed: u64,
    /// Parameter clamp window; None disables clamping.
    pub bounds: Option<(f64, f64)>,
}

impl EsmdaConfig {
    /// Constant alpha_i = n_assimilations, the classic multiple-assimilation
    /// schedule.
    pub fn constant_alpha(n_assimilations: usize, noise_std: f64, seed_value: u64) -> Result<Self, DaError> {
        let alpha = vec![n_assimilations as f64; n_assimilations];
        Self::with_alpha(alpha, noise_std, seed_value)
    }

    pub fn with_alpha(alpha: Vec<f64>, noise_std: f64, seed_value: u64) -> Result<Self, DaError> {
        let cfg = EsmdaConfig {
            n_assimilations: alpha.len(),
            alpha,
            noise_std,
            svd_energy_cutoff: 0.99,
            seed: seed_value,
            bounds: Some(log_perm_bounds()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DaError> {
        if self.n_assimilations == 0 || self.alpha.len() != self.n_assimilations {
            return Err(DaError::Config("alpha schedule must have n_assimilations entries".into()));
        }
        if self.alpha.iter().any(|a| !(a > &0.0)) {
            return Err(DaError::Config("alpha entries must be positive".into()));
        }
        let recip: f64 = self.alpha.iter().map(|a| 1.0 / a).sum();
        if (recip - 1.0).abs() > 1.0e-12 {
            return Err(DaError::Config(format!("sum of 1/alpha must be 1, got {recip}")));
        }
        if !(self.noise_std > 0.0) {
            return Err(DaError::Config("noise_std must be positive".into()));
        }
        if !(self.svd_energy_cutoff > 0.0 && self.svd_energy_cutoff <= 1.0) {
            return Err(DaError::Config("svd_energy_cutoff must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-(sweep, member) perturbation stream.
pub fn member_stream(root: u64, sweep: usize, member: usize) -> u64 {
    seed::derive(seed::derive(root, "perturb", sweep as u64), "member", member as u64)
}

/// d_j = d_obs + sqrt(alpha) * noise_std * z, z iid standard normal.
pub fn perturb_observations(d_obs: &[f64], noise_std: f64, alpha: f64, stream_seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let scale = alpha.sqrt() * noise_std;
    d_obs
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + scale * z
        })
        .collect()
}

/// Truncated pseudo-inverse applier for the inflated innovation covariance.
struct TruncatedInverse {
    vectors: DMatrix<f64>,
    inv_values: DVector<f64>,
}

impl TruncatedInverse {
    fn new(p: DMatrix<f64>, energy_cutoff: f64) -> Self {
        let n = p.nrows();
        let eig = SymmetricEigen::new(p);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let total: f64 = eig.eigenvalues.iter().filter(|v| **v > 0.0).sum();
        let floor = eig.eigenvalues[order[0]].max(0.0) * 1.0e-12;
        let mut keep = Vec::new();
        let mut acc = 0.0;
        for &i in &order {
            let lambda = eig.eigenvalues[i];
            if lambda <= floor {
                break;
            }
            keep.push(i);
            acc += lambda;
            if acc >= energy_cutoff * total {
                break;
            }
        }
        let k = keep.len().max(1);
        let mut vectors = DMatrix::zeros(n, k);
        let mut inv_values = DVector::zeros(k);
        for (col, &i) in keep.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(i));
            inv_values[col] = 1.0 / eig.eigenvalues[i];
        }
        TruncatedInverse { vectors, inv_values }
    }

    fn apply_matrix(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut proj = self.vectors.transpose() * v;
        for (row, inv) in self.inv_values.iter().enumerate() {
            proj.row_mut(row).scale_mut(*inv);
        }
        &self.vectors * proj
    }
}

/// One analysis sweep. `params` is (n_params, n_members), `predictions`
/// (n_obs, n_members); `perturbed` holds the d_j columns. Returns the
/// updated parameters and whether the ensemble had collapsed.
pub fn esmda_update(
    params: &DMatrix<f64>,
    predictions: &DMatrix<f64>,
    perturbed: &DMatrix<f64>,
    alpha: f64,
    noise_std: f64,
    cfg: &EsmdaConfig,
) -> (DMatrix<f64>, bool) {
    let n_members = params.ncols();
    let n_obs = predictions.nrows();
    assert!(n_members >= 2, "need at least two members");
    assert_eq!(predictions.ncols(), n_members);

    let m_mean = params.column_mean();
    let d_mean = predictions.column_mean();
    let mut dm = params.clone();
    let mut dd = predictions.clone();
    for j in 0..n_members {
        dm.column_mut(j).axpy(-1.0, &m_mean, 1.0);
        dd.column_mut(j).axpy(-1.0, &d_mean, 1.0);
    }
    let spread_m = dm.norm();
    let spread_d = dd.norm();
    if spread_m == 0.0 || spread_d == 0.0 {
        return (params.clone(), true);
    }

    let denom = (n_members - 1) as f64;
    let mut p = (&dd * dd.transpose()) / denom;
    for i in 0..n_obs {
        p[(i, i)] += alpha * noise_std * noise_std;
    }
    let pinv = TruncatedInverse::new(p, cfg.svd_energy_cutoff);

    // M + C_MD P^-1 (d_j - g_j), batched over members
    let cross_cov = (&dm * dd.transpose()) / denom;
    let innovations = perturbed - predictions;
    let weighted = pinv.apply_matrix(&innovations);
    let mut updated = params + cross_cov * weighted;
    if let Some((lo, hi)) = cfg.bounds {
        for v in updated.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
    (updated, false)
}

fn predict_all(
    model: &dyn ForwardModel,
    params: &DMatrix<f64>,
) -> Result<Vec<Vec<f64>>, DaError> {
    let n = params.ncols();
    let preds = par::map_indexed(n, |j| {
        let col: Vec<f64> = params.column(j).iter().cloned().collect();
        model.evaluate(j, &col)
    });
    preds.into_iter().collect()
}

fn to_matrix(columns: &[Vec<f64>], rows: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, columns.len());
    for (j, col) in columns.iter().enumerate() {
        assert_eq!(col.len(), rows);
        m.set_column(j, &DVector::from_column_slice(col));
    }
    m
}

/// Multiple data assimilation over per-sweep models. `sweep_models[i]`
/// produces predictions for sweep i; `final_model` recomputes the posterior.
fn run_mda(
    sweep_models: &[&dyn ForwardModel],
    final_model: &dyn ForwardModel,
    prior: &[Vec<f64>],
    obs: &ObservationSet,
    cfg: &EsmdaConfig,
    method: &str,
) -> Result<(Vec<Vec<f64>>, DaDiagnostics), DaError> {
    cfg.validate()?;
    let n_members = prior.len();
    if n_members < 2 {
        return Err(DaError::Config(format!("ensemble size {n_members} < 2")));
    }
    let n_obs = obs.n_obs();
    if sweep_models.iter().any(|m| m.n_obs() != n_obs) || final_model.n_obs() != n_obs {
        return Err(DaError::ObsMismatch(format!(
            "forward model observation count does not match the {n_obs} observations"
        )));
    }
    let n_params = prior[0].len();
    let d_obs = obs.flat_values();

    let mut diag = DaDiagnostics::new(method, n_members, n_obs);
    diag.alpha_schedule = cfg.alpha.clone();
    if n_members < 10 {
        diag.warnings.push(format!("ensemble size {n_members} is small; statistics will be noisy"));
    }

    let mut params = to_matrix(prior, n_params);

    let mut collapsed = false;
    for (sweep, (&alpha, model)) in cfg.alpha.iter().zip(sweep_models).enumerate() {
        let t0 = Instant::now();
        let preds = predict_all(*model, &params)?;
        let predictions = to_matrix(&preds, n_obs);
        if sweep == 0 {
            let (misfits, rmse) = misfit_summary(&preds, obs);
            diag.prior_misfits = misfits;
            diag.prior_rmse = rmse;
        }
        let perturbed_cols: Vec<Vec<f64>> = (0..n_members)
            .map(|j| perturb_observations(&d_obs, cfg.noise_std, alpha, member_stream(cfg.seed, sweep, j)))
            .collect();
        let perturbed = to_matrix(&perturbed_cols, n_obs);
        let (next, was_collapsed) = esmda_update(&params, &predictions, &perturbed, alpha, cfg.noise_std, cfg);
        collapsed |= was_collapsed;
        params = next;
        diag.timings.push(&format!("sweep_{sweep}"), t0.elapsed().as_secs_f64());
    }
    if collapsed {
        diag.warnings.push("ensemble spread collapsed; update passed members through unchanged".into());
    }

    let t0 = Instant::now();
    let posterior_preds = predict_all(final_model, &params)?;
    diag.timings.push("posterior_predictions", t0.elapsed().as_secs_f64());
    let (misfits, rmse) = misfit_summary(&posterior_preds, obs);
    diag.posterior_misfits = misfits;
    diag.posterior_rmse = rmse;

    let posterior: Vec<Vec<f64>> = (0..n_members).map(|j| params.column(j).iter().cloned().collect()).collect();
    Ok((posterior, diag))
}

/// Standard multiple-assimilation smoother: every sweep and the posterior
/// recomputation use the supplied (high-fidelity) model.
pub fn run_esmda(
    forward: &dyn ForwardModel,
    prior: &[Vec<f64>],
    obs: &ObservationSet,
    cfg: &EsmdaConfig,
) -> Result<(Vec<Vec<f64>>, DaDiagnostics), DaError> {
    let counted = CountingForward::new(forward);
    let sweep_models: Vec<&dyn ForwardModel> = (0..cfg.n_assimilations).map(|_| &counted as &dyn ForwardModel).collect();
    let (posterior, mut diag) = run_mda(&sweep_models, &counted, prior, obs, cfg, "esmda")?;
    diag.hf_calls = counted.calls();
    Ok((posterior, diag))
}

/// Surrogate-hybrid smoother: the first sweep and the posterior use the
/// high-fidelity model, intermediate sweeps run on the surrogate. High-
/// fidelity call count is exactly 2 * n_members.
pub fn run_sh_esmda(
    hf_forward: &dyn ForwardModel,
    surrogate_forward: &dyn ForwardModel,
    prior: &[Vec<f64>],
    obs: &ObservationSet,
    cfg: &EsmdaConfig,
) -> Result<(Vec<Vec<f64>>, DaDiagnostics), DaError> {
    let hf = CountingForward::new(hf_forward);
    let surr = CountingForward::new(surrogate_forward);
    let mut sweep_models: Vec<&dyn ForwardModel> = Vec::with_capacity(cfg.n_assimilations);
    sweep_models.push(&hf);
    for _ in 1..cfg.n_assimilations {
        sweep_models.push(&surr);
    }
    let (posterior, mut diag) = run_mda(&sweep_models, &hf, prior, obs, cfg, "sh-esmda")?;
    diag.hf_calls = hf.calls();
    diag.surrogate_calls = surr.calls();
    Ok((posterior, diag))
}
