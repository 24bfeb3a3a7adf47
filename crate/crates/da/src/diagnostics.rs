//! Run diagnostics: per-member misfits, call accounting and phase timings.
//! Timings are kept out of the serialized diagnostics so reports stay
//! byte-reproducible; they are written to a separate sidecar.

use gcs_sim::ObservationSet;
use serde::{Deserialize, Serialize};

/// Misfit of one member at one monitoring point, aggregated over the
/// observed times: the signed mean keeps bias visible, the absolute mean
/// feeds the box plots.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MemberMisfit {
    pub member: usize,
    pub point: usize,
    pub mean_error: f64,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PhaseTimings {
    /// (phase name, seconds), in execution order.
    pub phases: Vec<(String, f64)>,
}

impl PhaseTimings {
    pub fn push(&mut self, name: &str, seconds: f64) {
        self.phases.push((name.to_string(), seconds));
    }

    pub fn total(&self) -> f64 {
        self.phases.iter().map(|(_, s)| s).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaDiagnostics {
    pub method: String,
    pub n_members: usize,
    pub n_obs: usize,
    pub alpha_schedule: Vec<f64>,
    /// High-fidelity forward evaluations (exact, counted at call sites).
    pub hf_calls: usize,
    /// Surrogate forward evaluations, including gradient evaluations.
    pub surrogate_calls: usize,
    pub prior_misfits: Vec<MemberMisfit>,
    pub posterior_misfits: Vec<MemberMisfit>,
    /// Root-mean-square misfit over all members, times and points.
    pub prior_rmse: f64,
    pub posterior_rmse: f64,
    pub warnings: Vec<String>,
    /// Members dropped by the optimizer (non-finite cost).
    pub excluded_members: Vec<usize>,
    /// Per-member cost histories for gradient-based runs.
    pub cost_histories: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub timings: PhaseTimings,
}

impl DaDiagnostics {
    pub fn new(method: &str, n_members: usize, n_obs: usize) -> Self {
        DaDiagnostics {
            method: method.to_string(),
            n_members,
            n_obs,
            alpha_schedule: Vec::new(),
            hf_calls: 0,
            surrogate_calls: 0,
            prior_misfits: Vec::new(),
            posterior_misfits: Vec::new(),
            prior_rmse: f64::NAN,
            posterior_rmse: f64::NAN,
            warnings: Vec::new(),
            excluded_members: Vec::new(),
            cost_histories: None,
            timings: PhaseTimings::default(),
        }
    }

    /// Median over members of |mean misfit| at one monitoring point.
    pub fn median_abs_misfit(misfits: &[MemberMisfit], point: usize) -> f64 {
        let vals: Vec<f64> = misfits.iter().filter(|m| m.point == point).map(|m| m.mean_error.abs()).collect();
        gcs_core::stats::median(&vals)
    }
}

/// Per-member, per-point misfits and the overall RMS misfit of a prediction
/// set against the observations. Predictions are flat, time-major.
pub fn misfit_summary(predictions: &[Vec<f64>], obs: &ObservationSet) -> (Vec<MemberMisfit>, f64) {
    let n_times = obs.times.len();
    let n_points = obs.monitor_cells.len();
    let mut misfits = Vec::with_capacity(predictions.len() * n_points);
    let mut ss = 0.0;
    let mut count = 0usize;
    for (member, pred) in predictions.iter().enumerate() {
        assert_eq!(pred.len(), n_times * n_points, "prediction length mismatch");
        for point in 0..n_points {
            let mut sum = 0.0;
            let mut sum_abs = 0.0;
            for t in 0..n_times {
                let e = pred[t * n_points + point] - obs.values[[t, point]];
                sum += e;
                sum_abs += e.abs();
                ss += e * e;
                count += 1;
            }
            misfits.push(MemberMisfit {
                member,
                point,
                mean_error: sum / n_times as f64,
                mean_abs_error: sum_abs / n_times as f64,
            });
        }
    }
    (misfits, (ss / count as f64).sqrt())
}
