use gcs_core::CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("pressure solve failed at step {step}: {iterations} iterations, relative residual {residual:.3e}")]
    Solver { step: usize, iterations: usize, residual: f64 },

    #[error("non-finite state at step {step} ({what})")]
    NonFinite { step: usize, what: &'static str },

    #[error("observation index out of bounds: {why}")]
    OutOfBounds { why: String },
}

/// Volumetric injection rate per step, reservoir m3/day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSchedule {
    pub rates: Vec<f64>,
}

impl InjectionSchedule {
    /// Validated schedule: nonnegative with at least one nonzero entry.
    pub fn new(rates: Vec<f64>) -> Result<Self, CoreError> {
        if rates.is_empty() {
            return Err(CoreError::invalid("injection schedule", "empty rate list"));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CoreError::invalid("injection schedule", "rates must be finite and >= 0"));
        }
        if rates.iter().all(|&r| r == 0.0) {
            return Err(CoreError::invalid("injection schedule", "at least one rate must be nonzero"));
        }
        Ok(InjectionSchedule { rates })
    }

    pub fn constant(rate: f64, n_steps: usize) -> Result<Self, CoreError> {
        Self::new(vec![rate; n_steps])
    }

    /// Three-level piecewise-constant ramp over `n_steps` (thirds, remainder
    /// on the last level).
    pub fn ramp3(levels: [f64; 3], n_steps: usize) -> Result<Self, CoreError> {
        let third = n_steps / 3;
        let mut rates = Vec::with_capacity(n_steps);
        rates.extend(std::iter::repeat(levels[0]).take(third));
        rates.extend(std::iter::repeat(levels[1]).take(third));
        rates.extend(std::iter::repeat(levels[2]).take(n_steps - 2 * third));
        Self::new(rates)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Solver configuration. Units: days, bar, cP, 1/bar, reservoir m3/day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_steps: usize,
    /// Outer step length in days.
    pub dt: f64,
    /// Initial pressure, bar.
    pub p_init: f64,
    /// Fluid viscosity, cP.
    pub viscosity: f64,
    /// Total (rock + fluid) compressibility, 1/bar.
    pub total_compressibility: f64,
    pub injection: InjectionSchedule,
    /// Injector cell; `None` means the grid center.
    pub well_cell: Option<(usize, usize)>,
    /// Initial injected-gas molar fraction.
    pub f_init: f64,
    /// Relative residual target for the pressure solve.
    pub linear_solver_tol: f64,
    pub max_cg_iters: usize,
}

impl Default for SimConfig {
    /// Defaults are calibrated so the default injector ramp drives the well
    /// cell from 200 to roughly 320 bar over the 61 monthly steps on typical
    /// channelized fields, with a plume a few cells wide by the end.
    fn default() -> Self {
        let n_steps = 61;
        SimConfig {
            n_steps,
            dt: 30.0,
            p_init: 200.0,
            viscosity: 0.06,
            total_compressibility: 1.0e-3,
            injection: InjectionSchedule::ramp3([1900.0, 2850.0, 3800.0], n_steps).expect("static default"),
            well_cell: None,
            f_init: 0.02,
            linear_solver_tol: 1.0e-10,
            max_cg_iters: 20_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_steps == 0 {
            return Err(CoreError::invalid("sim config", "n_steps must be >= 1"));
        }
        if !(self.dt > 0.0) {
            return Err(CoreError::invalid("sim config", "dt must be positive"));
        }
        if !(self.p_init > 0.0) {
            return Err(CoreError::invalid("sim config", "p_init must be positive"));
        }
        if !(self.viscosity > 0.0) || !(self.total_compressibility > 0.0) {
            return Err(CoreError::invalid("sim config", "viscosity and compressibility must be positive"));
        }
        if !(self.linear_solver_tol > 0.0 && self.linear_solver_tol <= 1.0e-3) {
            return Err(CoreError::invalid("sim config", "linear_solver_tol must lie in (0, 1e-3]"));
        }
        if !(0.0..=1.0).contains(&self.f_init) {
            return Err(CoreError::invalid("sim config", "f_init must lie in [0, 1]"));
        }
        if self.injection.len() != self.n_steps {
            return Err(CoreError::invalid(
                "sim config",
                format!("schedule length {} != n_steps {}", self.injection.len(), self.n_steps),
            ));
        }
        if self.injection.rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CoreError::invalid("sim config", "rates must be finite and >= 0"));
        }
        Ok(())
    }
}
