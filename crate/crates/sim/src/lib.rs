//! Finite-volume forward model: implicit single-phase slightly-compressible
//! pressure with a central injector, plus explicit upwind transport of the
//! injected-gas molar fraction. Pressure diffuses ahead of the advected
//! composition front, which is the behavior the monitoring setup observes.

mod config;
mod observe;
mod pressure;
mod transport;

pub mod forward;

pub use config::{InjectionSchedule, SimConfig, SimError};
pub use forward::{run_forward, StateTrajectory};
pub use observe::{
    default_monitor_cells, default_obs_times, make_synthetic_truth, observe, read_observations,
    write_observations, ObservationSet,
};
