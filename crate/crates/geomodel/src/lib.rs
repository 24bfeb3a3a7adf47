//! Channelized permeability/porosity prior: sinuous sand bodies with levee
//! halos on a background matrix, giving bimodal non-Gaussian log-permeability
//! statistics. Realizations are pure functions of (prior, grid, seed).

mod channel;
mod prior;
mod sample;

pub use prior::{ChannelPriorSpec, FaciesPerm, NormalSpec, UniformRange};
pub use sample::{generate_ensemble, sample_realization, GeoError, RETRY_BUDGET};
