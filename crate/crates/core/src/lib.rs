//! Shared primitives for the GCS lab workspace: grid geometry, field
//! realizations, the GCSF raster format, ensemble directory layout, seed
//! derivation and the parallel-map shim used by every compute crate.

pub mod error;
pub mod field;
pub mod gcsf;
pub mod grid;
pub mod par;
pub mod seed;
pub mod stats;

pub use error::CoreError;
pub use field::{Ensemble, EnsembleMeta, FieldRealization, FACIES_BACKGROUND, FACIES_CHANNEL, FACIES_LEVEE};
pub use grid::GridSpec;
