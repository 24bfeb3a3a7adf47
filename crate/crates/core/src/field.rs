use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{CoreError, GridSpec};

pub const FACIES_BACKGROUND: u8 = 0;
pub const FACIES_LEVEE: u8 = 1;
pub const FACIES_CHANNEL: u8 = 2;

/// One permeability/porosity realization on a grid. `log_perm` is ln(mD);
/// rasters are (ny, nx) with y as the outer axis.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    pub grid: GridSpec,
    pub log_perm: Array2<f64>,
    pub porosity: Array2<f64>,
    pub facies: Array2<u8>,
    pub seed: u64,
}

impl FieldRealization {
    pub fn validate(&self) -> Result<(), CoreError> {
        let shape = (self.grid.ny, self.grid.nx);
        if self.log_perm.dim() != shape || self.porosity.dim() != shape || self.facies.dim() != shape {
            return Err(CoreError::invalid(
                "field",
                format!("raster shapes must be {:?}", shape),
            ));
        }
        if self.log_perm.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("field", "non-finite log permeability"));
        }
        if self.porosity.iter().any(|&v| !(v > 0.0 && v < 0.4)) {
            return Err(CoreError::invalid("field", "porosity outside (0, 0.4)"));
        }
        Ok(())
    }

    /// Permeability in mD for one cell.
    pub fn perm(&self, ix: usize, iy: usize) -> f64 {
        self.log_perm[[iy, ix]].exp()
    }

    /// Areal fraction of channel-facies cells.
    pub fn channel_fraction(&self) -> f64 {
        let n = self.facies.iter().filter(|&&f| f == FACIES_CHANNEL).count();
        n as f64 / self.facies.len() as f64
    }
}

/// How an ensemble came to be; carried as provenance next to the members.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub base_seed: u64,
    /// Free-form description of the generating process.
    pub generation: String,
    /// Assimilation steps applied so far, oldest first.
    pub da_history: Vec<String>,
}

/// Ordered collection of field realizations with provenance.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<FieldRealization>,
    pub meta: EnsembleMeta,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}
