use serde::{Deserialize, Serialize};

use crate::CoreError;

/// Areal grid of a single-layer reservoir model. Cell (ix, iy) is centered at
/// ((ix + 0.5) * dx, (iy + 0.5) * dy); thickness enters flow only as a
/// transmissivity multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cell count in x.
    pub nx: usize,
    /// Cell count in y.
    pub ny: usize,
    /// Cell size in x, meters.
    pub dx: f64,
    /// Cell size in y, meters.
    pub dy: f64,
    /// Layer thickness, meters.
    pub thickness: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, thickness: f64) -> Result<Self, CoreError> {
        let g = GridSpec { nx, ny, dx, dy, thickness };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.nx < 8 || self.ny < 8 {
            return Err(CoreError::invalid("grid", format!("nx and ny must be >= 8, got {}x{}", self.nx, self.ny)));
        }
        for (name, v) in [("dx", self.dx), ("dy", self.dy), ("thickness", self.thickness)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::invalid("grid", format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Bulk volume of one cell in cubic meters.
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.thickness
    }

    /// Row-major cell index (y outer, x inner).
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    pub fn center_cell(&self) -> (usize, usize) {
        (self.nx / 2, self.ny / 2)
    }

    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        ix < self.nx && iy < self.ny
    }
}

impl Default for GridSpec {
    /// 32 x 32 cells of 192 m x 192 m x 10 m.
    fn default() -> Self {
        GridSpec { nx: 32, ny: 32, dx: 192.0, dy: 192.0, thickness: 10.0 }
    }
}
