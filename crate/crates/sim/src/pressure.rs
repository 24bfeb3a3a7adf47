//! Implicit pressure step: two-point flux approximation with harmonic-mean
//! inter-cell transmissibilities, no-flow boundaries, and a diagonally
//! preconditioned conjugate-gradient solve of the SPD system
//!   (phi V c_t / dt) (p' - p) - div(T grad p') = q.

use gcs_core::{FieldRealization, GridSpec};

use crate::config::{SimConfig, SimError};

/// Flow/pressure unit bridge: m3/day per (mD * m * bar / cP), i.e.
/// 9.869233e-16 m2/mD * 1e5 Pa/bar / 1e-3 Pa.s/cP * 86400 s/day.
pub const DARCY_M3_PER_DAY: f64 = 8.527017312e-3;

/// Time-invariant parts of the pressure system for one field realization.
pub struct PressureSystem {
    pub nx: usize,
    pub ny: usize,
    /// East-face transmissibility / viscosity, m3/(day*bar); index iy*(nx-1)+ix.
    pub tx: Vec<f64>,
    /// North-face transmissibility / viscosity; index iy*nx+ix, iy < ny-1.
    pub ty: Vec<f64>,
    /// Accumulation coefficient phi*V*c_t/dt per cell, m3/(day*bar).
    pub acc: Vec<f64>,
}

impl PressureSystem {
    pub fn assemble(field: &FieldRealization, cfg: &SimConfig) -> Self {
        let grid = &field.grid;
        let (nx, ny) = (grid.nx, grid.ny);
        let mut tx = vec![0.0; (nx - 1) * ny];
        let mut ty = vec![0.0; nx * (ny - 1)];
        let geom_x = DARCY_M3_PER_DAY * grid.dy * grid.thickness / (grid.dx * cfg.viscosity);
        let geom_y = DARCY_M3_PER_DAY * grid.dx * grid.thickness / (grid.dy * cfg.viscosity);
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let ka = field.perm(ix, iy);
                let kb = field.perm(ix + 1, iy);
                tx[iy * (nx - 1) + ix] = geom_x * 2.0 * ka * kb / (ka + kb);
            }
        }
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                let ka = field.perm(ix, iy);
                let kb = field.perm(ix, iy + 1);
                ty[iy * nx + ix] = geom_y * 2.0 * ka * kb / (ka + kb);
            }
        }
        let vol = grid.cell_volume();
        let acc: Vec<f64> = field
            .porosity
            .iter()
            .map(|phi| phi * vol * cfg.total_compressibility / cfg.dt)
            .collect();
        PressureSystem { nx, ny, tx, ty, acc }
    }

    fn diagonal(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut diag = self.acc.clone();
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let t = self.tx[iy * (nx - 1) + ix];
                diag[iy * nx + ix] += t;
                diag[iy * nx + ix + 1] += t;
            }
        }
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                let t = self.ty[iy * nx + ix];
                diag[iy * nx + ix] += t;
                diag[(iy + 1) * nx + ix] += t;
            }
        }
        diag
    }

    fn matvec(&self, diag: &[f64], x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for i in 0..x.len() {
            y[i] = diag[i] * x[i];
        }
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let t = self.tx[iy * (nx - 1) + ix];
                let a = iy * nx + ix;
                y[a] -= t * x[a + 1];
                y[a + 1] -= t * x[a];
            }
        }
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                let t = self.ty[iy * nx + ix];
                let a = iy * nx + ix;
                y[a] -= t * x[a + nx];
                y[a + nx] -= t * x[a];
            }
        }
    }

    /// Solve A p' = acc .* p + q for one step. `p` is updated in place and
    /// doubles as the initial guess.
    pub fn step(&self, p: &mut [f64], q: &[f64], cfg: &SimConfig, step: usize) -> Result<(), SimError> {
        let n = p.len();
        let diag = self.diagonal();
        debug_assert!(diag.iter().all(|&d| d > 0.0 && d.is_finite()), "pressure matrix diagonal must be positive");
        debug_assert!(self.tx.iter().chain(self.ty.iter()).all(|&t| t >= 0.0), "transmissibilities must be nonnegative");

        let b: Vec<f64> = (0..n).map(|i| self.acc[i] * p[i] + q[i]).collect();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();

        let mut r = vec![0.0; n];
        self.matvec(&diag, p, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res <= cfg.linear_solver_tol * b_norm {
            return Ok(());
        }

        // Jacobi-preconditioned CG
        let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
        let mut search = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for iter in 0..cfg.max_cg_iters {
            self.matvec(&diag, &search, &mut ap);
            let p_ap: f64 = search.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if p_ap <= 0.0 || !p_ap.is_finite() {
                return Err(SimError::Solver { step, iterations: iter, residual: res / b_norm });
            }
            let alpha = rz / p_ap;
            for i in 0..n {
                p[i] += alpha * search[i];
                r[i] -= alpha * ap[i];
            }
            res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if res <= cfg.linear_solver_tol * b_norm {
                return Ok(());
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                search[i] = z[i] + beta * search[i];
            }
        }
        Err(SimError::Solver { step, iterations: cfg.max_cg_iters, residual: res / b_norm })
    }

    /// Signed face fluxes from a pressure field, m3/day; positive flows
    /// toward +x / +y.
    pub fn face_fluxes(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let mut fx = vec![0.0; self.tx.len()];
        let mut fy = vec![0.0; self.ty.len()];
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let a = iy * nx + ix;
                fx[iy * (nx - 1) + ix] = self.tx[iy * (nx - 1) + ix] * (p[a] - p[a + 1]);
            }
        }
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                let a = iy * nx + ix;
                fy[iy * nx + ix] = self.ty[iy * nx + ix] * (p[a] - p[a + nx]);
            }
        }
        (fx, fy)
    }
}

/// Resolve the injector cell, defaulting to the grid center.
pub fn well_index(grid: &GridSpec, cfg: &SimConfig) -> Result<usize, SimError> {
    let (wx, wy) = cfg.well_cell.unwrap_or_else(|| grid.center_cell());
    if !grid.contains(wx, wy) {
        return Err(SimError::OutOfBounds { why: format!("well cell ({wx}, {wy}) outside {}x{} grid", grid.nx, grid.ny) });
    }
    Ok(grid.idx(wx, wy))
}
