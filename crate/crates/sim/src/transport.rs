//! Explicit first-order upwind transport of the injected-gas fraction.
//!
//! The tracked content of a cell is Phi * f, where Phi = phi * V * (1 + c_t *
//! (p - p_init)) is the pressure-corrected pore volume. The pressure equation
//! makes the discrete continuity identity Phi' - Phi = dt * (influx - outflux
//! + q) exact up to the linear-solve residual, so the scheme conserves tracer
//! content to solver precision and keeps f in [0, 1] under the CFL limit.

use crate::config::{SimConfig, SimError};
use crate::pressure::PressureSystem;

const CFL_TARGET: f64 = 0.9;
/// Rounding slack tolerated before the bounds assertion trips.
const BOUNDS_SLACK: f64 = 1.0e-9;

pub struct TransportStep {
    /// Relative tracer balance error of this step (vs injected volume).
    pub balance_rel: f64,
}

/// Advance `f` over one outer step given start/end pore volumes and face
/// fluxes evaluated at the end-of-step pressure. `q_well` is the injected
/// rate (composition 1.0) placed at `well`.
#[allow(clippy::too_many_arguments)]
pub fn advect(
    sys: &PressureSystem,
    f: &mut [f64],
    phi_start: &[f64],
    phi_end: &[f64],
    fx: &[f64],
    fy: &[f64],
    q_well: f64,
    well: usize,
    cfg: &SimConfig,
    step: usize,
) -> Result<TransportStep, SimError> {
    let (nx, ny) = (sys.nx, sys.ny);
    let n = nx * ny;

    // total outflow per cell, for the CFL bound
    let mut outflow = vec![0.0; n];
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            let flux = fx[iy * (nx - 1) + ix];
            let a = iy * nx + ix;
            if flux > 0.0 {
                outflow[a] += flux;
            } else {
                outflow[a + 1] -= flux;
            }
        }
    }
    for iy in 0..ny - 1 {
        for ix in 0..nx {
            let flux = fy[iy * nx + ix];
            let a = iy * nx + ix;
            if flux > 0.0 {
                outflow[a] += flux;
            } else {
                outflow[a + nx] -= flux;
            }
        }
    }

    let mut dt_max = cfg.dt;
    for i in 0..n {
        let phi_min = phi_start[i].min(phi_end[i]);
        if phi_min <= 0.0 {
            return Err(SimError::NonFinite { step, what: "pore volume collapsed" });
        }
        if outflow[i] > 0.0 {
            dt_max = dt_max.min(CFL_TARGET * phi_min / outflow[i]);
        }
    }
    let substeps = (cfg.dt / dt_max).ceil() as usize;
    let delta = cfg.dt / substeps as f64;

    let mut content = vec![0.0; n];
    let injected_before: f64 = (0..n).map(|i| phi_start[i] * f[i]).sum();

    for k in 0..substeps {
        let w0 = k as f64 / substeps as f64;
        let w1 = (k + 1) as f64 / substeps as f64;
        for i in 0..n {
            let phi_k = phi_start[i] + w0 * (phi_end[i] - phi_start[i]);
            content[i] = phi_k * f[i];
        }
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let flux = fx[iy * (nx - 1) + ix];
                let a = iy * nx + ix;
                let donor = if flux > 0.0 { f[a] } else { f[a + 1] };
                content[a] -= delta * flux * donor;
                content[a + 1] += delta * flux * donor;
            }
        }
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                let flux = fy[iy * nx + ix];
                let a = iy * nx + ix;
                let donor = if flux > 0.0 { f[a] } else { f[a + nx] };
                content[a] -= delta * flux * donor;
                content[a + nx] += delta * flux * donor;
            }
        }
        content[well] += delta * q_well; // injected composition 1.0

        for i in 0..n {
            let phi_next = phi_start[i] + w1 * (phi_end[i] - phi_start[i]);
            let v = content[i] / phi_next;
            if !v.is_finite() {
                return Err(SimError::NonFinite { step, what: "fraction" });
            }
            assert!(
                (-BOUNDS_SLACK..=1.0 + BOUNDS_SLACK).contains(&v),
                "fraction {v} out of [0,1] at cell {i}, step {step}"
            );
            f[i] = v.clamp(0.0, 1.0);
        }
    }

    let injected_after: f64 = (0..n).map(|i| phi_end[i] * f[i]).sum();
    let gained = injected_after - injected_before;
    let expected = q_well * cfg.dt;
    let balance_rel = if expected > 0.0 {
        (gained - expected).abs() / expected
    } else {
        gained.abs() / injected_before.max(1.0)
    };
    Ok(TransportStep { balance_rel })
}
