use gcs_core::FieldRealization;
use ndarray::Array3;

use crate::config::{SimConfig, SimError};
use crate::pressure::{well_index, PressureSystem};
use crate::transport::advect;

/// Pressure (bar) and injected-gas fraction over all steps, including the
/// initial state: shape (n_steps + 1, ny, nx).
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub pressure: Array3<f64>,
    pub co2_fraction: Array3<f64>,
    /// Relative tracer-balance error per step, against injected volume.
    pub tracer_balance_rel: Vec<f64>,
}

impl StateTrajectory {
    pub fn n_frames(&self) -> usize {
        self.pressure.dim().0
    }
}

/// Run the forward model. Pure function of (fields, cfg); errors carry the
/// failing step.
pub fn run_forward(fields: &FieldRealization, cfg: &SimConfig) -> Result<StateTrajectory, SimError> {
    cfg.validate()?;
    fields.validate()?;
    let grid = &fields.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    let n = nx * ny;
    let well = well_index(grid, cfg)?;

    let sys = PressureSystem::assemble(fields, cfg);
    let vol = grid.cell_volume();
    let phi_ref: Vec<f64> = fields.porosity.iter().map(|phi| phi * vol).collect();
    let pore_volume = |p: &[f64], out: &mut [f64]| {
        for i in 0..p.len() {
            out[i] = phi_ref[i] * (1.0 + cfg.total_compressibility * (p[i] - cfg.p_init));
        }
    };

    let mut p = vec![cfg.p_init; n];
    let mut f = vec![cfg.f_init; n];
    let mut phi_start = vec![0.0; n];
    let mut phi_end = vec![0.0; n];

    let nt = cfg.n_steps + 1;
    let mut pressure = Array3::zeros((nt, ny, nx));
    let mut co2 = Array3::zeros((nt, ny, nx));
    let mut balance = Vec::with_capacity(cfg.n_steps);

    let store = |arr: &mut Array3<f64>, frame: usize, data: &[f64]| {
        for iy in 0..ny {
            for ix in 0..nx {
                arr[[frame, iy, ix]] = data[iy * nx + ix];
            }
        }
    };
    store(&mut pressure, 0, &p);
    store(&mut co2, 0, &f);

    let mut q = vec![0.0; n];
    for step in 0..cfg.n_steps {
        let rate = cfg.injection.rates[step];
        pore_volume(&p, &mut phi_start);
        q[well] = rate;
        sys.step(&mut p, &q, cfg, step)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { step, what: "pressure" });
        }
        pore_volume(&p, &mut phi_end);
        let (fx, fy) = sys.face_fluxes(&p);
        let t = advect(&sys, &mut f, &phi_start, &phi_end, &fx, &fy, rate, well, cfg, step)?;
        balance.push(t.balance_rel);

        store(&mut pressure, step + 1, &p);
        store(&mut co2, step + 1, &f);
    }

    Ok(StateTrajectory { pressure, co2_fraction: co2, tracer_balance_rel: balance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InjectionSchedule;
    use gcs_core::GridSpec;
    use ndarray::Array2;

    fn uniform_field(nx: usize, ny: usize, perm_md: f64) -> FieldRealization {
        let grid = GridSpec { nx, ny, ..GridSpec::default() };
        FieldRealization {
            grid,
            log_perm: Array2::from_elem((ny, nx), perm_md.ln()),
            porosity: Array2::from_elem((ny, nx), 0.2),
            facies: Array2::from_elem((ny, nx), 0),
            seed: 0,
        }
    }

    fn quick_cfg(n_steps: usize, rate: f64) -> SimConfig {
        SimConfig {
            n_steps,
            injection: InjectionSchedule { rates: vec![rate; n_steps] },
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_injection_is_a_steady_state() {
        let field = uniform_field(16, 16, 100.0);
        let cfg = quick_cfg(10, 0.0);
        let traj = run_forward(&field, &cfg).unwrap();
        for frame in 0..traj.n_frames() {
            for iy in 0..16 {
                for ix in 0..16 {
                    assert_eq!(traj.pressure[[frame, iy, ix]], cfg.p_init);
                    assert_eq!(traj.co2_fraction[[frame, iy, ix]], cfg.f_init);
                }
            }
        }
    }

    #[test]
    fn constant_injection_front_ordering_and_monotone_well() {
        let field = uniform_field(32, 32, 100.0);
        let cfg = quick_cfg(61, 2000.0);
        let traj = run_forward(&field, &cfg).unwrap();
        let (wx, wy) = (16usize, 16usize);
        let radius = |frame: usize, pick: &dyn Fn(usize, usize) -> bool| -> f64 {
            let mut r: f64 = 0.0;
            for iy in 0..32 {
                for ix in 0..32 {
                    if pick(ix, iy) {
                        let d = (((ix as f64 - wx as f64) * field.grid.dx).powi(2)
                            + ((iy as f64 - wy as f64) * field.grid.dy).powi(2))
                        .sqrt();
                        r = r.max(d);
                    }
                }
            }
            let _ = frame;
            r
        };
        let mut prev_well = cfg.p_init;
        for frame in 1..traj.n_frames() {
            let well_p = traj.pressure[[frame, wy, wx]];
            assert!(well_p > prev_well, "well pressure not increasing at frame {frame}");
            prev_well = well_p;
            let rp = radius(frame, &|ix, iy| traj.pressure[[frame, iy, ix]] - cfg.p_init > 0.1);
            let rf = radius(frame, &|ix, iy| traj.co2_fraction[[frame, iy, ix]] > 0.5);
            assert!(rp >= rf, "pressure front {rp} behind gas front {rf} at frame {frame}");
        }
    }

    #[test]
    fn tracer_balance_closes_on_heterogeneous_fields() {
        let prior = gcs_geomodel::ChannelPriorSpec::default();
        let field = gcs_geomodel::sample_realization(&prior, &GridSpec::default(), 14).unwrap();
        let cfg = SimConfig::default();
        let traj = run_forward(&field, &cfg).unwrap();
        let worst = traj.tracer_balance_rel.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1.0e-6, "tracer balance error {worst}");
    }

    #[test]
    fn fractions_stay_in_bounds_on_extreme_contrast() {
        let mut field = uniform_field(16, 16, 1.0);
        // alternating columns of 1 mD and 10000 mD
        for iy in 0..16 {
            for ix in 0..16 {
                if ix % 2 == 0 {
                    field.log_perm[[iy, ix]] = 10_000.0f64.ln();
                }
            }
        }
        let cfg = quick_cfg(20, 3000.0);
        let traj = run_forward(&field, &cfg).unwrap();
        for v in traj.co2_fraction.iter() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn four_fold_symmetry_on_odd_grid() {
        // an odd grid puts the injector at the exact geometric center
        let field = uniform_field(33, 33, 100.0);
        let cfg = quick_cfg(15, 2000.0);
        let traj = run_forward(&field, &cfg).unwrap();
        for frame in [5, 15] {
            for iy in 0..33 {
                for ix in 0..33 {
                    let a = traj.pressure[[frame, iy, ix]];
                    let b = traj.pressure[[frame, 32 - ix, iy]]; // 90 degree rotation
                    assert!((a - b).abs() < 1.0e-8, "asymmetry {} at ({ix},{iy})", (a - b).abs());
                }
            }
        }
    }

    #[test]
    fn doubling_permeability_never_raises_well_pressure() {
        let base = uniform_field(32, 32, 60.0);
        let double = uniform_field(32, 32, 120.0);
        let cfg = quick_cfg(30, 2000.0);
        let t1 = run_forward(&base, &cfg).unwrap();
        let t2 = run_forward(&double, &cfg).unwrap();
        for frame in 1..t1.n_frames() {
            let rise1 = t1.pressure[[frame, 16, 16]] - cfg.p_init;
            let rise2 = t2.pressure[[frame, 16, 16]] - cfg.p_init;
            assert!(rise2 <= rise1 + 1.0e-9, "frame {frame}: {rise2} > {rise1}");
        }
    }

    #[test]
    fn schedule_length_mismatch_is_rejected() {
        let field = uniform_field(16, 16, 100.0);
        let mut cfg = SimConfig::default();
        cfg.n_steps = 10; // schedule still has 61 entries
        assert!(run_forward(&field, &cfg).is_err());
    }
}
