use std::path::Path;

use gcs_core::gcsf::{member_dir, GcsfRaster};
use gcs_core::{par, CoreError};
use gcs_sim::{run_forward, StateTrajectory};

use super::{ensemble_dir, load_members, Manifest};
use crate::config::ExperimentConfig;
use crate::HarnessError;

/// Trajectories serialize as 2 channels (pressure, gas fraction) over
/// n_steps + 1 frames.
pub fn write_trajectory(path: &Path, traj: &StateTrajectory) -> Result<(), CoreError> {
    let (nt, ny, nx) = traj.pressure.dim();
    let mut raster = GcsfRaster::new(nx as u32, ny as u32, 2, nt as u32);
    for t in 0..nt {
        for iy in 0..ny {
            for ix in 0..nx {
                raster.set(0, t, iy, ix, traj.pressure[[t, iy, ix]] as f32);
                raster.set(1, t, iy, ix, traj.co2_fraction[[t, iy, ix]] as f32);
            }
        }
    }
    raster.write(path)
}

fn valid_trajectory(path: &Path, nx: usize, ny: usize, nt: usize) -> bool {
    match GcsfRaster::read(path) {
        Ok(r) => r.nx as usize == nx && r.ny as usize == ny && r.n_channels == 2 && r.n_timesteps as usize == nt,
        Err(_) => false,
    }
}

/// Simulate every member that does not already have a valid trajectory file.
/// Per-member failures are reported and the command fails after completing
/// the rest.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<usize, HarnessError> {
    let manifest = Manifest::read(out)?;
    manifest.check_config(cfg)?;
    let members = load_members(out, manifest.n_members)?;
    let base = ensemble_dir(out);
    let nt = cfg.sim.n_steps + 1;

    let results = par::map_indexed(members.len(), |i| -> Result<bool, String> {
        let path = member_dir(&base, i).join("traj.gcsf");
        if valid_trajectory(&path, cfg.grid.nx, cfg.grid.ny, nt) {
            return Ok(false);
        }
        let traj = run_forward(&members[i], &cfg.sim).map_err(|e| format!("member {i}: {e}"))?;
        write_trajectory(&path, &traj).map_err(|e| format!("member {i}: {e}"))?;
        Ok(true)
    });

    let mut simulated = 0usize;
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(true) => simulated += 1,
            Ok(false) => {}
            Err(msg) => failures.push(msg),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("simulate: {f}");
        }
        return Err(HarnessError::runtime(format!("{} member simulations failed", failures.len())));
    }
    Ok(simulated)
}
