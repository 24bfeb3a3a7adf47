use std::path::Path;

use gcs_core::gcsf;
use gcs_sim::{make_synthetic_truth, run_forward, write_observations};

use super::{core_err, ensemble_dir, truth_dir, Manifest};
use crate::config::ExperimentConfig;
use crate::HarnessError;

/// Sample the prior ensemble and the rotated-prior reference model, simulate
/// the reference, and write noisy observations plus the manifest.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    cfg.validate().map_err(|e| HarnessError::validation(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::runtime(format!("creating {}: {e}", out.display())))?;

    let ensemble = gcs_geomodel::generate_ensemble(&cfg.prior, &cfg.grid, cfg.ensemble.n_members, cfg.seeds.prior)
        .map_err(|e| HarnessError::runtime(e.to_string()))?;
    gcsf::write_ensemble(&ensemble_dir(out), &ensemble).map_err(core_err)?;

    // the reference lives outside the sampling prior: rotated channel axis
    let truth_prior = cfg.prior.rotated(cfg.ensemble.truth_rotation_deg);
    let reference = gcs_geomodel::sample_realization(&truth_prior, &cfg.grid, cfg.seeds.truth)
        .map_err(|e| HarnessError::runtime(e.to_string()))?;
    let tdir = truth_dir(out);
    gcsf::write_member(&tdir, 0, &reference, &[]).map_err(core_err)?;

    let obs = make_synthetic_truth(&reference, &cfg.sim, cfg.noise_std_bar, cfg.seeds.truth_noise)
        .map_err(|e| HarnessError::runtime(e.to_string()))?;
    write_observations(&tdir, &obs).map_err(core_err)?;

    // reference trajectory, for plots and surrogate sanity checks
    let traj = run_forward(&reference, &cfg.sim).map_err(|e| HarnessError::runtime(e.to_string()))?;
    super::simulate::write_trajectory(&tdir.join("traj.gcsf"), &traj).map_err(core_err)?;

    Manifest::of(cfg).write(out)?;
    let resolved = out.join("config.resolved.ini");
    std::fs::write(&resolved, cfg.canonical())
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", resolved.display())))?;
    Ok(())
}
