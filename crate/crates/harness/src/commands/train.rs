use std::fmt::Write as _;
use std::path::Path;

use gcs_core::gcsf::{member_dir, GcsfRaster};
use gcs_surrogate::checkpoint::write_checkpoint;
use gcs_surrogate::{encode_input, train as train_fno, Dataset};
use serde::{Deserialize, Serialize};

use super::{ensemble_dir, load_members, surrogate_dir, Manifest};
use crate::config::ExperimentConfig;
use crate::HarnessError;

/// Summary of one training run, consumed by `report` for the accuracy-vs-
/// training-size table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub config_hash: String,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub final_test_rmse_pressure: f64,
    pub final_test_rmse_fraction: f64,
    pub epochs: usize,
}

fn trajectory_target(path: &Path) -> Result<ndarray::Array2<f64>, HarnessError> {
    let raster = GcsfRaster::read(path).map_err(|e| HarnessError::runtime(e.to_string()))?;
    let (nx, ny, nt) = (raster.nx as usize, raster.ny as usize, raster.n_timesteps as usize);
    let mut out = ndarray::Array2::zeros((2, nx * ny * nt));
    for iy in 0..ny {
        for ix in 0..nx {
            for t in 0..nt {
                let c = gcs_surrogate::encode::cell_index(nx, nt, ix, iy, t);
                out[[0, c]] = raster.get(0, t, iy, ix) as f64;
                out[[1, c]] = raster.get(1, t, iy, ix) as f64;
            }
        }
    }
    Ok(out)
}

/// Build the dataset from simulated members and fit the surrogate; writes
/// the checkpoint, the loss history and a summary record.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainRecord, HarnessError> {
    let manifest = Manifest::read(out)?;
    manifest.check_config(cfg)?;
    let members = load_members(out, manifest.n_members)?;
    let base = ensemble_dir(out);

    let nt = cfg.sim.n_steps + 1;
    let mut dataset = Dataset::new((cfg.grid.nx, cfg.grid.ny, nt));
    for (i, member) in members.iter().enumerate() {
        let traj_path = member_dir(&base, i).join("traj.gcsf");
        if !traj_path.is_file() {
            return Err(HarnessError::validation(format!(
                "member {i} has no trajectory ({}); run `simulate` first",
                traj_path.display()
            )));
        }
        let input = encode_input(member, &cfg.sim.injection, cfg.sim.n_steps)
            .map_err(|e| HarnessError::runtime(e.to_string()))?;
        let target = trajectory_target(&traj_path)?;
        dataset.push(input, target).map_err(|e| HarnessError::runtime(e.to_string()))?;
    }

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seeds.train;
    let (model, report) = train_fno(&dataset, cfg.surrogate, &train_cfg).map_err(|e| match e {
        gcs_surrogate::SurrogateError::DatasetTooSmall { n, min } => {
            HarnessError::validation(format!("{n} samples is below the minimum of {min}"))
        }
        other => HarnessError::runtime(other.to_string()),
    })?;

    let sdir = surrogate_dir(out);
    std::fs::create_dir_all(&sdir).map_err(|e| HarnessError::runtime(format!("creating {}: {e}", sdir.display())))?;
    write_checkpoint(&sdir.join("fno.gcsw"), &model).map_err(|e| HarnessError::runtime(e.to_string()))?;

    let mut csv = String::from("epoch,train_loss,test_rmse_p,test_rmse_f\n");
    for e in &report.history {
        let _ = writeln!(csv, "{},{},{},{}", e.epoch, e.train_loss, e.test_rmse_pressure, e.test_rmse_fraction);
    }
    std::fs::write(sdir.join("loss_history.csv"), csv)
        .map_err(|e| HarnessError::runtime(format!("writing loss history: {e}")))?;

    let last = report.history.last();
    let record = TrainRecord {
        config_hash: cfg.config_hash(),
        n_samples: dataset.len(),
        n_train: report.train_indices.len(),
        n_test: report.test_indices.len(),
        final_test_rmse_pressure: last.map_or(f64::NAN, |e| e.test_rmse_pressure),
        final_test_rmse_fraction: last.map_or(f64::NAN, |e| e.test_rmse_fraction),
        epochs: report.history.len(),
    };
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    std::fs::write(sdir.join("train_report.json"), text)
        .map_err(|e| HarnessError::runtime(format!("writing train report: {e}")))?;
    Ok(record)
}
