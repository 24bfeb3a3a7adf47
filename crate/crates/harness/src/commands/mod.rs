//! The five pipeline stages behind the CLI. Each command is an ordinary
//! function so integration tests drive the pipeline in-process.

mod assimilate;
mod generate;
mod report;
mod simulate;
mod train;

pub use assimilate::{cmd_assimilate, Method};
pub use generate::cmd_generate;
pub use report::cmd_report;
pub use simulate::cmd_simulate;
pub use train::cmd_train;

use std::path::Path;

use gcs_core::{CoreError, FieldRealization};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Seeds};
use crate::HarnessError;

pub const MANIFEST_VERSION: u32 = 1;

/// Written at generation time; binds every later stage to the exact inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub truth_hash: String,
    pub n_members: usize,
    pub seeds: Seeds,
}

impl Manifest {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Manifest {
            format_version: MANIFEST_VERSION,
            config_hash: cfg.config_hash(),
            truth_hash: cfg.truth_hash(),
            n_members: cfg.ensemble.n_members,
            seeds: cfg.seeds.clone(),
        }
    }

    pub fn write(&self, root: &Path) -> Result<(), HarnessError> {
        let path = root.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))
    }

    pub fn read(root: &Path) -> Result<Self, HarnessError> {
        let path = root.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::validation(format!("no manifest at {} ({e}); run `generate` first", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::runtime(format!("bad manifest {}: {e}", path.display())))
    }

    /// Stages after `generate` must run with the unchanged configuration.
    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
        if self.config_hash != cfg.config_hash() {
            return Err(HarnessError::validation(format!(
                "config hash {} does not match the manifest {} (artifacts were generated from a different config)",
                cfg.config_hash(),
                self.config_hash
            )));
        }
        Ok(())
    }
}

pub(crate) fn ensemble_dir(root: &Path) -> std::path::PathBuf {
    root.join("ensemble")
}

pub(crate) fn truth_dir(root: &Path) -> std::path::PathBuf {
    root.join("truth")
}

pub(crate) fn surrogate_dir(root: &Path) -> std::path::PathBuf {
    root.join("surrogate")
}

pub(crate) fn runs_dir(root: &Path) -> std::path::PathBuf {
    root.join("runs")
}

pub(crate) fn load_members(root: &Path, n: usize) -> Result<Vec<FieldRealization>, HarnessError> {
    let base = ensemble_dir(root);
    let mut members = Vec::with_capacity(n);
    for i in 0..n {
        let (field, _) = gcs_core::gcsf::read_member(&base, i)
            .map_err(|e| HarnessError::runtime(format!("reading member {i}: {e}")))?;
        members.push(field);
    }
    Ok(members)
}

pub(crate) fn core_err(e: CoreError) -> HarnessError {
    HarnessError::runtime(e.to_string())
}
