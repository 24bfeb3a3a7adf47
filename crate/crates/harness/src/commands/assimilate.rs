use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gcs_core::gcsf;
use gcs_da::{
    run_esmda, run_rml, run_sh_esmda, run_sh_rml, rml::fit_correlation_length, rml::DataCovChoice, DaDiagnostics,
    EsmdaConfig, MemberMisfit, RmlConfig,
};
use gcs_sim::read_observations;
use gcs_surrogate::checkpoint::read_checkpoint;
use serde::{Deserialize, Serialize};

use super::{load_members, runs_dir, surrogate_dir, truth_dir, Manifest};
use crate::adapters::{FnoForward, SimForward};
use crate::config::ExperimentConfig;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Esmda,
    Rml,
    ShEsmda,
    ShRml,
}

impl Method {
    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "esmda" => Ok(Method::Esmda),
            "rml" => Ok(Method::Rml),
            "sh-esmda" => Ok(Method::ShEsmda),
            "sh-rml" => Ok(Method::ShRml),
            other => Err(HarnessError::validation(format!(
                "unknown method `{other}`; expected esmda, rml, sh-esmda or sh-rml"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Esmda => "esmda",
            Method::Rml => "rml",
            Method::ShEsmda => "sh-esmda",
            Method::ShRml => "sh-rml",
        }
    }

    fn needs_checkpoint(&self) -> bool {
        !matches!(self, Method::Esmda)
    }
}

/// diagnostics.json payload: assimilation diagnostics bound to the hashes of
/// the inputs that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub truth_hash: String,
    pub diagnostics: DaDiagnostics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TimingsRecord {
    pub total_seconds: f64,
    pub phases: Vec<(String, f64)>,
}

fn misfits_csv(prior: &[MemberMisfit], posterior: &[MemberMisfit]) -> String {
    let mut out = String::from("phase,member,point,mean_error,mean_abs_error\n");
    for (phase, rows) in [("prior", prior), ("posterior", posterior)] {
        for m in rows {
            let _ = writeln!(out, "{phase},{},{},{},{}", m.member, m.point, m.mean_error, m.mean_abs_error);
        }
    }
    out
}

/// Run one assimilation method against the generated scenario and write the
/// posterior ensemble plus diagnostics under `runs/<method>/`.
pub fn cmd_assimilate(
    method: Method,
    cfg: &ExperimentConfig,
    out: &Path,
    checkpoint: Option<&Path>,
) -> Result<PathBuf, HarnessError> {
    let manifest = Manifest::read(out)?;
    manifest.check_config(cfg)?;
    let members = load_members(out, manifest.n_members)?;
    let obs = read_observations(&truth_dir(out)).map_err(|e| HarnessError::runtime(e.to_string()))?;

    let prior_params: Vec<Vec<f64>> = members.iter().map(|m| m.log_perm.iter().cloned().collect()).collect();

    let hf = SimForward {
        members: members.clone(),
        sim: cfg.sim.clone(),
        monitor_cells: obs.monitor_cells.clone(),
        times: obs.times.clone(),
    };

    let surrogate = if method.needs_checkpoint() {
        let path = checkpoint.map(PathBuf::from).unwrap_or_else(|| surrogate_dir(out).join("fno.gcsw"));
        if !path.is_file() {
            return Err(HarnessError::validation(format!(
                "{} requires a trained surrogate checkpoint; expected {} (run `train` or pass --checkpoint)",
                method.name(),
                path.display()
            )));
        }
        let model = read_checkpoint(&path).map_err(|e| HarnessError::runtime(e.to_string()))?;
        if model.dims != (cfg.grid.nx, cfg.grid.ny, cfg.sim.n_steps + 1) {
            return Err(HarnessError::validation(format!(
                "checkpoint grid {:?} does not match the scenario ({}, {}, {})",
                model.dims,
                cfg.grid.nx,
                cfg.grid.ny,
                cfg.sim.n_steps + 1
            )));
        }
        Some(FnoForward {
            model,
            members: members.clone(),
            schedule: cfg.sim.injection.clone(),
            monitor_cells: obs.monitor_cells.clone(),
            times: obs.times.clone(),
        })
    } else {
        None
    };

    let esmda_cfg = || -> Result<EsmdaConfig, HarnessError> {
        let mut c = EsmdaConfig::with_alpha(cfg.alpha_schedule(), obs.noise_std, cfg.seeds.esmda)
            .map_err(|e| HarnessError::validation(e.to_string()))?;
        c.svd_energy_cutoff = cfg.esmda.svd_energy_cutoff;
        Ok(c)
    };
    let rml_cfg = || -> RmlConfig {
        let correlation_length = if cfg.rml.fit_correlation_length {
            let rasters: Vec<ndarray::Array2<f64>> = members.iter().map(|m| m.log_perm.clone()).collect();
            fit_correlation_length(&rasters, 10)
        } else {
            cfg.rml.correlation_length
        };
        RmlConfig {
            n_opt_steps: cfg.rml.n_opt_steps,
            lr: cfg.rml.lr,
            correlation_length,
            variance: cfg.rml.variance,
            nugget: cfg.rml.nugget,
            data_cov: if cfg.rml.data_cov_ensemble { DataCovChoice::EnsembleDd } else { DataCovChoice::Measurement },
            seed: cfg.seeds.rml,
            ..RmlConfig::default()
        }
    };

    let started = Instant::now();
    let (posterior, diagnostics) = match method {
        Method::Esmda => run_esmda(&hf, &prior_params, &obs, &esmda_cfg()?),
        Method::ShEsmda => run_sh_esmda(&hf, surrogate.as_ref().expect("checked"), &prior_params, &obs, &esmda_cfg()?),
        Method::Rml => run_rml(&prior_params, &obs, surrogate.as_ref().expect("checked"), &rml_cfg()),
        Method::ShRml => run_sh_rml(&prior_params, &obs, surrogate.as_ref().expect("checked"), &hf, &rml_cfg()),
    }
    .map_err(|e| match e {
        gcs_da::DaError::Config(msg) => HarnessError::validation(msg),
        gcs_da::DaError::GradientUnavailable => HarnessError::validation(e.to_string()),
        other => HarnessError::runtime(other.to_string()),
    })?;
    let wall = started.elapsed().as_secs_f64();

    let run_dir = runs_dir(out).join(method.name());
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| HarnessError::runtime(format!("creating {}: {e}", run_dir.display())))?;

    let (ny, nx) = (cfg.grid.ny, cfg.grid.nx);
    for (i, params) in posterior.iter().enumerate() {
        let mut field = members[i].clone();
        field.log_perm = ndarray::Array2::from_shape_vec((ny, nx), params.clone()).expect("raster length");
        let history = vec![format!(
            "{}: n_assimilations={} seed={}",
            method.name(),
            cfg.esmda.n_assimilations,
            if matches!(method, Method::Rml | Method::ShRml) { cfg.seeds.rml } else { cfg.seeds.esmda }
        )];
        gcsf::write_member(&run_dir, i, &field, &history).map_err(|e| HarnessError::runtime(e.to_string()))?;
    }

    let record = RunRecord {
        config_hash: cfg.config_hash(),
        truth_hash: cfg.truth_hash(),
        diagnostics: diagnostics.clone(),
    };
    let text = serde_json::to_string_pretty(&record).expect("diagnostics serialize");
    std::fs::write(run_dir.join("diagnostics.json"), text)
        .map_err(|e| HarnessError::runtime(format!("writing diagnostics: {e}")))?;

    std::fs::write(
        run_dir.join("misfits.csv"),
        misfits_csv(&diagnostics.prior_misfits, &diagnostics.posterior_misfits),
    )
    .map_err(|e| HarnessError::runtime(format!("writing misfits: {e}")))?;

    let timings = TimingsRecord { total_seconds: wall, phases: diagnostics.timings.phases.clone() };
    let text = serde_json::to_string_pretty(&timings).expect("timings serialize");
    std::fs::write(run_dir.join("timings.json"), text)
        .map_err(|e| HarnessError::runtime(format!("writing timings: {e}")))?;

    Ok(run_dir)
}
