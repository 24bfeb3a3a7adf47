use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assimilate::{RunRecord, TimingsRecord};
use super::train::TrainRecord;
use crate::HarnessError;

/// Box-plot statistics of the signed per-member misfits at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisfitBox {
    pub point: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub median_abs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub config_hash: String,
    pub n_members: usize,
    pub hf_calls: usize,
    pub surrogate_calls: usize,
    /// hf-call ratio of the plain smoother to this method (when present).
    pub hf_call_reduction_vs_esmda: Option<f64>,
    pub prior_rmse: f64,
    pub posterior_rmse: f64,
    pub posterior_misfit_boxes: Vec<MisfitBox>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmseTableRow {
    pub n_samples: usize,
    pub n_train: usize,
    pub test_rmse_pressure: f64,
    pub test_rmse_fraction: f64,
}

/// The side-by-side comparison emitted by `report`. Wall-clock numbers live
/// in a separate sidecar so this file is byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub truth_hash: String,
    pub prior_misfit_boxes: Vec<MisfitBox>,
    pub methods: Vec<MethodSummary>,
    pub rmse_table: Vec<RmseTableRow>,
}

fn boxes(misfits: &[gcs_da::MemberMisfit]) -> Vec<MisfitBox> {
    let n_points = misfits.iter().map(|m| m.point + 1).max().unwrap_or(0);
    (0..n_points)
        .map(|p| {
            let signed: Vec<f64> = misfits.iter().filter(|m| m.point == p).map(|m| m.mean_error).collect();
            let abs: Vec<f64> = signed.iter().map(|v| v.abs()).collect();
            let b = gcs_core::stats::box_stats(&signed);
            MisfitBox {
                point: p,
                min: b[0],
                q1: b[1],
                median: b[2],
                q3: b[3],
                max: b[4],
                median_abs: gcs_core::stats::median(&abs),
            }
        })
        .collect()
}

/// Merge assimilation runs (and optional training summaries) into the
/// comparison report plus CSVs.
pub fn cmd_report(run_dirs: &[&Path], training_dirs: &[&Path], out: &Path) -> Result<MetricsReport, HarnessError> {
    if run_dirs.is_empty() && training_dirs.is_empty() {
        return Err(HarnessError::validation("report needs at least one run or training directory".into()));
    }

    let mut records = Vec::new();
    for dir in run_dirs {
        let path = dir.join("diagnostics.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::validation(format!("no diagnostics at {} ({e})", path.display())))?;
        let record: RunRecord =
            serde_json::from_str(&text).map_err(|e| HarnessError::runtime(format!("bad {}: {e}", path.display())))?;
        let timings: Option<TimingsRecord> = std::fs::read_to_string(dir.join("timings.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        records.push((record, timings));
    }

    if let Some(((first, _), rest)) = records.split_first() {
        for (r, _) in rest {
            if r.truth_hash != first.truth_hash {
                return Err(HarnessError::validation(format!(
                    "runs observe different truths ({} vs {}); refusing to compare",
                    first.truth_hash, r.truth_hash
                )));
            }
        }
    }

    let esmda_hf_calls =
        records.iter().find(|(r, _)| r.diagnostics.method == "esmda").map(|(r, _)| r.diagnostics.hf_calls);

    let methods: Vec<MethodSummary> = records
        .iter()
        .map(|(r, _)| {
            let d = &r.diagnostics;
            MethodSummary {
                method: d.method.clone(),
                config_hash: r.config_hash.clone(),
                n_members: d.n_members,
                hf_calls: d.hf_calls,
                surrogate_calls: d.surrogate_calls,
                hf_call_reduction_vs_esmda: esmda_hf_calls
                    .filter(|_| d.method != "esmda" && d.hf_calls > 0)
                    .map(|base| base as f64 / d.hf_calls as f64),
                prior_rmse: d.prior_rmse,
                posterior_rmse: d.posterior_rmse,
                posterior_misfit_boxes: boxes(&d.posterior_misfits),
                warnings: d.warnings.clone(),
            }
        })
        .collect();

    let mut rmse_table = Vec::new();
    for dir in training_dirs {
        let path = dir.join("train_report.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::validation(format!("no training report at {} ({e})", path.display())))?;
        let record: TrainRecord =
            serde_json::from_str(&text).map_err(|e| HarnessError::runtime(format!("bad {}: {e}", path.display())))?;
        rmse_table.push(RmseTableRow {
            n_samples: record.n_samples,
            n_train: record.n_train,
            test_rmse_pressure: record.final_test_rmse_pressure,
            test_rmse_fraction: record.final_test_rmse_fraction,
        });
    }
    rmse_table.sort_by_key(|r| r.n_train);

    let report = MetricsReport {
        format_version: 1,
        truth_hash: records.first().map(|(r, _)| r.truth_hash.clone()).unwrap_or_default(),
        prior_misfit_boxes: records.first().map(|(r, _)| boxes(&r.diagnostics.prior_misfits)).unwrap_or_default(),
        methods,
        rmse_table,
    };

    std::fs::create_dir_all(out).map_err(|e| HarnessError::runtime(format!("creating {}: {e}", out.display())))?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(out.join("report.json"), text).map_err(|e| HarnessError::runtime(format!("writing report: {e}")))?;

    let mut misfit_csv = String::from("method,point,min,q1,median,q3,max,median_abs\n");
    for (label, boxes) in std::iter::once(("prior", &report.prior_misfit_boxes))
        .chain(report.methods.iter().map(|m| (m.method.as_str(), &m.posterior_misfit_boxes)))
    {
        for b in boxes {
            let _ = writeln!(
                misfit_csv,
                "{label},{},{},{},{},{},{},{}",
                b.point, b.min, b.q1, b.median, b.q3, b.max, b.median_abs
            );
        }
    }
    std::fs::write(out.join("report_misfits.csv"), misfit_csv)
        .map_err(|e| HarnessError::runtime(format!("writing misfit csv: {e}")))?;

    let mut calls_csv = String::from("method,hf_calls,surrogate_calls,hf_call_reduction_vs_esmda\n");
    for m in &report.methods {
        let _ = writeln!(
            calls_csv,
            "{},{},{},{}",
            m.method,
            m.hf_calls,
            m.surrogate_calls,
            m.hf_call_reduction_vs_esmda.map_or(String::new(), |v| v.to_string())
        );
    }
    std::fs::write(out.join("report_calls.csv"), calls_csv)
        .map_err(|e| HarnessError::runtime(format!("writing calls csv: {e}")))?;

    if !report.rmse_table.is_empty() {
        let mut csv = String::from("n_samples,n_train,test_rmse_pressure,test_rmse_fraction\n");
        for r in &report.rmse_table {
            let _ = writeln!(csv, "{},{},{},{}", r.n_samples, r.n_train, r.test_rmse_pressure, r.test_rmse_fraction);
        }
        std::fs::write(out.join("rmse_table.csv"), csv)
            .map_err(|e| HarnessError::runtime(format!("writing rmse table: {e}")))?;
    }

    // wall-clock comparison is honest but not reproducible; sidecar only
    let mut timing_rows = Vec::new();
    let esmda_wall = records
        .iter()
        .find(|(r, _)| r.diagnostics.method == "esmda")
        .and_then(|(_, t)| t.as_ref().map(|t| t.total_seconds));
    for (r, t) in &records {
        if let Some(t) = t {
            timing_rows.push(serde_json::json!({
                "method": r.diagnostics.method,
                "total_seconds": t.total_seconds,
                "speedup_vs_esmda": esmda_wall.map(|base| base / t.total_seconds),
            }));
        }
    }
    let text = serde_json::to_string_pretty(&serde_json::json!({ "runs": timing_rows })).expect("json");
    std::fs::write(out.join("report_timings.json"), text)
        .map_err(|e| HarnessError::runtime(format!("writing timing sidecar: {e}")))?;

    Ok(report)
}
