//! Monitoring-point extraction and synthetic truth generation.

use std::path::Path;

use gcs_core::{seed, CoreError, FieldRealization, GridSpec};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{SimConfig, SimError};
use crate::forward::{run_forward, StateTrajectory};
use crate::pressure::well_index;

/// Noisy pressure series at the monitoring points, plus the noise model.
/// `values` is (n_times, n_points); flattening is time-major.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub monitor_cells: Vec<(usize, usize)>,
    pub times: Vec<usize>,
    pub values: Array2<f64>,
    pub noise_std: f64,
    pub truth_seed: u64,
}

impl ObservationSet {
    pub fn n_obs(&self) -> usize {
        self.values.len()
    }

    /// Row-major (time outer, point inner) observation vector.
    pub fn flat_values(&self) -> Vec<f64> {
        self.values.iter().cloned().collect()
    }

    pub fn validate(&self, grid: &GridSpec, well: (usize, usize)) -> Result<(), CoreError> {
        for (i, &(ix, iy)) in self.monitor_cells.iter().enumerate() {
            if !grid.contains(ix, iy) {
                return Err(CoreError::invalid("observations", format!("monitor point {i} off grid")));
            }
            if (ix, iy) == well {
                return Err(CoreError::invalid("observations", "monitor point coincides with the well"));
            }
            for &(jx, jy) in &self.monitor_cells[i + 1..] {
                if (jx, jy) == (ix, iy) {
                    return Err(CoreError::invalid("observations", "duplicate monitor point"));
                }
            }
        }
        if !(self.noise_std > 0.0) {
            return Err(CoreError::invalid("observations", "noise_std must be positive"));
        }
        Ok(())
    }
}

/// Four monitoring points at the quarter-diagonal positions around the
/// injector.
pub fn default_monitor_cells(grid: &GridSpec) -> Vec<(usize, usize)> {
    let (qx, qy) = (grid.nx / 4, grid.ny / 4);
    vec![
        (qx, qy),
        (3 * grid.nx / 4, qy),
        (qx, 3 * grid.ny / 4),
        (3 * grid.nx / 4, 3 * grid.ny / 4),
    ]
}

/// All assimilated step indices: every step after the initial state.
pub fn default_obs_times(n_steps: usize) -> Vec<usize> {
    (1..=n_steps).collect()
}

/// Exact cell samples of the pressure field, (n_times, n_points).
pub fn observe(
    traj: &StateTrajectory,
    monitor_cells: &[(usize, usize)],
    times: &[usize],
) -> Result<Array2<f64>, SimError> {
    let (nt, ny, nx) = traj.pressure.dim();
    let mut out = Array2::zeros((times.len(), monitor_cells.len()));
    for (ti, &t) in times.iter().enumerate() {
        if t >= nt {
            return Err(SimError::OutOfBounds { why: format!("time index {t} >= {nt}") });
        }
        for (pi, &(ix, iy)) in monitor_cells.iter().enumerate() {
            if ix >= nx || iy >= ny {
                return Err(SimError::OutOfBounds { why: format!("monitor point ({ix}, {iy}) outside {nx}x{ny}") });
            }
            out[[ti, pi]] = traj.pressure[[t, iy, ix]];
        }
    }
    Ok(out)
}

/// Simulate a reference model and perturb its monitoring pressures with iid
/// Gaussian noise. Deterministic in (reference, cfg, noise_std, seed).
pub fn make_synthetic_truth(
    reference: &FieldRealization,
    cfg: &SimConfig,
    noise_std: f64,
    seed_value: u64,
) -> Result<ObservationSet, SimError> {
    if !(noise_std > 0.0) {
        return Err(SimError::Core(CoreError::invalid("truth", "noise_std must be positive")));
    }
    let monitor_cells = default_monitor_cells(&reference.grid);
    let times = default_obs_times(cfg.n_steps);
    let obs_set = ObservationSet {
        monitor_cells: monitor_cells.clone(),
        times: times.clone(),
        values: Array2::zeros((0, 0)),
        noise_std,
        truth_seed: seed_value,
    };
    let well = cfg.well_cell.unwrap_or_else(|| reference.grid.center_cell());
    obs_set.validate(&reference.grid, well)?;
    let _ = well_index(&reference.grid, cfg)?;

    let traj = run_forward(reference, cfg)?;
    let mut values = observe(&traj, &monitor_cells, &times)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, "truth-noise", 0));
    for v in values.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += noise_std * z;
    }
    Ok(ObservationSet { monitor_cells, times, values, noise_std, truth_seed: seed_value })
}

#[derive(Debug, Serialize, Deserialize)]
struct ObsSidecar {
    monitor_cells: Vec<(usize, usize)>,
    times: Vec<usize>,
    noise_std: f64,
    truth_seed: u64,
}

/// Write `obs.csv` (header `step,point,value_bar`) plus a JSON sidecar with
/// the noise model.
pub fn write_observations(dir: &Path, obs: &ObservationSet) -> Result<(), CoreError> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let csv_path = dir.join("obs.csv");
    let mut text = String::from("step,point,value_bar\n");
    for (ti, &t) in obs.times.iter().enumerate() {
        for pi in 0..obs.monitor_cells.len() {
            text.push_str(&format!("{t},{pi},{}\n", obs.values[[ti, pi]]));
        }
    }
    std::fs::write(&csv_path, text).map_err(|e| CoreError::io(&csv_path, e))?;

    let sidecar = ObsSidecar {
        monitor_cells: obs.monitor_cells.clone(),
        times: obs.times.clone(),
        noise_std: obs.noise_std,
        truth_seed: obs.truth_seed,
    };
    let json_path = dir.join("obs.json");
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CoreError::Json { path: json_path.clone(), why: e.to_string() })?;
    std::fs::write(&json_path, text).map_err(|e| CoreError::io(&json_path, e))
}

pub fn read_observations(dir: &Path) -> Result<ObservationSet, CoreError> {
    let json_path = dir.join("obs.json");
    let text = std::fs::read_to_string(&json_path).map_err(|e| CoreError::io(&json_path, e))?;
    let sidecar: ObsSidecar =
        serde_json::from_str(&text).map_err(|e| CoreError::Json { path: json_path.clone(), why: e.to_string() })?;

    let csv_path = dir.join("obs.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(|e| CoreError::io(&csv_path, e))?;
    let mut values = Array2::zeros((sidecar.times.len(), sidecar.monitor_cells.len()));
    let mut seen = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "step,point,value_bar" {
                return Err(CoreError::format(&csv_path, "unexpected csv header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CoreError::format(&csv_path, format!("line {}: expected 3 fields", lineno + 1)));
        }
        let step: usize = fields[0].parse().map_err(|_| CoreError::format(&csv_path, format!("line {}: bad step", lineno + 1)))?;
        let point: usize = fields[1].parse().map_err(|_| CoreError::format(&csv_path, format!("line {}: bad point", lineno + 1)))?;
        let value: f64 = fields[2].parse().map_err(|_| CoreError::format(&csv_path, format!("line {}: bad value", lineno + 1)))?;
        let ti = sidecar
            .times
            .iter()
            .position(|&t| t == step)
            .ok_or_else(|| CoreError::format(&csv_path, format!("line {}: step {step} not in sidecar", lineno + 1)))?;
        if point >= sidecar.monitor_cells.len() {
            return Err(CoreError::format(&csv_path, format!("line {}: point {point} out of range", lineno + 1)));
        }
        values[[ti, point]] = value;
        seen += 1;
    }
    if seen != values.len() {
        return Err(CoreError::format(&csv_path, format!("expected {} rows, found {seen}", values.len())));
    }
    Ok(ObservationSet {
        monitor_cells: sidecar.monitor_cells,
        times: sidecar.times,
        values,
        noise_std: sidecar.noise_std,
        truth_seed: sidecar.truth_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InjectionSchedule;
    use ndarray::Array2 as A2;

    fn small_field() -> FieldRealization {
        let grid = GridSpec { nx: 16, ny: 16, ..GridSpec::default() };
        FieldRealization {
            grid,
            log_perm: A2::from_elem((16, 16), 100.0f64.ln()),
            porosity: A2::from_elem((16, 16), 0.2),
            facies: A2::from_elem((16, 16), 0),
            seed: 0,
        }
    }

    fn small_cfg() -> SimConfig {
        SimConfig {
            n_steps: 12,
            injection: InjectionSchedule::constant(1500.0, 12).unwrap(),
            ..SimConfig::default()
        }
    }

    #[test]
    fn time_zero_row_is_initial_pressure() {
        let traj = run_forward(&small_field(), &small_cfg()).unwrap();
        let cells = default_monitor_cells(&small_field().grid);
        let row = observe(&traj, &cells, &[0]).unwrap();
        assert_eq!(row.dim(), (1, 4));
        for v in row.iter() {
            assert_eq!(*v, 200.0);
        }
    }

    #[test]
    fn full_observation_matrix_shape_and_determinism() {
        let field = small_field();
        let cfg = small_cfg();
        let traj = run_forward(&field, &cfg).unwrap();
        let cells = default_monitor_cells(&field.grid);
        let times = default_obs_times(cfg.n_steps);
        let a = observe(&traj, &cells, &times).unwrap();
        let b = observe(&run_forward(&field, &cfg).unwrap(), &cells, &times).unwrap();
        assert_eq!(a.dim(), (12, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_bounds_indices_error() {
        let traj = run_forward(&small_field(), &small_cfg()).unwrap();
        assert!(observe(&traj, &[(99, 0)], &[1]).is_err());
        assert!(observe(&traj, &[(1, 1)], &[999]).is_err());
    }

    #[test]
    fn vanishing_noise_matches_noiseless_observation() {
        let field = small_field();
        let cfg = small_cfg();
        let obs = make_synthetic_truth(&field, &cfg, 1.0e-12, 5).unwrap();
        let clean = observe(&run_forward(&field, &cfg).unwrap(), &obs.monitor_cells, &obs.times).unwrap();
        for (a, b) in obs.values.iter().zip(clean.iter()) {
            assert!((a - b).abs() < 1.0e-9);
        }
    }

    #[test]
    fn truth_is_seed_deterministic() {
        let field = small_field();
        let cfg = small_cfg();
        let a = make_synthetic_truth(&field, &cfg, 1.0, 42).unwrap();
        let b = make_synthetic_truth(&field, &cfg, 1.0, 42).unwrap();
        assert_eq!(a.values, b.values);
        let c = make_synthetic_truth(&field, &cfg, 1.0, 43).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn empirical_noise_matches_noise_std() {
        // long horizon for a usable sample count: 4 points x 80 steps
        let field = small_field();
        let cfg = SimConfig {
            n_steps: 80,
            injection: InjectionSchedule::constant(1500.0, 80).unwrap(),
            ..SimConfig::default()
        };
        let noise_std = 2.0;
        let obs = make_synthetic_truth(&field, &cfg, noise_std, 7).unwrap();
        let clean = observe(&run_forward(&field, &cfg).unwrap(), &obs.monitor_cells, &obs.times).unwrap();
        let resid: Vec<f64> = obs.values.iter().zip(clean.iter()).map(|(a, b)| a - b).collect();
        let sd = gcs_core::stats::std_dev(&resid);
        assert!((sd - noise_std).abs() <= 0.1 * noise_std, "std {sd} vs {noise_std}");
    }

    #[test]
    fn observation_files_round_trip() {
        let field = small_field();
        let obs = make_synthetic_truth(&field, &small_cfg(), 1.0, 3).unwrap();
        let dir = std::env::temp_dir().join(format!("obs_rt_{}", std::process::id()));
        write_observations(&dir, &obs).unwrap();
        let back = read_observations(&dir).unwrap();
        assert_eq!(obs.values, back.values);
        assert_eq!(obs.monitor_cells, back.monitor_cells);
        assert_eq!(obs.times, back.times);
        assert_eq!(obs.noise_std, back.noise_std);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn monitor_cells_avoid_the_well() {
        let grid = GridSpec::default();
        let cells = default_monitor_cells(&grid);
        assert_eq!(cells.len(), 4);
        for c in &cells {
            assert_ne!(*c, grid.center_cell());
        }
    }
}
