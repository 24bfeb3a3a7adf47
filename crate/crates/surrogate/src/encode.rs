//! Input encoding and dataset normalization.
//!
//! A sample is a 6-channel tensor over (nx, ny, nt): log-permeability and
//! porosity copied along time, the injection rate copied over space, and the
//! x, y, t coordinates normalized to [0, 1]. Targets are the 2-channel state
//! trajectory (pressure, gas fraction). Channels are z-scored with statistics
//! from the training split only.

use gcs_core::FieldRealization;
use gcs_sim::{InjectionSchedule, StateTrajectory};
use ndarray::Array2;

use crate::SurrogateError;

pub const IN_CHANNELS: usize = 6;
pub const OUT_CHANNELS: usize = 2;

#[inline]
pub fn cell_index(nx: usize, nt: usize, ix: usize, iy: usize, it: usize) -> usize {
    (iy * nx + ix) * nt + it
}

/// Raw (un-normalized) input tensor, (6, nx*ny*nt) with nt = n_steps + 1.
/// Channel order: log_perm, porosity, rate, x, y, t. Frame j carries the
/// rate that produced it (frame 0 repeats the first rate).
pub fn encode_input(
    field: &FieldRealization,
    schedule: &InjectionSchedule,
    n_steps: usize,
) -> Result<Array2<f64>, SurrogateError> {
    if schedule.len() != n_steps {
        return Err(SurrogateError::Shape(format!(
            "schedule length {} does not cover {} steps",
            schedule.len(),
            n_steps
        )));
    }
    let (nx, ny) = (field.grid.nx, field.grid.ny);
    let nt = n_steps + 1;
    let n_cells = nx * ny * nt;
    let mut out = Array2::zeros((IN_CHANNELS, n_cells));
    let frame_rate: Vec<f64> = (0..nt).map(|j| schedule.rates[j.saturating_sub(1)]).collect();
    for iy in 0..ny {
        for ix in 0..nx {
            let log_k = field.log_perm[[iy, ix]];
            let phi = field.porosity[[iy, ix]];
            let x = ix as f64 / (nx - 1) as f64;
            let y = iy as f64 / (ny - 1) as f64;
            for it in 0..nt {
                let c = cell_index(nx, nt, ix, iy, it);
                out[[0, c]] = log_k;
                out[[1, c]] = phi;
                out[[2, c]] = frame_rate[it];
                out[[3, c]] = x;
                out[[4, c]] = y;
                out[[5, c]] = it as f64 / (nt - 1) as f64;
            }
        }
    }
    Ok(out)
}

/// Raw target tensor (2, nx*ny*nt) from a simulated trajectory.
pub fn target_from_trajectory(traj: &StateTrajectory) -> Array2<f64> {
    let (nt, ny, nx) = traj.pressure.dim();
    let mut out = Array2::zeros((OUT_CHANNELS, nx * ny * nt));
    for iy in 0..ny {
        for ix in 0..nx {
            for it in 0..nt {
                let c = cell_index(nx, nt, ix, iy, it);
                out[[0, c]] = traj.pressure[[it, iy, ix]];
                out[[1, c]] = traj.co2_fraction[[it, iy, ix]];
            }
        }
    }
    out
}

/// Per-channel z-score statistics for inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn channel_stats(samples: &[&Array2<f64>], n_channels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; n_channels];
    let mut count = 0usize;
    for s in samples {
        for ch in 0..n_channels {
            mean[ch] += s.row(ch).sum();
        }
        count += s.ncols();
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let mut var = vec![0.0; n_channels];
    for s in samples {
        for ch in 0..n_channels {
            var[ch] += s.row(ch).iter().map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>();
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / count as f64).sqrt();
            // constant channels (e.g. a shared schedule) pass through unscaled
            if s > 1.0e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl Normalization {
    /// Fit on the training split.
    pub fn fit(inputs: &[&Array2<f64>], targets: &[&Array2<f64>]) -> Self {
        let (input_mean, input_std) = channel_stats(inputs, IN_CHANNELS);
        let (target_mean, target_std) = channel_stats(targets, OUT_CHANNELS);
        Normalization { input_mean, input_std, target_mean, target_std }
    }

    pub fn normalize_input(&self, raw: &Array2<f64>) -> Array2<f64> {
        let mut out = raw.clone();
        for (ch, mut row) in out.axis_iter_mut(ndarray::Axis(0)).enumerate() {
            let (m, s) = (self.input_mean[ch], self.input_std[ch]);
            row.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn normalize_target(&self, raw: &Array2<f64>) -> Array2<f64> {
        let mut out = raw.clone();
        for (ch, mut row) in out.axis_iter_mut(ndarray::Axis(0)).enumerate() {
            let (m, s) = (self.target_mean[ch], self.target_std[ch]);
            row.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn denormalize_target(&self, normed: &Array2<f64>) -> Array2<f64> {
        let mut out = normed.clone();
        for (ch, mut row) in out.axis_iter_mut(ndarray::Axis(0)).enumerate() {
            let (m, s) = (self.target_mean[ch], self.target_std[ch]);
            row.mapv_inplace(|v| v * s + m);
        }
        out
    }
}

/// Raw sample store; normalization is fitted by `train` on its split.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub inputs: Vec<Array2<f64>>,
    pub targets: Vec<Array2<f64>>,
    /// (nx, ny, nt) of every sample.
    pub dims: (usize, usize, usize),
}

impl Dataset {
    pub fn new(dims: (usize, usize, usize)) -> Self {
        Dataset { inputs: Vec::new(), targets: Vec::new(), dims }
    }

    pub fn push(&mut self, input: Array2<f64>, target: Array2<f64>) -> Result<(), SurrogateError> {
        let n_cells = self.dims.0 * self.dims.1 * self.dims.2;
        if input.dim() != (IN_CHANNELS, n_cells) || target.dim() != (OUT_CHANNELS, n_cells) {
            return Err(SurrogateError::Shape(format!(
                "sample shapes {:?}/{:?} do not match {} cells",
                input.dim(),
                target.dim(),
                n_cells
            )));
        }
        self.inputs.push(input);
        self.targets.push(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcs_core::GridSpec;
    use ndarray::Array2 as A2;

    fn field() -> FieldRealization {
        let grid = GridSpec { nx: 8, ny: 8, ..GridSpec::default() };
        FieldRealization {
            grid,
            log_perm: A2::from_shape_fn((8, 8), |(iy, ix)| (ix + 8 * iy) as f64 * 0.01 + 2.0),
            porosity: A2::from_elem((8, 8), 0.2),
            facies: A2::from_elem((8, 8), 0),
            seed: 0,
        }
    }

    #[test]
    fn constant_rate_broadcasts_everywhere() {
        let f = field();
        let sched = InjectionSchedule::constant(123.0, 5).unwrap();
        let enc = encode_input(&f, &sched, 5).unwrap();
        assert!(enc.row(2).iter().all(|&v| v == 123.0));
    }

    #[test]
    fn time_channel_is_normalized_frame_index() {
        let f = field();
        let sched = InjectionSchedule::constant(1.0, 4).unwrap();
        let enc = encode_input(&f, &sched, 4).unwrap();
        let nt = 5;
        for it in 0..nt {
            let c = cell_index(8, nt, 3, 2, it);
            assert!((enc[[5, c]] - it as f64 / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_zero_frame_zero_recovers_log_perm() {
        let f = field();
        let sched = InjectionSchedule::constant(1.0, 3).unwrap();
        let enc = encode_input(&f, &sched, 3).unwrap();
        for iy in 0..8 {
            for ix in 0..8 {
                let c = cell_index(8, 4, ix, iy, 0);
                assert_eq!(enc[[0, c]], f.log_perm[[iy, ix]]);
            }
        }
    }

    #[test]
    fn schedule_length_mismatch_errors() {
        let f = field();
        let sched = InjectionSchedule::constant(1.0, 3).unwrap();
        assert!(encode_input(&f, &sched, 5).is_err());
    }

    #[test]
    fn normalization_round_trips() {
        let a = A2::from_shape_fn((OUT_CHANNELS, 50), |(c, i)| (c as f64 + 1.0) * (i as f64) - 3.0);
        let b = A2::from_shape_fn((OUT_CHANNELS, 50), |(c, i)| (c as f64 + 0.5) * (i as f64).sin());
        let inputs: Vec<A2<f64>> = vec![A2::zeros((IN_CHANNELS, 50))];
        let norm = Normalization::fit(&inputs.iter().collect::<Vec<_>>(), &[&a, &b]);
        for x in [&a, &b] {
            let back = norm.denormalize_target(&norm.normalize_target(x));
            for (u, v) in x.iter().zip(back.iter()) {
                assert!((u - v).abs() <= 1e-6 * u.abs().max(1.0));
            }
        }
        // constant channels get unit std
        assert_eq!(norm.input_std[0], 1.0);
    }
}
