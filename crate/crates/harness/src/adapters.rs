//! Forward-model adapters binding the solver and the surrogate to the
//! assimilation engines. A parameter vector is the flattened log-perm raster;
//! porosity, facies and the schedule stay frozen per member.

use gcs_core::FieldRealization;
use gcs_da::{DaError, ForwardModel};
use gcs_sim::{observe, run_forward, InjectionSchedule, SimConfig};
use gcs_surrogate::encode::cell_index;
use gcs_surrogate::SurrogateModel;
use ndarray::Array2;

fn with_params(member: &FieldRealization, params: &[f64]) -> Result<FieldRealization, DaError> {
    let (ny, nx) = member.log_perm.dim();
    if params.len() != nx * ny {
        return Err(DaError::Config(format!("parameter vector length {} != {}", params.len(), nx * ny)));
    }
    let mut field = member.clone();
    field.log_perm = Array2::from_shape_vec((ny, nx), params.to_vec()).expect("length checked");
    Ok(field)
}

/// High-fidelity forward: run the solver, sample the monitoring points.
pub struct SimForward {
    pub members: Vec<FieldRealization>,
    pub sim: SimConfig,
    pub monitor_cells: Vec<(usize, usize)>,
    pub times: Vec<usize>,
}

impl ForwardModel for SimForward {
    fn n_obs(&self) -> usize {
        self.monitor_cells.len() * self.times.len()
    }

    fn n_params(&self) -> usize {
        let grid = self.members[0].grid;
        grid.nx * grid.ny
    }

    fn evaluate(&self, member: usize, params: &[f64]) -> Result<Vec<f64>, DaError> {
        let base = self.members.get(member % self.members.len()).expect("nonempty ensemble");
        let field = with_params(base, params)?;
        let traj = run_forward(&field, &self.sim)
            .map_err(|e| DaError::Forward { member, source: Box::new(e) })?;
        let values = observe(&traj, &self.monitor_cells, &self.times)
            .map_err(|e| DaError::Forward { member, source: Box::new(e) })?;
        Ok(values.iter().cloned().collect())
    }
}

/// Surrogate forward with input gradients through the network.
pub struct FnoForward {
    pub model: SurrogateModel,
    pub members: Vec<FieldRealization>,
    pub schedule: InjectionSchedule,
    pub monitor_cells: Vec<(usize, usize)>,
    pub times: Vec<usize>,
}

impl FnoForward {
    fn extract_obs(&self, pred: &Array2<f64>) -> Vec<f64> {
        let (nx, _ny, nt) = self.model.dims;
        let mut out = Vec::with_capacity(self.n_obs());
        for &t in &self.times {
            for &(ix, iy) in &self.monitor_cells {
                out.push(pred[[0, cell_index(nx, nt, ix, iy, t)]]);
            }
        }
        out
    }

    fn scatter_adjoint(&self, seed: &[f64]) -> Array2<f64> {
        let (nx, ny, nt) = self.model.dims;
        let mut adj = Array2::zeros((2, nx * ny * nt));
        for (ti, &t) in self.times.iter().enumerate() {
            for (pi, &(ix, iy)) in self.monitor_cells.iter().enumerate() {
                adj[[0, cell_index(nx, nt, ix, iy, t)]] = seed[ti * self.monitor_cells.len() + pi];
            }
        }
        adj
    }
}

impl ForwardModel for FnoForward {
    fn n_obs(&self) -> usize {
        self.monitor_cells.len() * self.times.len()
    }

    fn n_params(&self) -> usize {
        let (nx, ny, _) = self.model.dims;
        nx * ny
    }

    fn evaluate(&self, member: usize, params: &[f64]) -> Result<Vec<f64>, DaError> {
        let base = self.members.get(member % self.members.len()).expect("nonempty ensemble");
        let field = with_params(base, params)?;
        let dims = self.model.weights.config.spectral_dims(self.model.dims.0, self.model.dims.1, self.model.dims.2);
        let pred = gcs_surrogate::fft::with_engine(dims, |engine| self.model.predict(&field, &self.schedule, engine))
            .and_then(|r| r)
            .map_err(|e| DaError::Forward { member, source: Box::new(e) })?;
        Ok(self.extract_obs(&pred))
    }

    fn provides_input_gradients(&self) -> bool {
        true
    }

    fn evaluate_with_vjp(
        &self,
        member: usize,
        params: &[f64],
        seed_fn: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    ) -> Result<(Vec<f64>, Vec<f64>), DaError> {
        let base = self.members.get(member % self.members.len()).expect("nonempty ensemble");
        let field = with_params(base, params)?;
        let dims = self.model.weights.config.spectral_dims(self.model.dims.0, self.model.dims.1, self.model.dims.2);
        let mut obs_out = Vec::new();
        let result = gcs_surrogate::fft::with_engine(dims, |engine| {
            self.model.predict_vjp(&field, &self.schedule, engine, |pred| {
                let obs = self.extract_obs(pred);
                let seed = seed_fn(&obs);
                obs_out = obs;
                self.scatter_adjoint(&seed)
            })
        })
        .and_then(|r| r)
        .map_err(|e| DaError::Forward { member, source: Box::new(e) })?;
        let (_pred, grad_raster) = result;
        let grad: Vec<f64> = grad_raster.iter().cloned().collect();
        Ok((obs_out, grad))
    }
}
