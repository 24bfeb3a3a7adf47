//! Trained model bundle: weights plus the normalization and grid signature
//! they were fitted at. This is what assimilation consumes.

use gcs_core::FieldRealization;
use gcs_sim::InjectionSchedule;
use ndarray::Array2;

use crate::encode::{encode_input, Normalization};
use crate::fft::FftEngine;
use crate::model::{backward, forward_cached, SurrogateWeights};
use crate::SurrogateError;

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub weights: SurrogateWeights,
    pub norm: Normalization,
    /// (nx, ny, nt) the model expects.
    pub dims: (usize, usize, usize),
}

impl SurrogateModel {
    pub fn engine(&self) -> Result<FftEngine, SurrogateError> {
        self.weights.config.engine(self.dims.0, self.dims.1, self.dims.2)
    }

    pub fn n_steps(&self) -> usize {
        self.dims.2 - 1
    }

    fn check_field(&self, field: &FieldRealization) -> Result<(), SurrogateError> {
        if (field.grid.nx, field.grid.ny) != (self.dims.0, self.dims.1) {
            return Err(SurrogateError::Shape(format!(
                "field grid {}x{} does not match model {}x{}",
                field.grid.nx, field.grid.ny, self.dims.0, self.dims.1
            )));
        }
        Ok(())
    }

    /// Predicted trajectory in physical units, (2, nx*ny*nt).
    pub fn predict(
        &self,
        field: &FieldRealization,
        schedule: &InjectionSchedule,
        engine: &mut FftEngine,
    ) -> Result<Array2<f64>, SurrogateError> {
        self.check_field(field)?;
        let raw = encode_input(field, schedule, self.n_steps())?;
        let input = self.norm.normalize_input(&raw);
        let out = crate::model::fno_forward(&self.weights, &input, engine)?;
        Ok(self.norm.denormalize_target(&out))
    }

    /// Prediction plus the gradient of J with respect to the log-perm raster,
    /// where `adjoint` carries dJ/d(prediction) in physical units. The chain
    /// runs through target de-normalization, the network, input normalization
    /// and the time-broadcast of the permeability channel.
    pub fn predict_with_input_gradient(
        &self,
        field: &FieldRealization,
        schedule: &InjectionSchedule,
        adjoint: &Array2<f64>,
        engine: &mut FftEngine,
    ) -> Result<(Array2<f64>, Array2<f64>), SurrogateError> {
        self.predict_vjp(field, schedule, engine, |_pred| adjoint.clone())
    }

    /// Like [`Self::predict_with_input_gradient`] but the adjoint may depend
    /// on the prediction itself, with a single forward pass.
    pub fn predict_vjp(
        &self,
        field: &FieldRealization,
        schedule: &InjectionSchedule,
        engine: &mut FftEngine,
        make_adjoint: impl FnOnce(&Array2<f64>) -> Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>), SurrogateError> {
        self.check_field(field)?;
        let (nx, ny, nt) = self.dims;
        let raw = encode_input(field, schedule, self.n_steps())?;
        let input = self.norm.normalize_input(&raw);
        let cache = forward_cached(&self.weights, &input, engine)?;
        let pred = self.norm.denormalize_target(&cache.output);
        let adjoint = make_adjoint(&pred);

        if adjoint.dim() != pred.dim() {
            return Err(SurrogateError::Shape(format!(
                "adjoint {:?} does not match prediction {:?}",
                adjoint.dim(),
                pred.dim()
            )));
        }
        // de-normalization scales each output channel by its std
        let mut d_out = adjoint.clone();
        for (ch, mut row) in d_out.axis_iter_mut(ndarray::Axis(0)).enumerate() {
            let s = self.norm.target_std[ch];
            row.mapv_inplace(|v| v * s);
        }
        let mut grads = SurrogateWeights::zeros_like(self.weights.config)?;
        let d_input = backward(&self.weights, &cache, &d_out, &mut grads, engine, true)?
            .expect("input gradient requested");

        // sum the broadcast copies of the log-perm channel over time frames,
        // undoing the input z-score
        let inv_std = 1.0 / self.norm.input_std[0];
        let mut g = Array2::zeros((ny, nx));
        for iy in 0..ny {
            for ix in 0..nx {
                let mut acc = 0.0;
                for it in 0..nt {
                    acc += d_input[[0, (iy * nx + ix) * nt + it]];
                }
                g[[iy, ix]] = acc * inv_std;
            }
        }
        Ok((pred, g))
    }
}
