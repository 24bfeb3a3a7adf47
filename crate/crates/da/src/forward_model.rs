//! The forward-model abstraction every engine runs against: a deterministic
//! map from a parameter vector to the predicted observation vector, with an
//! optional vector-Jacobian product for gradient-based methods.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::DaError;

/// Flattened log-permeability raster (row-major, y outer). Frozen companions
/// (porosity, schedule) live inside the model implementation.
pub type ParameterVector = Vec<f64>;

pub trait ForwardModel: Sync {
    fn n_obs(&self) -> usize;

    fn n_params(&self) -> usize;

    /// Predicted observations for one parameter vector; deterministic.
    fn evaluate(&self, member: usize, params: &[f64]) -> Result<Vec<f64>, DaError>;

    fn provides_input_gradients(&self) -> bool {
        false
    }

    /// Predicted observations plus the gradient of `J` with respect to the
    /// parameters, where `seed_fn` maps predictions to dJ/d(prediction).
    fn evaluate_with_vjp(
        &self,
        member: usize,
        params: &[f64],
        seed_fn: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    ) -> Result<(Vec<f64>, Vec<f64>), DaError> {
        let _ = (member, params, seed_fn);
        Err(DaError::GradientUnavailable)
    }
}

/// Wraps a model and counts evaluations; the exact-call-accounting source.
pub struct CountingForward<'a> {
    inner: &'a dyn ForwardModel,
    calls: AtomicUsize,
}

impl<'a> CountingForward<'a> {
    pub fn new(inner: &'a dyn ForwardModel) -> Self {
        CountingForward { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ForwardModel for CountingForward<'_> {
    fn n_obs(&self) -> usize {
        self.inner.n_obs()
    }

    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn evaluate(&self, member: usize, params: &[f64]) -> Result<Vec<f64>, DaError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(member, params)
    }

    fn provides_input_gradients(&self) -> bool {
        self.inner.provides_input_gradients()
    }

    fn evaluate_with_vjp(
        &self,
        member: usize,
        params: &[f64],
        seed_fn: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    ) -> Result<(Vec<f64>, Vec<f64>), DaError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate_with_vjp(member, params, seed_fn)
    }
}

/// Linear-map model used by oracle tests: d = A m.
pub struct LinearForward {
    pub matrix: nalgebra::DMatrix<f64>,
}

impl ForwardModel for LinearForward {
    fn n_obs(&self) -> usize {
        self.matrix.nrows()
    }

    fn n_params(&self) -> usize {
        self.matrix.ncols()
    }

    fn evaluate(&self, _member: usize, params: &[f64]) -> Result<Vec<f64>, DaError> {
        let m = nalgebra::DVector::from_column_slice(params);
        Ok((&self.matrix * m).data.into())
    }

    fn provides_input_gradients(&self) -> bool {
        true
    }

    fn evaluate_with_vjp(
        &self,
        _member: usize,
        params: &[f64],
        seed_fn: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    ) -> Result<(Vec<f64>, Vec<f64>), DaError> {
        let m = nalgebra::DVector::from_column_slice(params);
        let pred: Vec<f64> = (&self.matrix * m).data.into();
        let seed = seed_fn(&pred);
        let s = nalgebra::DVector::from_column_slice(&seed);
        let grad: Vec<f64> = (self.matrix.transpose() * s).data.into();
        Ok((pred, grad))
    }
}
