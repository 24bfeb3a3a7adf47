//! Loss, batched gradients and the training loop.
//!
//! The data term is the cell-volume-weighted squared residual on the unit
//! domain (mean over cells, summed over channels), averaged over the batch;
//! the weight penalty `weight_decay * ||theta||^2` is added once. Batch
//! member gradients fan out over workers and are reduced in sample order, so
//! training is bit-reproducible for any worker count.

use gcs_core::{par, seed};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{Adam, AdamConfig};
use crate::encode::{Dataset, Normalization};
use crate::model::{backward, forward_cached, FnoConfig, Gradients, SurrogateWeights};
use crate::predict::SurrogateModel;
use crate::SurrogateError;

pub const MIN_DATASET: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// The lambda of the weight penalty term.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Fraction of the dataset used for fitting; the rest is held out.
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1.0e-3,
            weight_decay: 1.0e-4,
            epochs: 50,
            batch_size: 8,
            adam_betas: (0.9, 0.999),
            adam_eps: 1.0e-8,
            split_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(SurrogateError::Shape("lr must be positive, weight_decay nonnegative".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(SurrogateError::Shape("split_fraction must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(SurrogateError::Shape("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Held-out RMSE in physical units (bar).
    pub test_rmse_pressure: f64,
    /// Held-out RMSE of the dimensionless fraction channel.
    pub test_rmse_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Mean-over-cells, summed-over-channels squared residual.
pub fn data_loss(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    debug_assert_eq!(pred.dim(), target.dim());
    let n_cells = pred.ncols() as f64;
    pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n_cells
}

/// Full loss on a batch of normalized samples.
pub fn loss(
    weights: &SurrogateWeights,
    batch: &[(&Array2<f64>, &Array2<f64>)],
    weight_decay: f64,
    dims: (usize, usize, usize),
) -> Result<f64, SurrogateError> {
    if batch.is_empty() {
        return Err(SurrogateError::Shape("empty batch".into()));
    }
    let mut engine = weights.config.engine(dims.0, dims.1, dims.2)?;
    let mut total = 0.0;
    for (input, target) in batch {
        let cache = forward_cached(weights, input, &mut engine)?;
        total += data_loss(&cache.output, target);
    }
    Ok(total / batch.len() as f64 + weight_decay * weights.l2_norm_sq())
}

/// One sample's data loss and gradient contribution (unscaled by batch size).
pub fn sample_grad(
    weights: &SurrogateWeights,
    input: &Array2<f64>,
    target: &Array2<f64>,
    dims: (usize, usize, usize),
) -> Result<(f64, Gradients), SurrogateError> {
    let mut engine = weights.config.engine(dims.0, dims.1, dims.2)?;
    let cache = forward_cached(weights, input, &mut engine)?;
    let l = data_loss(&cache.output, target);
    let n_cells = cache.output.ncols() as f64;
    let mut d_out = &cache.output - target;
    d_out.mapv_inplace(|v| 2.0 * v / n_cells);
    let mut grads = SurrogateWeights::zeros_like(weights.config)?;
    backward(weights, &cache, &d_out, &mut grads, &mut engine, false)?;
    Ok((l, grads))
}

fn axpy(acc: &mut Gradients, scale: f64, g: &Gradients) {
    use crate::model::{TensorMut, TensorRef};
    for (a, b) in acc.tensors_mut().into_iter().zip(g.tensors()) {
        match (a, b) {
            (TensorMut::Real(xs), TensorRef::Real(ys)) => {
                for (x, y) in xs.iter_mut().zip(ys) {
                    *x += scale * y;
                }
            }
            (TensorMut::Complex(xs), TensorRef::Complex(ys)) => {
                for (x, y) in xs.iter_mut().zip(ys) {
                    *x += scale * y;
                }
            }
            _ => unreachable!(),
        }
    }
}

fn add_weight_penalty_grad(grads: &mut Gradients, weights: &SurrogateWeights, weight_decay: f64) {
    // d/dw of lambda * ||theta||^2 = 2 lambda theta
    axpy(grads, 2.0 * weight_decay, weights);
}

/// Mean batch loss and gradient; members evaluated in parallel, reduced in
/// sample order.
pub fn loss_and_grad(
    weights: &SurrogateWeights,
    batch: &[(&Array2<f64>, &Array2<f64>)],
    weight_decay: f64,
    dims: (usize, usize, usize),
) -> Result<(f64, Gradients), SurrogateError> {
    if batch.is_empty() {
        return Err(SurrogateError::Shape("empty batch".into()));
    }
    let parts = par::map_indexed(batch.len(), |i| sample_grad(weights, batch[i].0, batch[i].1, dims));
    let mut total = 0.0;
    let mut acc = SurrogateWeights::zeros_like(weights.config)?;
    let inv = 1.0 / batch.len() as f64;
    for part in parts {
        let (l, g) = part?;
        total += l * inv;
        axpy(&mut acc, inv, &g);
    }
    add_weight_penalty_grad(&mut acc, weights, weight_decay);
    Ok((total + weight_decay * weights.l2_norm_sq(), acc))
}

/// Held-out RMSE per output channel, in de-normalized units, over all cells
/// and frames of the given samples.
pub fn evaluate_rmse(
    weights: &SurrogateWeights,
    norm: &Normalization,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<(f64, f64), SurrogateError> {
    if indices.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let dims = dataset.dims;
    let sums = par::map_indexed(indices.len(), |k| -> Result<(f64, f64, usize), SurrogateError> {
        let i = indices[k];
        let mut engine = weights.config.engine(dims.0, dims.1, dims.2)?;
        let input = norm.normalize_input(&dataset.inputs[i]);
        let out = crate::model::fno_forward(weights, &input, &mut engine)?;
        let pred = norm.denormalize_target(&out);
        let target = &dataset.targets[i];
        let mut sp = 0.0;
        let mut sf = 0.0;
        for (p, t) in pred.row(0).iter().zip(target.row(0).iter()) {
            sp += (p - t) * (p - t);
        }
        for (p, t) in pred.row(1).iter().zip(target.row(1).iter()) {
            sf += (p - t) * (p - t);
        }
        Ok((sp, sf, pred.ncols()))
    });
    let mut sp = 0.0;
    let mut sf = 0.0;
    let mut n = 0usize;
    for s in sums {
        let (a, b, c) = s?;
        sp += a;
        sf += b;
        n += c;
    }
    Ok(((sp / n as f64).sqrt(), (sf / n as f64).sqrt()))
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Fit a surrogate on the dataset: seeded split, z-score normalization from
/// the training part, Adam with the penalty term folded into the gradient.
pub fn train(
    dataset: &Dataset,
    fno_cfg: FnoConfig,
    tc: &TrainConfig,
) -> Result<(SurrogateModel, TrainReport), SurrogateError> {
    tc.validate()?;
    fno_cfg.validate()?;
    if dataset.len() < MIN_DATASET {
        return Err(SurrogateError::DatasetTooSmall { n: dataset.len(), min: MIN_DATASET });
    }
    let n = dataset.len();
    let dims = dataset.dims;

    let mut split_rng = ChaCha8Rng::seed_from_u64(seed::derive(tc.seed, "split", 0));
    let perm = shuffled(n, &mut split_rng);
    let n_train = ((tc.split_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let train_indices: Vec<usize> = perm[..n_train].to_vec();
    let test_indices: Vec<usize> = perm[n_train..].to_vec();

    let train_inputs: Vec<&Array2<f64>> = train_indices.iter().map(|&i| &dataset.inputs[i]).collect();
    let train_targets: Vec<&Array2<f64>> = train_indices.iter().map(|&i| &dataset.targets[i]).collect();
    let norm = Normalization::fit(&train_inputs, &train_targets);

    let normed: Vec<(Array2<f64>, Array2<f64>)> = train_indices
        .iter()
        .map(|&i| (norm.normalize_input(&dataset.inputs[i]), norm.normalize_target(&dataset.targets[i])))
        .collect();

    let mut weights = SurrogateWeights::init(fno_cfg, seed::derive(tc.seed, "init", 0))?;
    let mut adam = Adam::new(
        AdamConfig { lr: tc.lr, beta1: tc.adam_betas.0, beta2: tc.adam_betas.1, eps: tc.adam_eps },
        &weights,
    );

    let mut history = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(tc.seed, "shuffle", epoch as u64));
        let order = shuffled(n_train, &mut rng);
        let mut epoch_data = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<(&Array2<f64>, &Array2<f64>)> =
                chunk.iter().map(|&k| (&normed[k].0, &normed[k].1)).collect();
            let (batch_loss, grads) = loss_and_grad(&weights, &batch, tc.weight_decay, dims)?;
            // batch_loss includes the penalty; keep the data part for the epoch mean
            let data_part = batch_loss - tc.weight_decay * weights.l2_norm_sq();
            epoch_data += data_part * chunk.len() as f64;
            adam.update(&mut weights, &grads);
        }
        let train_loss = epoch_data / n_train as f64 + tc.weight_decay * weights.l2_norm_sq();
        if !train_loss.is_finite() {
            return Err(SurrogateError::Diverged { epoch });
        }
        let (rmse_p, rmse_f) = evaluate_rmse(&weights, &norm, dataset, &test_indices)?;
        history.push(EpochStats { epoch, train_loss, test_rmse_pressure: rmse_p, test_rmse_fraction: rmse_f });
    }

    let model = SurrogateModel { weights, norm, dims };
    Ok((model, TrainReport { history, train_indices, test_indices }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::{IN_CHANNELS, OUT_CHANNELS};
    use crate::model::Activation;
    use rand::Rng;

    fn tiny_cfg() -> FnoConfig {
        FnoConfig {
            n_layers: 2,
            modes: (2, 2, 2),
            width: 4,
            in_channels: IN_CHANNELS,
            out_channels: OUT_CHANNELS,
            activation: Activation::Gelu,
        }
    }

    fn toy_dataset(n: usize, dims: (usize, usize, usize), seed_v: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_v);
        let n_cells = dims.0 * dims.1 * dims.2;
        let mut ds = Dataset::new(dims);
        for _ in 0..n {
            let input = Array2::from_shape_fn((IN_CHANNELS, n_cells), |_| rng.random_range(-1.0..1.0));
            // a smooth function of the input so the net has something learnable
            let target = Array2::from_shape_fn((OUT_CHANNELS, n_cells), |(c, i)| {
                let v: f64 = input[[0, i]];
                if c == 0 {
                    200.0 + 30.0 * v
                } else {
                    0.5 + 0.2 * (v * 2.0).tanh()
                }
            });
            ds.push(input, target).unwrap();
        }
        ds
    }

    #[test]
    fn perfect_prediction_with_zero_penalty_has_zero_loss() {
        let cfg = tiny_cfg();
        let mut w = SurrogateWeights::zeros_like(cfg).unwrap();
        w.proj2_b[0] = 1.25;
        let n_cells = 8 * 8 * 4;
        let input = Array2::zeros((IN_CHANNELS, n_cells));
        let mut target = Array2::zeros((OUT_CHANNELS, n_cells));
        target.row_mut(0).fill(1.25);
        let l = loss(&w, &[(&input, &target)], 0.0, (8, 8, 4)).unwrap();
        assert!(l.abs() < 1e-24, "loss {l}");
    }

    #[test]
    fn penalty_difference_is_exactly_lambda_norm() {
        let cfg = tiny_cfg();
        let w = SurrogateWeights::init(cfg, 2).unwrap();
        let n_cells = 8 * 8 * 4;
        let input = Array2::zeros((IN_CHANNELS, n_cells));
        let target = Array2::zeros((OUT_CHANNELS, n_cells));
        let lambda = 0.37;
        let l0 = loss(&w, &[(&input, &target)], 0.0, (8, 8, 4)).unwrap();
        let l1 = loss(&w, &[(&input, &target)], lambda, (8, 8, 4)).unwrap();
        let diff = l1 - l0;
        let want = lambda * w.l2_norm_sq();
        assert!((diff - want).abs() <= 1e-12 * want.max(1.0), "{diff} vs {want}");
    }

    #[test]
    fn doubling_residual_quadruples_data_term() {
        let n_cells = 64;
        let pred = Array2::from_elem((OUT_CHANNELS, n_cells), 1.0);
        let t1 = Array2::from_elem((OUT_CHANNELS, n_cells), 0.5);
        let t2 = Array2::from_elem((OUT_CHANNELS, n_cells), 0.0);
        let l1 = data_loss(&pred, &t1);
        let l2 = data_loss(&pred, &t2);
        assert!((l2 - 4.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_is_two_lambda_theta() {
        let cfg = tiny_cfg();
        let w = SurrogateWeights::init(cfg, 7).unwrap();
        let mut g = SurrogateWeights::zeros_like(cfg).unwrap();
        let lambda = 0.11;
        add_weight_penalty_grad(&mut g, &w, lambda);
        let mut ws = Vec::new();
        w.for_each_param(|v| ws.push(v));
        let mut gs = Vec::new();
        g.for_each_param(|v| gs.push(v));
        for (a, b) in ws.iter().zip(&gs) {
            assert!((b - 2.0 * lambda * a).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = toy_dataset(12, (8, 8, 4), 3);
        let cfg = tiny_cfg();
        let tc = TrainConfig { epochs: 0, seed: 5, ..TrainConfig::default() };
        let (model, report) = train(&ds, cfg, &tc).unwrap();
        assert!(report.history.is_empty());
        let fresh = SurrogateWeights::init(cfg, seed::derive(5, "init", 0)).unwrap();
        assert_eq!(model.weights.lift_w, fresh.lift_w);
        assert_eq!(model.weights.layers[0].spectral, fresh.layers[0].spectral);
    }

    #[test]
    fn small_datasets_are_rejected() {
        let ds = toy_dataset(5, (8, 8, 4), 3);
        assert!(matches!(
            train(&ds, tiny_cfg(), &TrainConfig::default()),
            Err(SurrogateError::DatasetTooSmall { n: 5, .. })
        ));
    }

    #[test]
    fn same_seed_reproduces_weights_bitwise() {
        let ds = toy_dataset(14, (8, 8, 4), 9);
        let cfg = tiny_cfg();
        let tc = TrainConfig { epochs: 3, batch_size: 4, seed: 21, ..TrainConfig::default() };
        let (m1, _) = train(&ds, cfg, &tc).unwrap();
        let (m2, _) = train(&ds, cfg, &tc).unwrap();
        assert_eq!(m1.weights.lift_w, m2.weights.lift_w);
        assert_eq!(m1.weights.proj2_w, m2.weights.proj2_w);
        for (a, b) in m1.weights.layers.iter().zip(&m2.weights.layers) {
            assert_eq!(a.spectral, b.spectral);
            assert_eq!(a.pointwise, b.pointwise);
        }
    }

    #[test]
    fn training_beats_the_untrained_network() {
        let ds = toy_dataset(30, (8, 8, 4), 13);
        let cfg = tiny_cfg();
        let tc = TrainConfig { epochs: 40, batch_size: 8, lr: 4.0e-3, weight_decay: 0.0, seed: 2, ..TrainConfig::default() };
        let (model, report) = train(&ds, cfg, &tc).unwrap();
        let test: Vec<usize> = report.test_indices.clone();
        let w0 = SurrogateWeights::init(cfg, seed::derive(2, "init", 0)).unwrap();
        let (untrained_p, _) = evaluate_rmse(&w0, &model.norm, &ds, &test).unwrap();
        let last = report.history.last().unwrap();
        assert!(
            last.test_rmse_pressure * 5.0 <= untrained_p,
            "trained {} vs untrained {untrained_p}",
            last.test_rmse_pressure
        );
    }
}
