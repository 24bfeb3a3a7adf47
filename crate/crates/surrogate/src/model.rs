//! The operator network: lift -> spectral/pointwise layers -> projection.
//!
//! Activations are (channels, n_cells) matrices with the cell layout of
//! [`crate::fft`]. Each layer adds a pointwise channel-mixing path to a
//! spectral path that mixes channels mode-by-mode in truncated Fourier space;
//! the activation is skipped on the final layer. The projection maps the
//! hidden width through a fixed 128-wide pointwise layer down to the output
//! channels.
//!
//! `backward` consumes the cache of a `forward_cached` call and accumulates
//! gradients for every weight tensor, optionally returning the gradient with
//! respect to the (normalized) input field.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::fft::{FftEngine, SpectralDims};
use crate::SurrogateError;

/// Hidden width of the output projection.
pub const PROJECT_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // tanh form of the Gaussian error linear unit
            Activation::Gelu => {
                let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
            Activation::Relu => x.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FnoConfig {
    pub n_layers: usize,
    /// Retained Fourier modes per axis (kx, ky, kt).
    pub modes: (usize, usize, usize),
    /// Hidden channel count.
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

impl Default for FnoConfig {
    fn default() -> Self {
        FnoConfig {
            n_layers: 4,
            modes: (6, 6, 8),
            width: 64,
            in_channels: 6,
            out_channels: 2,
            activation: Activation::Gelu,
        }
    }
}

impl FnoConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_layers == 0 || self.width == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(SurrogateError::Shape("layer, width and channel counts must be positive".into()));
        }
        if self.width < self.out_channels {
            return Err(SurrogateError::Shape(format!(
                "width {} must be at least out_channels {}",
                self.width, self.out_channels
            )));
        }
        Ok(())
    }

    pub fn spectral_dims(&self, nx: usize, ny: usize, nt: usize) -> SpectralDims {
        SpectralDims { nx, ny, nt, kx: self.modes.0, ky: self.modes.1, kt: self.modes.2 }
    }

    /// Build the transform engine for a grid; validates mode counts.
    pub fn engine(&self, nx: usize, ny: usize, nt: usize) -> Result<FftEngine, SurrogateError> {
        self.validate()?;
        FftEngine::new(self.spectral_dims(nx, ny, nt))
    }

    /// Retained coefficients per channel pair in one layer.
    pub fn n_modes(&self) -> usize {
        4 * self.modes.0 * self.modes.1 * self.modes.2
    }
}

#[derive(Debug, Clone)]
pub struct LayerWeights {
    /// Complex mixing tensor, mode-major: `[mode][c_out][c_in]`.
    pub spectral: Vec<Complex64>,
    /// Pointwise channel mixing (width x width), kernel size one, no bias.
    pub pointwise: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SurrogateWeights {
    pub config: FnoConfig,
    pub lift_w: Array2<f64>,
    pub lift_b: Array1<f64>,
    pub layers: Vec<LayerWeights>,
    pub proj1_w: Array2<f64>,
    pub proj1_b: Array1<f64>,
    pub proj2_w: Array2<f64>,
    pub proj2_b: Array1<f64>,
}

/// Gradient buffers mirroring [`SurrogateWeights`].
pub type Gradients = SurrogateWeights;

/// Borrowed view of one weight tensor; complex entries count as two reals.
pub enum TensorRef<'a> {
    Real(&'a [f64]),
    Complex(&'a [Complex64]),
}

pub enum TensorMut<'a> {
    Real(&'a mut [f64]),
    Complex(&'a mut [Complex64]),
}

impl SurrogateWeights {
    /// Seeded random initialization; biases start at zero.
    pub fn init(config: FnoConfig, seed: u64) -> Result<Self, SurrogateError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(gcs_core::seed::derive(seed, "fno-init", 0));
        let w = config.width;
        let normal = |rng: &mut ChaCha8Rng, std: f64| -> f64 { Normal::new(0.0, std).unwrap().sample(rng) };

        let lift_std = (1.0 / config.in_channels as f64).sqrt();
        let lift_w = Array2::from_shape_fn((w, config.in_channels), |_| normal(&mut rng, lift_std));
        let lift_b = Array1::zeros(w);

        let spec_std = 1.0 / w as f64;
        let point_std = (1.0 / w as f64).sqrt();
        let n_modes = config.n_modes();
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            let spectral = (0..n_modes * w * w)
                .map(|_| Complex64::new(normal(&mut rng, spec_std), normal(&mut rng, spec_std)))
                .collect();
            let pointwise = Array2::from_shape_fn((w, w), |_| normal(&mut rng, point_std));
            layers.push(LayerWeights { spectral, pointwise });
        }

        let proj1_std = (1.0 / w as f64).sqrt();
        let proj1_w = Array2::from_shape_fn((PROJECT_HIDDEN, w), |_| normal(&mut rng, proj1_std));
        let proj1_b = Array1::zeros(PROJECT_HIDDEN);
        let proj2_std = (1.0 / PROJECT_HIDDEN as f64).sqrt();
        let proj2_w = Array2::from_shape_fn((config.out_channels, PROJECT_HIDDEN), |_| normal(&mut rng, proj2_std));
        let proj2_b = Array1::zeros(config.out_channels);

        Ok(SurrogateWeights { config, lift_w, lift_b, layers, proj1_w, proj1_b, proj2_w, proj2_b })
    }

    /// All-zero buffers with the same shapes; the gradient accumulator.
    pub fn zeros_like(config: FnoConfig) -> Result<Self, SurrogateError> {
        config.validate()?;
        let w = config.width;
        let n_modes = config.n_modes();
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                spectral: vec![Complex64::ZERO; n_modes * w * w],
                pointwise: Array2::zeros((w, w)),
            })
            .collect();
        Ok(SurrogateWeights {
            config,
            lift_w: Array2::zeros((w, config.in_channels)),
            lift_b: Array1::zeros(w),
            layers,
            proj1_w: Array2::zeros((PROJECT_HIDDEN, w)),
            proj1_b: Array1::zeros(PROJECT_HIDDEN),
            proj2_w: Array2::zeros((config.out_channels, PROJECT_HIDDEN)),
            proj2_b: Array1::zeros(config.out_channels),
        })
    }

    pub fn zero(&mut self) {
        for t in self.tensors_mut() {
            match t {
                TensorMut::Real(xs) => xs.fill(0.0),
                TensorMut::Complex(xs) => xs.fill(Complex64::ZERO),
            }
        }
    }

    /// Weight tensors in declaration (and serialization) order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        out.push(TensorRef::Real(self.lift_w.as_slice().expect("standard layout")));
        out.push(TensorRef::Real(self.lift_b.as_slice().expect("standard layout")));
        for layer in &self.layers {
            out.push(TensorRef::Complex(&layer.spectral));
            out.push(TensorRef::Real(layer.pointwise.as_slice().expect("standard layout")));
        }
        out.push(TensorRef::Real(self.proj1_w.as_slice().expect("standard layout")));
        out.push(TensorRef::Real(self.proj1_b.as_slice().expect("standard layout")));
        out.push(TensorRef::Real(self.proj2_w.as_slice().expect("standard layout")));
        out.push(TensorRef::Real(self.proj2_b.as_slice().expect("standard layout")));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        out.push(TensorMut::Real(self.lift_w.as_slice_mut().expect("standard layout")));
        out.push(TensorMut::Real(self.lift_b.as_slice_mut().expect("standard layout")));
        for layer in &mut self.layers {
            out.push(TensorMut::Complex(&mut layer.spectral));
            out.push(TensorMut::Real(layer.pointwise.as_slice_mut().expect("standard layout")));
        }
        out.push(TensorMut::Real(self.proj1_w.as_slice_mut().expect("standard layout")));
        out.push(TensorMut::Real(self.proj1_b.as_slice_mut().expect("standard layout")));
        out.push(TensorMut::Real(self.proj2_w.as_slice_mut().expect("standard layout")));
        out.push(TensorMut::Real(self.proj2_b.as_slice_mut().expect("standard layout")));
        out
    }

    /// Scalar parameter count (complex entries count twice).
    pub fn n_params(&self) -> usize {
        self.tensors()
            .iter()
            .map(|t| match t {
                TensorRef::Real(xs) => xs.len(),
                TensorRef::Complex(xs) => 2 * xs.len(),
            })
            .sum()
    }

    /// Sum of squared scalar parameters (complex: re^2 + im^2).
    pub fn l2_norm_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| match t {
                TensorRef::Real(xs) => xs.iter().map(|x| x * x).sum::<f64>(),
                TensorRef::Complex(xs) => xs.iter().map(|x| x.norm_sqr()).sum::<f64>(),
            })
            .sum()
    }

    /// Visit scalar parameters mutably in declaration order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for t in self.tensors_mut() {
            match t {
                TensorMut::Real(xs) => xs.iter_mut().for_each(&mut f),
                TensorMut::Complex(xs) => xs.iter_mut().for_each(|c| {
                    f(&mut c.re);
                    f(&mut c.im);
                }),
            }
        }
    }

    /// Read scalar parameters in declaration order.
    pub fn for_each_param(&self, mut f: impl FnMut(f64)) {
        for t in self.tensors() {
            match t {
                TensorRef::Real(xs) => xs.iter().for_each(|x| f(*x)),
                TensorRef::Complex(xs) => xs.iter().for_each(|c| {
                    f(c.re);
                    f(c.im);
                }),
            }
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache {
    pub dims: SpectralDims,
    /// Normalized input, (in_channels, n_cells).
    pub input: Array2<f64>,
    /// Input to each spectral layer, (width, n_cells) each.
    pub layer_inputs: Vec<Array2<f64>>,
    /// Retained spectra of each layer input, mode-major (n_modes * width).
    pub spectra: Vec<Vec<Complex64>>,
    /// Pre-activation of each layer.
    pub preacts: Vec<Array2<f64>>,
    /// Network output, (out_channels, n_cells).
    pub output: Array2<f64>,
}

fn check_finite(a: &Array2<f64>, layer: usize) -> Result<(), SurrogateError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SurrogateError::NonFinite { layer });
    }
    Ok(())
}

/// Column block size for the fused kernels; 256 columns of f64 stay inside L1.
const BLOCK: usize = 256;

/// out = W x (+ bias). Hand-blocked: the inner dimensions here are too small
/// for generic GEMM packing to pay off.
fn affine_into(w: &Array2<f64>, bias: Option<&Array1<f64>>, x: &Array2<f64>, out: &mut Array2<f64>) {
    let (rows, k) = w.dim();
    let n = x.ncols();
    debug_assert_eq!(x.nrows(), k);
    debug_assert_eq!(out.dim(), (rows, n));
    let ws = w.as_slice().expect("standard layout");
    let xs = x.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    let mut acc = [0.0f64; BLOCK];
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        for r in 0..rows {
            let b = bias.map_or(0.0, |b| b[r]);
            acc[..len].fill(b);
            let wrow = &ws[r * k..(r + 1) * k];
            for (kk, &wv) in wrow.iter().enumerate() {
                let xrow = &xs[kk * n + start..kk * n + start + len];
                for (a, &xv) in acc[..len].iter_mut().zip(xrow) {
                    *a += wv * xv;
                }
            }
            os[r * n + start..r * n + start + len].copy_from_slice(&acc[..len]);
        }
        start += len;
    }
}

/// out (+)= W^T y; `accumulate` keeps existing contents.
fn affine_transpose_into(w: &Array2<f64>, y: &Array2<f64>, out: &mut Array2<f64>, accumulate: bool) {
    let (rows, k) = w.dim();
    let n = y.ncols();
    debug_assert_eq!(y.nrows(), rows);
    debug_assert_eq!(out.dim(), (k, n));
    let ws = w.as_slice().expect("standard layout");
    let ys = y.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    let mut acc = [0.0f64; BLOCK];
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        for kk in 0..k {
            if accumulate {
                acc[..len].copy_from_slice(&os[kk * n + start..kk * n + start + len]);
            } else {
                acc[..len].fill(0.0);
            }
            for r in 0..rows {
                let wv = ws[r * k + kk];
                let yrow = &ys[r * n + start..r * n + start + len];
                for (a, &yv) in acc[..len].iter_mut().zip(yrow) {
                    *a += wv * yv;
                }
            }
            os[kk * n + start..kk * n + start + len].copy_from_slice(&acc[..len]);
        }
        start += len;
    }
}

/// g_w += y x^T, g_b += row sums of y (outer-product gradient accumulation).
fn grad_accumulate(y: &Array2<f64>, x: &Array2<f64>, g_w: &mut Array2<f64>, g_b: Option<&mut Array1<f64>>) {
    let (rows, n) = y.dim();
    let k = x.nrows();
    debug_assert_eq!(x.ncols(), n);
    debug_assert_eq!(g_w.dim(), (rows, k));
    let ys = y.as_slice().expect("standard layout");
    let xs = x.as_slice().expect("standard layout");
    let gs = g_w.as_slice_mut().expect("standard layout");
    for r in 0..rows {
        let yrow = &ys[r * n..(r + 1) * n];
        for kk in 0..k {
            let xrow = &xs[kk * n..(kk + 1) * n];
            let mut acc = 0.0;
            for (a, b) in yrow.iter().zip(xrow) {
                acc += a * b;
            }
            gs[r * k + kk] += acc;
        }
    }
    if let Some(g_b) = g_b {
        for r in 0..rows {
            g_b[r] += ys[r * n..(r + 1) * n].iter().sum::<f64>();
        }
    }
}

/// pre[j][i] = bias[j] + sum_c w[j][c] * x[c][i] for one output row; the
/// accumulator row stays in L1 across the axpy sweeps.
#[inline]
fn row_affine(wrow: &[f64], bias: f64, xs: &[f64], n: usize, start: usize, len: usize, out: &mut [f64]) {
    let out = &mut out[..len];
    out.fill(bias);
    for (c, &wv) in wrow.iter().enumerate() {
        let xrow = &xs[c * n + start..c * n + start + len];
        for (o, &xv) in out.iter_mut().zip(xrow) {
            *o += wv * xv;
        }
    }
}

/// Projection head, fused per column block so the hidden (128 x n_cells)
/// matrix never materializes.
fn projection_forward(w: &SurrogateWeights, a: &Array2<f64>, out: &mut Array2<f64>) {
    let act = w.config.activation;
    let width = w.config.width;
    let n = a.ncols();
    let n_out = w.config.out_channels;
    let as_ = a.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    let w1 = w.proj1_w.as_slice().expect("standard layout");
    let w2 = w.proj2_w.as_slice().expect("standard layout");
    let mut hidden = vec![0.0f64; PROJECT_HIDDEN * BLOCK];
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        for j in 0..PROJECT_HIDDEN {
            row_affine(&w1[j * width..(j + 1) * width], w.proj1_b[j], as_, n, start, len, &mut hidden[j * len..(j + 1) * len]);
        }
        for hv in hidden[..PROJECT_HIDDEN * len].iter_mut() {
            *hv = act.apply(*hv);
        }
        for o in 0..n_out {
            let orow = &mut os[o * n + start..o * n + start + len];
            orow.fill(w.proj2_b[o]);
            let wrow = &w2[o * PROJECT_HIDDEN..(o + 1) * PROJECT_HIDDEN];
            for (j, &wv) in wrow.iter().enumerate() {
                let h = &hidden[j * len..(j + 1) * len];
                for (ov, &hv) in orow.iter_mut().zip(h) {
                    *ov += wv * hv;
                }
            }
        }
        start += len;
    }
}

/// Backward of the projection head; recomputes the hidden block from `a` and
/// writes dJ/da into `d_a`.
fn projection_backward(
    w: &SurrogateWeights,
    a: &Array2<f64>,
    d_out: &Array2<f64>,
    grads: &mut Gradients,
    d_a: &mut Array2<f64>,
) {
    let act = w.config.activation;
    let width = w.config.width;
    let n = a.ncols();
    let n_out = w.config.out_channels;
    let as_ = a.as_slice().expect("standard layout");
    let dos = d_out.as_slice().expect("standard layout");
    let w1 = w.proj1_w.as_slice().expect("standard layout");
    let w2 = w.proj2_w.as_slice().expect("standard layout");
    let das = d_a.as_slice_mut().expect("standard layout");
    let g1 = grads.proj1_w.as_slice_mut().expect("standard layout");
    let g2 = grads.proj2_w.as_slice_mut().expect("standard layout");

    let mut pre = vec![0.0f64; PROJECT_HIDDEN * BLOCK];
    let mut dpre = vec![0.0f64; PROJECT_HIDDEN * BLOCK];
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        for j in 0..PROJECT_HIDDEN {
            row_affine(&w1[j * width..(j + 1) * width], w.proj1_b[j], as_, n, start, len, &mut pre[j * len..(j + 1) * len]);
        }
        // g_proj2 and the hidden cotangent, using h = act(pre)
        for j in 0..PROJECT_HIDDEN {
            let p = &pre[j * len..(j + 1) * len];
            let dp = &mut dpre[j * len..(j + 1) * len];
            dp.fill(0.0);
            for o in 0..n_out {
                let wv = w2[o * PROJECT_HIDDEN + j];
                let dorow = &dos[o * n + start..o * n + start + len];
                for (d, &g) in dp.iter_mut().zip(dorow) {
                    *d += wv * g;
                }
            }
            let mut gw_acc = [0.0f64; 8];
            debug_assert!(n_out <= 8);
            for (i, &pv) in p.iter().enumerate() {
                let h = act.apply(pv);
                for (o, acc) in gw_acc[..n_out].iter_mut().enumerate() {
                    *acc += dos[o * n + start + i] * h;
                }
                dp[i] *= act.derivative(pv);
            }
            for o in 0..n_out {
                g2[o * PROJECT_HIDDEN + j] += gw_acc[o];
            }
            grads.proj1_b[j] += dp.iter().sum::<f64>();
        }
        // g_proj1 and d_a for this block
        for c in 0..width {
            let arow = &as_[c * n + start..c * n + start + len];
            let darow = &mut das[c * n + start..c * n + start + len];
            darow.fill(0.0);
            for j in 0..PROJECT_HIDDEN {
                let dp = &dpre[j * len..(j + 1) * len];
                let wv = w1[j * width + c];
                let mut acc = 0.0;
                for (i, &d) in dp.iter().enumerate() {
                    acc += d * arow[i];
                    darow[i] += wv * d;
                }
                g1[j * width + c] += acc;
            }
        }
        for o in 0..n_out {
            grads.proj2_b[o] += dos[o * n + start..o * n + start + len].iter().sum::<f64>();
        }
        start += len;
    }
}

/// Mode-wise complex channel mixing: z[m] = R[m] . s[m].
fn mix_modes(spectral: &[Complex64], s: &[Complex64], z: &mut [Complex64], n_modes: usize, w: usize) {
    for m in 0..n_modes {
        let r = &spectral[m * w * w..(m + 1) * w * w];
        let sv = &s[m * w..(m + 1) * w];
        let zv = &mut z[m * w..(m + 1) * w];
        for co in 0..w {
            let row = &r[co * w..(co + 1) * w];
            let mut acc = Complex64::ZERO;
            for ci in 0..w {
                acc += row[ci] * sv[ci];
            }
            zv[co] = acc;
        }
    }
}

/// Adjoint pieces of the mixing: gradient of R and cotangent of s.
fn mix_modes_adjoint(
    spectral: &[Complex64],
    s: &[Complex64],
    gz: &[Complex64],
    g_spectral: &mut [Complex64],
    gs: &mut [Complex64],
    n_modes: usize,
    w: usize,
) {
    for m in 0..n_modes {
        let r = &spectral[m * w * w..(m + 1) * w * w];
        let gr = &mut g_spectral[m * w * w..(m + 1) * w * w];
        let sv = &s[m * w..(m + 1) * w];
        let gzv = &gz[m * w..(m + 1) * w];
        let gsv = &mut gs[m * w..(m + 1) * w];
        for co in 0..w {
            let g = gzv[co];
            let row = &r[co * w..(co + 1) * w];
            let grow = &mut gr[co * w..(co + 1) * w];
            for ci in 0..w {
                grow[ci] += g * sv[ci].conj();
                gsv[ci] += row[ci].conj() * g;
            }
        }
    }
}

/// Run the network, returning the cache needed for [`backward`].
pub fn forward_cached(
    weights: &SurrogateWeights,
    input: &Array2<f64>,
    engine: &mut FftEngine,
) -> Result<ForwardCache, SurrogateError> {
    let cfg = &weights.config;
    let dims = engine.dims;
    let n_cells = dims.n_cells();
    if input.dim() != (cfg.in_channels, n_cells) {
        return Err(SurrogateError::Shape(format!(
            "input {:?}, expected ({}, {})",
            input.dim(),
            cfg.in_channels,
            n_cells
        )));
    }
    if (dims.kx, dims.ky, dims.kt) != cfg.modes {
        return Err(SurrogateError::Shape("engine modes disagree with config".into()));
    }
    let w = cfg.width;
    let n_modes = cfg.n_modes();
    let act = cfg.activation;

    let mut a = Array2::zeros((w, n_cells));
    affine_into(&weights.lift_w, Some(&weights.lift_b), input, &mut a);
    check_finite(&a, 0)?;

    let mut layer_inputs = Vec::with_capacity(cfg.n_layers);
    let mut spectra = Vec::with_capacity(cfg.n_layers);
    let mut preacts = Vec::with_capacity(cfg.n_layers);
    let mut spec_row = vec![0.0; n_cells];

    for (l, layer) in weights.layers.iter().enumerate() {
        let mut s = vec![Complex64::ZERO; n_modes * w];
        for c in 0..w {
            let row = a.row(c);
            engine.forward_retained(row.as_slice().expect("row"), &mut s, w, c);
        }
        let mut z = vec![Complex64::ZERO; n_modes * w];
        mix_modes(&layer.spectral, &s, &mut z, n_modes, w);

        let mut u = Array2::zeros((w, n_cells));
        affine_into(&layer.pointwise, None, &a, &mut u);
        for c in 0..w {
            engine.inverse_from_retained(&z, &mut spec_row, w, c);
            let mut urow = u.row_mut(c);
            let urow = urow.as_slice_mut().expect("row");
            for i in 0..n_cells {
                urow[i] += spec_row[i];
            }
        }
        check_finite(&u, l)?;

        layer_inputs.push(a);
        spectra.push(s);
        let next = if l + 1 < cfg.n_layers { u.mapv(|v| act.apply(v)) } else { u.clone() };
        preacts.push(u);
        a = next;
    }

    let mut out = Array2::zeros((cfg.out_channels, n_cells));
    projection_forward(weights, &a, &mut out);
    check_finite(&out, cfg.n_layers)?;

    Ok(ForwardCache { dims, input: input.clone(), layer_inputs, spectra, preacts, output: out })
}

/// Convenience forward pass without keeping the cache.
pub fn fno_forward(
    weights: &SurrogateWeights,
    input: &Array2<f64>,
    engine: &mut FftEngine,
) -> Result<Array2<f64>, SurrogateError> {
    Ok(forward_cached(weights, input, engine)?.output)
}

/// Accumulate gradients of a scalar J into `grads`, given dJ/d(output).
/// Returns dJ/d(input) when `want_input_grad` is set.
pub fn backward(
    weights: &SurrogateWeights,
    cache: &ForwardCache,
    d_out: &Array2<f64>,
    grads: &mut Gradients,
    engine: &mut FftEngine,
    want_input_grad: bool,
) -> Result<Option<Array2<f64>>, SurrogateError> {
    let cfg = &weights.config;
    let dims = cache.dims;
    let n_cells = dims.n_cells();
    if d_out.dim() != (cfg.out_channels, n_cells) {
        return Err(SurrogateError::Shape(format!(
            "output cotangent {:?}, expected ({}, {})",
            d_out.dim(),
            cfg.out_channels,
            n_cells
        )));
    }
    if engine.dims != dims || cache.layer_inputs.len() != cfg.n_layers {
        return Err(SurrogateError::Shape("cache does not match this configuration".into()));
    }
    let w = cfg.width;
    let n_modes = cfg.n_modes();
    let act = cfg.activation;

    // final features: last pre-activation goes unactivated into the head
    let a_last = &cache.preacts[cfg.n_layers - 1];
    let mut d_a = Array2::zeros((w, n_cells));
    projection_backward(weights, a_last, d_out, grads, &mut d_a);

    let mut row_buf = vec![0.0; n_cells];
    for l in (0..cfg.n_layers).rev() {
        let layer = &weights.layers[l];
        let d_u = if l + 1 < cfg.n_layers {
            let mut d = d_a;
            d.zip_mut_with(&cache.preacts[l], |g, &p| *g *= act.derivative(p));
            d
        } else {
            d_a
        };

        grad_accumulate(&d_u, &cache.layer_inputs[l], &mut grads.layers[l].pointwise, None);

        let mut gz = vec![Complex64::ZERO; n_modes * w];
        for c in 0..w {
            let row = d_u.row(c);
            engine.inverse_from_retained_adjoint(row.as_slice().expect("row"), &mut gz, w, c);
        }
        let mut gs = vec![Complex64::ZERO; n_modes * w];
        mix_modes_adjoint(&layer.spectral, &cache.spectra[l], &gz, &mut grads.layers[l].spectral, &mut gs, n_modes, w);

        let mut d_a_next = Array2::zeros((w, n_cells));
        affine_transpose_into(&layer.pointwise, &d_u, &mut d_a_next, false);
        for c in 0..w {
            engine.forward_retained_adjoint(&gs, &mut row_buf, w, c);
            let mut row = d_a_next.row_mut(c);
            let row = row.as_slice_mut().expect("row");
            for i in 0..n_cells {
                row[i] += row_buf[i];
            }
        }
        d_a = d_a_next;
    }

    grad_accumulate(&d_a, &cache.input, &mut grads.lift_w, Some(&mut grads.lift_b));

    if want_input_grad {
        let mut d_input = Array2::zeros((cfg.in_channels, n_cells));
        affine_transpose_into(&weights.lift_w, &d_a, &mut d_input, false);
        Ok(Some(d_input))
    } else {
        Ok(None)
    }
}
