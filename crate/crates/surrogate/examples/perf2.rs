use gcs_surrogate::fft::*;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let d = SpectralDims { nx: 32, ny: 32, nt: 62, kx: 6, ky: 6, kt: 8 };
    let mut eng = FftEngine::new(d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..d.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut modes = vec![Complex64::ZERO; d.n_modes()];
    let mut out = vec![0.0; d.n_cells()];
    let n = 50;
    let t0 = Instant::now();
    for _ in 0..n { eng.forward_retained(&x, &mut modes, 1, 0); }
    println!("forward_retained: {:.2} ms", t0.elapsed().as_secs_f64()/n as f64*1e3);
    let t0 = Instant::now();
    for _ in 0..n { eng.inverse_from_retained(&modes, &mut out, 1, 0); }
    println!("inverse_from_retained: {:.2} ms", t0.elapsed().as_secs_f64()/n as f64*1e3);

    // GEMM probe: (128 x 8) * (8 x 63488)
    let a = Array2::<f64>::from_shape_fn((128, 8), |_| rng.random_range(-1.0..1.0));
    let b = Array2::<f64>::from_shape_fn((8, 63488), |_| rng.random_range(-1.0..1.0));
    let t0 = Instant::now();
    for _ in 0..n { let _c = a.dot(&b); }
    println!("proj1 gemm (128x8 x 8x63488): {:.2} ms", t0.elapsed().as_secs_f64()/n as f64*1e3);
    let h = Array2::<f64>::from_shape_fn((128, 63488), |_| rng.random_range(-1.0..1.0));
    let w2 = Array2::<f64>::from_shape_fn((2, 128), |_| rng.random_range(-1.0..1.0));
    let t0 = Instant::now();
    for _ in 0..n { let _c = w2.dot(&h); }
    println!("proj2 gemm (2x128 x 128x63488): {:.2} ms", t0.elapsed().as_secs_f64()/n as f64*1e3);
    let ww = Array2::<f64>::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0));
    let t0 = Instant::now();
    for _ in 0..n { let _c = ww.dot(&b); }
    println!("pointwise gemm (8x8 x 8x63488): {:.2} ms", t0.elapsed().as_secs_f64()/n as f64*1e3);
    // tanh probe
    let t0 = Instant::now();
    let mut s = 0.0;
    for _ in 0..n { for v in h.iter().take(1_000_000) { s += v.tanh(); } }
    println!("1M tanh: {:.2} ms (ignore {s:.1})", t0.elapsed().as_secs_f64()/n as f64*1e3);
}
