use gcs_surrogate::*;
use gcs_surrogate::train::sample_grad;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let dims = (32usize, 32usize, 62usize);
    let n_cells = dims.0 * dims.1 * dims.2;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = Array2::from_shape_fn((6, n_cells), |_| rng.random_range(-1.0..1.0));
    let target = Array2::from_shape_fn((2, n_cells), |_| rng.random_range(-1.0..1.0));
    for width in [6usize, 8, 12, 16] {
        let cfg = FnoConfig { width, modes: (6, 6, 8), activation: Activation::Relu, ..FnoConfig::default() };
        let w = SurrogateWeights::init(cfg, 3).unwrap();
        let mut eng = cfg.engine(dims.0, dims.1, dims.2).unwrap();
        // warm
        let _ = gcs_surrogate::model::fno_forward(&w, &input, &mut eng).unwrap();
        let t0 = Instant::now();
        let n = 5;
        for _ in 0..n { let _ = gcs_surrogate::model::fno_forward(&w, &input, &mut eng).unwrap(); }
        let fwd = t0.elapsed().as_secs_f64() / n as f64;
        let t0 = Instant::now();
        for _ in 0..n { let _ = sample_grad(&w, &input, &target, dims).unwrap(); }
        let fb = t0.elapsed().as_secs_f64() / n as f64;
        println!("width {width:2}: forward {:.1} ms | fwd+bwd {:.1} ms", fwd * 1e3, fb * 1e3);
    }
}
