use gcs_core::GridSpec;
use gcs_geomodel::*;
use gcs_sim::*;
use std::time::Instant;

fn main() {
    let grid = GridSpec::default();
    let prior = ChannelPriorSpec::default();
    let cfg = SimConfig::default();
    let fields: Vec<_> = (0..8).map(|s| sample_realization(&prior, &grid, s).unwrap()).collect();
    for f in &fields[..2] { let _ = run_forward(f, &cfg).unwrap(); }
    let t0 = Instant::now();
    for f in &fields { let _ = run_forward(f, &cfg).unwrap(); }
    println!("hf run_forward: {:.1} ms/member", t0.elapsed().as_secs_f64() / 8.0 * 1e3);
}
