//! Centerline geometry: sinusoidal channel paths rasterized to per-cell
//! distance fields. All lengths are in cell units; cell (ix, iy) sits at
//! (ix + 0.5, iy + 0.5).

use gcs_core::GridSpec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::prior::ChannelPriorSpec;

const POLYLINE_STEP: f64 = 0.5;

/// One sampled channel: geometry plus the widths used at rasterization.
pub struct ChannelPath {
    pub points: Vec<(f64, f64)>,
    pub half_width: f64,
    pub levee_width: f64,
}

fn sample_range(rng: &mut ChaCha8Rng, r: crate::prior::UniformRange) -> f64 {
    if r.hi > r.lo {
        rng.random_range(r.lo..r.hi)
    } else {
        r.lo
    }
}

/// Sample every channel (and avulsion branch) of one realization. Branches
/// share the parent's widths and diverge from a point on the parent path.
pub fn sample_channels(prior: &ChannelPriorSpec, grid: &GridSpec, rng: &mut ChaCha8Rng) -> Vec<ChannelPath> {
    let n = if prior.n_channels.1 > prior.n_channels.0 {
        rng.random_range(prior.n_channels.0..=prior.n_channels.1)
    } else {
        prior.n_channels.0
    };
    let (nx, ny) = (grid.nx as f64, grid.ny as f64);
    let diag = nx.hypot(ny);
    let orient = Normal::new(prior.orientation_deg.mean, prior.orientation_deg.std.max(1e-12)).unwrap();

    let mut out = Vec::new();
    for _ in 0..n {
        let theta_deg: f64 = orient.sample(rng);
        let theta = theta_deg.to_radians();
        let dir = (theta.cos(), theta.sin());
        let perp = (-theta.sin(), theta.cos());
        // offset along the perp axis, spanning the domain's projected extent
        let span = nx * perp.0.abs() + ny * perp.1.abs();
        let offset = rng.random_range(-0.45 * span..0.45 * span);
        let amplitude = sample_range(rng, prior.amplitude_cells);
        let wavelength = sample_range(rng, prior.wavelength_cells);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let width = sample_range(rng, prior.width_cells);
        let levee = sample_range(rng, prior.levee_width_cells);

        let anchor = (nx / 2.0 + offset * perp.0, ny / 2.0 + offset * perp.1);
        let s_max = 0.75 * diag + amplitude;
        let trace = |s: f64| -> (f64, f64) {
            let lateral = amplitude * (std::f64::consts::TAU * s / wavelength + phase).sin();
            (anchor.0 + s * dir.0 + lateral * perp.0, anchor.1 + s * dir.1 + lateral * perp.1)
        };
        let mut points = Vec::with_capacity((2.0 * s_max / POLYLINE_STEP) as usize + 2);
        let mut s = -s_max;
        while s <= s_max {
            points.push(trace(s));
            s += POLYLINE_STEP;
        }
        out.push(ChannelPath { points, half_width: width / 2.0, levee_width: levee });

        if rng.random_range(0.0..1.0) < prior.avulsion_probability {
            // branch: keep the parent up to the split, then diverge
            let s_split = rng.random_range(-0.25 * s_max..0.25 * s_max);
            let sign: f64 = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
            let dtheta = sign * rng.random_range(12.0..35.0f64).to_radians();
            let theta_b = theta + dtheta;
            let dir_b = (theta_b.cos(), theta_b.sin());
            let perp_b = (-theta_b.sin(), theta_b.cos());
            let amp_b = sample_range(rng, prior.amplitude_cells);
            let wav_b = sample_range(rng, prior.wavelength_cells);
            let phase_b = rng.random_range(0.0..std::f64::consts::TAU);
            let start = trace(s_split);
            let mut branch = Vec::new();
            let mut t = 0.0;
            while t <= 1.25 * s_max {
                let lateral = amp_b * ((std::f64::consts::TAU * t / wav_b + phase_b).sin() - phase_b.sin());
                branch.push((start.0 + t * dir_b.0 + lateral * perp_b.0, start.1 + t * dir_b.1 + lateral * perp_b.1));
                t += POLYLINE_STEP;
            }
            out.push(ChannelPath { points: branch, half_width: width / 2.0, levee_width: levee });
        }
    }
    out
}

/// Squared distance from every cell center to the nearest polyline point,
/// computed only within `reach` cells of the path (+inf elsewhere).
pub fn distance_field(path: &ChannelPath, grid: &GridSpec, reach: f64) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut d2 = vec![f64::INFINITY; nx * ny];
    let r = reach.ceil() as isize + 1;
    for &(px, py) in &path.points {
        let cx = (px - 0.5).round() as isize;
        let cy = (py - 0.5).round() as isize;
        for iy in (cy - r).max(0)..=(cy + r).min(ny as isize - 1) {
            for ix in (cx - r).max(0)..=(cx + r).min(nx as isize - 1) {
                let x = ix as f64 + 0.5;
                let y = iy as f64 + 0.5;
                let dist2 = (x - px) * (x - px) + (y - py) * (y - py);
                let cell = iy as usize * nx + ix as usize;
                if dist2 < d2[cell] {
                    d2[cell] = dist2;
                }
            }
        }
    }
    d2
}
