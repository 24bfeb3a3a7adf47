//! Truncated 3D spectral transforms and their adjoints.
//!
//! Real fields live on an (nx, ny, nt) grid flattened as
//! `cell = (iy * nx + ix) * nt + it`. The forward transform is the
//! unnormalized DFT over all three axes restricted to the retained mode set;
//! the inverse carries the 1/(nx*ny*nt) factor, assumes Hermitian symmetry
//! over the time axis, and returns the real part. Only non-negative time
//! frequencies enter the working buffers, which halves the spectral storage.
//!
//! Retained modes are the four (±x, ±y) corner blocks crossed with time bins
//! 0..kt, enumerated as `((corner * kx + mx) * ky + my) * kt + mt` with
//! corner = 2 * x_block + y_block; block 1 holds the negative frequencies.
//!
//! Adjoints are with respect to the real inner product (complex tensors read
//! as interleaved real pairs), so every routine here plugs directly into
//! reverse-mode differentiation. Time transforms of real data are batched in
//! pairs through one complex FFT.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::SurrogateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpectralDims {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub kx: usize,
    pub ky: usize,
    pub kt: usize,
}

impl SpectralDims {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let ok = |k: usize, n: usize| k >= 1 && 2 * k <= n;
        if !ok(self.kx, self.nx) || !ok(self.ky, self.ny) || !ok(self.kt, self.nt) {
            return Err(SurrogateError::Shape(format!(
                "retained modes ({}, {}, {}) must be >= 1 and at most half of ({}, {}, {})",
                self.kx, self.ky, self.kt, self.nx, self.ny, self.nt
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    /// Retained coefficient count: 4 corner blocks of kx * ky * kt.
    pub fn n_modes(&self) -> usize {
        4 * self.kx * self.ky * self.kt
    }

    fn norm(&self) -> f64 {
        (self.nx * self.ny * self.nt) as f64
    }
}

/// Plans and scratch for one (nx, ny, nt, kx, ky, kt) signature. Not Sync;
/// each worker owns its engine.
pub struct FftEngine {
    pub dims: SpectralDims,
    fft_t_fwd: Arc<dyn Fft<f64>>,
    fft_t_inv: Arc<dyn Fft<f64>>,
    fft_x_fwd: Arc<dyn Fft<f64>>,
    fft_x_inv: Arc<dyn Fft<f64>>,
    fft_y_fwd: Arc<dyn Fft<f64>>,
    fft_y_inv: Arc<dyn Fft<f64>>,
    /// Grid (ix, iy) of each retained (corner, mx, my), corner-major.
    corner_xy: Vec<(usize, usize)>,
    /// Half-spectrum working buffer, nx * ny * kt, laid out (iy*nx+ix)*kt+it.
    spec: Vec<Complex64>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FftEngine {
    pub fn new(dims: SpectralDims) -> Result<Self, SurrogateError> {
        dims.validate()?;
        let mut planner = FftPlanner::new();
        let fft_t_fwd = planner.plan_fft_forward(dims.nt);
        let fft_t_inv = planner.plan_fft_inverse(dims.nt);
        let fft_x_fwd = planner.plan_fft_forward(dims.nx);
        let fft_x_inv = planner.plan_fft_inverse(dims.nx);
        let fft_y_fwd = planner.plan_fft_forward(dims.ny);
        let fft_y_inv = planner.plan_fft_inverse(dims.ny);
        let scratch_len = [&fft_t_fwd, &fft_t_inv, &fft_x_fwd, &fft_x_inv, &fft_y_fwd, &fft_y_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);

        let mut corner_xy = Vec::with_capacity(4 * dims.kx * dims.ky);
        for corner in 0..4usize {
            for mx in 0..dims.kx {
                for my in 0..dims.ky {
                    let ix = if corner / 2 == 0 { mx } else { dims.nx - dims.kx + mx };
                    let iy = if corner % 2 == 0 { my } else { dims.ny - dims.ky + my };
                    corner_xy.push((ix, iy));
                }
            }
        }

        Ok(FftEngine {
            dims,
            fft_t_fwd,
            fft_t_inv,
            fft_x_fwd,
            fft_x_inv,
            fft_y_fwd,
            fft_y_inv,
            corner_xy,
            spec: vec![Complex64::ZERO; dims.nx * dims.ny * dims.kt],
            line: vec![Complex64::ZERO; dims.nt.max(dims.nx).max(dims.ny)],
            scratch: vec![Complex64::ZERO; scratch_len],
        })
    }

    #[inline]
    fn spec_idx(&self, ix: usize, iy: usize, it: usize) -> usize {
        (iy * self.dims.nx + ix) * self.dims.kt + it
    }

    /// Forward t-transform of all real lines, keeping bins 0..kt; pairs of
    /// lines share one complex FFT. `scale2` doubles bins 1..kt (used by the
    /// inverse adjoint).
    fn t_forward_real(&mut self, x: &[f64], scale: f64, scale2: bool) {
        let d = self.dims;
        let n_lines = d.nx * d.ny;
        let mut s = 0;
        while s < n_lines {
            let paired = s + 1 < n_lines;
            {
                let a = &x[s * d.nt..(s + 1) * d.nt];
                if paired {
                    let b = &x[(s + 1) * d.nt..(s + 2) * d.nt];
                    for t in 0..d.nt {
                        self.line[t] = Complex64::new(a[t], b[t]);
                    }
                } else {
                    for t in 0..d.nt {
                        self.line[t] = Complex64::new(a[t], 0.0);
                    }
                }
            }
            self.fft_t_fwd.process_with_scratch(&mut self.line[..d.nt], &mut self.scratch);
            for t in 0..d.kt {
                let z = self.line[t];
                let zm = if t == 0 { self.line[0] } else { self.line[d.nt - t] };
                let f = if scale2 && t > 0 { 2.0 * scale } else { scale };
                // unpack the two real-line spectra from the packed transform
                let xa = Complex64::new(0.5 * (z.re + zm.re), 0.5 * (z.im - zm.im));
                self.spec[s * d.kt + t] = f * xa;
                if paired {
                    let xb = Complex64::new(0.5 * (z.im + zm.im), 0.5 * (zm.re - z.re));
                    self.spec[(s + 1) * d.kt + t] = f * xb;
                }
            }
            s += 2;
        }
    }

    /// x-axis transform of every (iy, it < kt) line in the working buffer.
    fn x_pass(&mut self, inverse: bool) {
        let d = self.dims;
        let fft = if inverse { self.fft_x_inv.clone() } else { self.fft_x_fwd.clone() };
        for iy in 0..d.ny {
            for it in 0..d.kt {
                for ix in 0..d.nx {
                    self.line[ix] = self.spec[self.spec_idx(ix, iy, it)];
                }
                fft.process_with_scratch(&mut self.line[..d.nx], &mut self.scratch);
                for ix in 0..d.nx {
                    let idx = self.spec_idx(ix, iy, it);
                    self.spec[idx] = self.line[ix];
                }
            }
        }
    }

    /// y-axis transform restricted to the retained x columns.
    fn y_pass(&mut self, inverse: bool) {
        let d = self.dims;
        let fft = if inverse { self.fft_y_inv.clone() } else { self.fft_y_fwd.clone() };
        let columns: Vec<usize> = (0..d.kx).chain(d.nx - d.kx..d.nx).collect();
        for &ix in &columns {
            for it in 0..d.kt {
                for iy in 0..d.ny {
                    self.line[iy] = self.spec[self.spec_idx(ix, iy, it)];
                }
                fft.process_with_scratch(&mut self.line[..d.ny], &mut self.scratch);
                for iy in 0..d.ny {
                    let idx = self.spec_idx(ix, iy, it);
                    self.spec[idx] = self.line[iy];
                }
            }
        }
    }

    fn gather(&self, out: &mut [Complex64], stride: usize, offset: usize) {
        let d = self.dims;
        for (cm, &(ix, iy)) in self.corner_xy.iter().enumerate() {
            for mt in 0..d.kt {
                out[(cm * d.kt + mt) * stride + offset] = self.spec[self.spec_idx(ix, iy, mt)];
            }
        }
    }

    fn scatter(&mut self, z: &[Complex64], stride: usize, offset: usize) {
        let d = self.dims;
        self.spec.fill(Complex64::ZERO);
        for (cm, &(ix, iy)) in self.corner_xy.iter().enumerate() {
            for mt in 0..d.kt {
                let idx = self.spec_idx(ix, iy, mt);
                self.spec[idx] = z[(cm * d.kt + mt) * stride + offset];
            }
        }
    }

    /// Unnormalized forward DFT restricted to the retained modes.
    /// `out[mode * stride + offset]` receives mode `mode`.
    pub fn forward_retained(&mut self, x: &[f64], out: &mut [Complex64], stride: usize, offset: usize) {
        debug_assert_eq!(x.len(), self.dims.n_cells());
        self.t_forward_real(x, 1.0, false);
        self.x_pass(false);
        self.y_pass(false);
        self.gather(out, stride, offset);
    }

    /// Adjoint of [`Self::forward_retained`] under the real inner product:
    /// embed the retained coefficients, apply the unnormalized inverse DFT,
    /// take the real part.
    pub fn forward_retained_adjoint(&mut self, g: &[Complex64], out: &mut [f64], stride: usize, offset: usize) {
        debug_assert_eq!(out.len(), self.dims.n_cells());
        self.scatter(g, stride, offset);
        self.y_pass(true);
        self.x_pass(true);
        // t-axis: unnormalized inverse of the zero-padded kept bins, real part
        let d = self.dims;
        for s in 0..d.nx * d.ny {
            for t in 0..d.nt {
                self.line[t] = if t < d.kt { self.spec[s * d.kt + t] } else { Complex64::ZERO };
            }
            self.fft_t_inv.process_with_scratch(&mut self.line[..d.nt], &mut self.scratch);
            for t in 0..d.nt {
                out[s * d.nt + t] = self.line[t].re;
            }
        }
    }

    /// Normalized inverse DFT of the retained modes: Hermitian-extend over
    /// the time axis, invert, keep the real part, scale by 1/(nx*ny*nt).
    pub fn inverse_from_retained(&mut self, z: &[Complex64], out: &mut [f64], stride: usize, offset: usize) {
        debug_assert_eq!(out.len(), self.dims.n_cells());
        self.scatter(z, stride, offset);
        self.y_pass(true);
        self.x_pass(true);
        let d = self.dims;
        let scale = 1.0 / d.norm();
        for s in 0..d.nx * d.ny {
            self.line[..d.nt].fill(Complex64::ZERO);
            for t in 0..d.kt {
                let v = self.spec[s * d.kt + t];
                self.line[t] = v;
                if t > 0 {
                    self.line[d.nt - t] = v.conj();
                }
            }
            self.fft_t_inv.process_with_scratch(&mut self.line[..d.nt], &mut self.scratch);
            for t in 0..d.nt {
                out[s * d.nt + t] = scale * self.line[t].re;
            }
        }
    }

    /// Adjoint of [`Self::inverse_from_retained`]: a scaled forward transform
    /// of the (real) cotangent with bins 1..kt doubled by the Hermitian fold.
    pub fn inverse_from_retained_adjoint(&mut self, g: &[f64], out: &mut [Complex64], stride: usize, offset: usize) {
        debug_assert_eq!(g.len(), self.dims.n_cells());
        let scale = 1.0 / self.dims.norm();
        self.t_forward_real(g, scale, true);
        self.x_pass(false);
        self.y_pass(false);
        self.gather(out, stride, offset);
    }
}

thread_local! {
    static ENGINE_CACHE: std::cell::RefCell<std::collections::HashMap<SpectralDims, FftEngine>> =
        std::cell::RefCell::new(std::collections::HashMap::new());
}

/// Run `f` with a worker-local engine for these dims, building it on first
/// use. Saves replanning in evaluation-heavy loops.
pub fn with_engine<R>(dims: SpectralDims, f: impl FnOnce(&mut FftEngine) -> R) -> Result<R, SurrogateError> {
    dims.validate()?;
    ENGINE_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        if !cache.contains_key(&dims) {
            cache.insert(dims, FftEngine::new(dims)?);
        }
        Ok(f(cache.get_mut(&dims).expect("just inserted")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims_small() -> SpectralDims {
        SpectralDims { nx: 8, ny: 6, nt: 10, kx: 3, ky: 2, kt: 3 }
    }

    fn random_real(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_modes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Naive unnormalized 3D DFT at one frequency triple.
    fn dft_oracle(x: &[f64], d: SpectralDims, fx: usize, fy: usize, ft: usize) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for iy in 0..d.ny {
            for ix in 0..d.nx {
                for it in 0..d.nt {
                    let phase = -std::f64::consts::TAU
                        * (fx as f64 * ix as f64 / d.nx as f64
                            + fy as f64 * iy as f64 / d.ny as f64
                            + ft as f64 * it as f64 / d.nt as f64);
                    acc += x[(iy * d.nx + ix) * d.nt + it] * Complex64::new(phase.cos(), phase.sin());
                }
            }
        }
        acc
    }

    #[test]
    fn forward_matches_naive_dft_on_all_retained_modes() {
        let d = dims_small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_real(&mut rng, d.n_cells());
        let mut eng = FftEngine::new(d).unwrap();
        let mut out = vec![Complex64::ZERO; d.n_modes()];
        eng.forward_retained(&x, &mut out, 1, 0);
        let mut mode = 0usize;
        for corner in 0..4 {
            for mx in 0..d.kx {
                for my in 0..d.ky {
                    let fx = if corner / 2 == 0 { mx } else { d.nx - d.kx + mx };
                    let fy = if corner % 2 == 0 { my } else { d.ny - d.ky + my };
                    for mt in 0..d.kt {
                        let want = dft_oracle(&x, d, fx, fy, mt);
                        let got = out[mode];
                        assert!(
                            (got - want).norm() <= 1e-9 * want.norm().max(1.0),
                            "mode ({fx},{fy},{mt}): {got} vs {want}"
                        );
                        mode += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn forward_adjoint_identity() {
        let d = dims_small();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut eng = FftEngine::new(d).unwrap();
        for _ in 0..4 {
            let x = random_real(&mut rng, d.n_cells());
            let y = random_modes(&mut rng, d.n_modes());
            let mut ax = vec![Complex64::ZERO; d.n_modes()];
            eng.forward_retained(&x, &mut ax, 1, 0);
            let mut aty = vec![0.0; d.n_cells()];
            eng.forward_retained_adjoint(&y, &mut aty, 1, 0);
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() <= 1e-10 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn inverse_adjoint_identity() {
        let d = dims_small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut eng = FftEngine::new(d).unwrap();
        for _ in 0..4 {
            let z = random_modes(&mut rng, d.n_modes());
            let g = random_real(&mut rng, d.n_cells());
            let mut bz = vec![0.0; d.n_cells()];
            eng.inverse_from_retained(&z, &mut bz, 1, 0);
            let mut btg = vec![Complex64::ZERO; d.n_modes()];
            eng.inverse_from_retained_adjoint(&g, &mut btg, 1, 0);
            let lhs: f64 = bz.iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = z.iter().zip(&btg).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() <= 1e-10 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn single_retained_cosine_round_trips_through_identity_mixing() {
        // inverse(forward(x)) acts as an ideal low-pass; a pure retained
        // cosine must come back unchanged
        let d = dims_small();
        let mut eng = FftEngine::new(d).unwrap();
        let (fx, fy, ft) = (1usize, 1usize, 2usize);
        let x: Vec<f64> = (0..d.n_cells())
            .map(|c| {
                let it = c % d.nt;
                let ix = (c / d.nt) % d.nx;
                let iy = c / (d.nt * d.nx);
                (std::f64::consts::TAU
                    * (fx as f64 * ix as f64 / d.nx as f64
                        + fy as f64 * iy as f64 / d.ny as f64
                        + ft as f64 * it as f64 / d.nt as f64))
                    .cos()
            })
            .collect();
        let mut modes = vec![Complex64::ZERO; d.n_modes()];
        eng.forward_retained(&x, &mut modes, 1, 0);
        let mut back = vec![0.0; d.n_cells()];
        eng.inverse_from_retained(&modes, &mut back, 1, 0);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn non_retained_mode_is_filtered_out() {
        let d = dims_small();
        let mut eng = FftEngine::new(d).unwrap();
        // x frequency kx + 1: neither it nor its mirror lies in a corner
        // (the negative block reaches -kx, so |f| = kx is half-retained)
        let fx = d.kx + 1;
        assert!(fx < d.nx - d.kx);
        let x: Vec<f64> = (0..d.n_cells())
            .map(|c| {
                let ix = (c / d.nt) % d.nx;
                (std::f64::consts::TAU * fx as f64 * ix as f64 / d.nx as f64).cos()
            })
            .collect();
        let mut modes = vec![Complex64::ZERO; d.n_modes()];
        eng.forward_retained(&x, &mut modes, 1, 0);
        let mut back = vec![0.0; d.n_cells()];
        eng.inverse_from_retained(&modes, &mut back, 1, 0);
        let max = back.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-10, "leakage {max}");
    }

    #[test]
    fn strided_access_matches_contiguous() {
        let d = dims_small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_real(&mut rng, d.n_cells());
        let mut eng = FftEngine::new(d).unwrap();
        let mut a = vec![Complex64::ZERO; d.n_modes()];
        eng.forward_retained(&x, &mut a, 1, 0);
        let mut b = vec![Complex64::ZERO; d.n_modes() * 3];
        eng.forward_retained(&x, &mut b, 3, 1);
        for m in 0..d.n_modes() {
            assert_eq!(a[m], b[m * 3 + 1]);
        }
    }
}
