//! Independent reference solver: Fourier spectral discretization of the
//! elastic wave equation for the mass flux, integrated with Crank-Nicolson.
//!
//! Per discrete wave vector the state is the complex 4-vector
//! `Ĵ = (ĵx, ĵy, ∂t ĵx, ∂t ĵy)` obeying
//!
//! ```text
//!   ∂tt ĵx = -(a²kx² + b²ky²) ĵx - d²kxky ĵy + ∂t F̂x / ρ0
//!   ∂tt ĵy = -d²kxky ĵx - (a²ky² + b²kx²) ĵy + ∂t F̂y / ρ0
//! ```
//!
//! with `a² = (λ+2μ)/ρ0`, `b² = μ/ρ0`, `d² = (λ+μ)/ρ0`. The trapezoidal
//! update is a Cayley transform of a lossless oscillator, so free modes keep
//! their modulus exactly and Δt = Δx = 1 is usable at any wave vector.
//! Periodic domains only, by construction.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::sources::{ricker_dt, SourceSpec};

/// Crank-Nicolson system matrices for one wave vector: `M Ĵ_{n+1} = N (Ĵ_n, Ĝ)`
/// with `Ĝ = (∂t F̂_n + ∂t F̂_{n+1})/ρ0` and Δt = 1.
pub fn assemble_cn_matrices(k: [f64; 2], params: &MaterialParams) -> ([[f64; 4]; 4], [[f64; 6]; 4]) {
    let a2 = params.v_p * params.v_p;
    let b2 = params.v_s * params.v_s;
    let d2 = (params.lambda + params.mu) / params.rho0;
    let [kx, ky] = k;
    let a = a2 * kx * kx + b2 * ky * ky;
    let b = d2 * kx * ky;
    let c = a2 * ky * ky + b2 * kx * kx;

    let m = [
        [1.0, 0.0, -0.5, 0.0],
        [0.0, 1.0, 0.0, -0.5],
        [0.5 * a, 0.5 * b, 1.0, 0.0],
        [0.5 * b, 0.5 * c, 0.0, 1.0],
    ];
    let n = [
        [1.0, 0.0, 0.5, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.5, 0.0, 0.0],
        [-0.5 * a, -0.5 * b, 1.0, 0.0, 0.5, 0.0],
        [-0.5 * b, -0.5 * c, 0.0, 1.0, 0.0, 0.5],
    ];
    (m, n)
}

/// Fold `M⁻¹ N` into a single real 4×6 update, inverted once per wave
/// vector at startup.
fn update_matrix(k: [f64; 2], params: &MaterialParams) -> Result<[[f64; 6]; 4]> {
    let (m, n) = assemble_cn_matrices(k, params);
    let m4 = Matrix4::from_fn(|r, c| m[r][c]);
    let inv = m4
        .try_inverse()
        .ok_or(Error::SingularMatrix(k[0], k[1]))?;
    let mut out = [[0.0; 6]; 4];
    for r in 0..4 {
        for c in 0..6 {
            out[r][c] = (0..4).map(|s| inv[(r, s)] * n[s][c]).sum();
        }
    }
    Ok(out)
}

/// One Crank-Nicolson step for a single wave vector.
pub fn cn_step(update: &[[f64; 6]; 4], j: &[Complex64; 4], g: [Complex64; 2]) -> [Complex64; 4] {
    let input = [j[0], j[1], j[2], j[3], g[0], g[1]];
    std::array::from_fn(|r| {
        input
            .iter()
            .zip(&update[r])
            .map(|(v, w)| v * *w)
            .sum::<Complex64>()
    })
}

/// The spectral solver state on an `nx × ny` periodic grid.
pub struct SpectralOracle {
    nx: usize,
    ny: usize,
    params: MaterialParams,
    update: Vec<[[f64; 6]; 4]>,
    state: Vec<[Complex64; 4]>,
    fft: Fft2,
    buf_x: Vec<Complex64>,
    buf_y: Vec<Complex64>,
    gauss: Option<(SourceSpec, Vec<f64>)>,
    time_step: u64,
}

impl SpectralOracle {
    pub fn new(params: MaterialParams, nx: usize, ny: usize) -> Result<Self> {
        let n = nx * ny;
        let mut update = Vec::with_capacity(n);
        for y in 0..ny {
            for x in 0..nx {
                let k = [wavenumber(x, nx), wavenumber(y, ny)];
                update.push(update_matrix(k, &params)?);
            }
        }
        Ok(Self {
            nx,
            ny,
            params,
            update,
            state: vec![[Complex64::new(0.0, 0.0); 4]; n],
            fft: Fft2::new(nx, ny),
            buf_x: vec![Complex64::new(0.0, 0.0); n],
            buf_y: vec![Complex64::new(0.0, 0.0); n],
            gauss: None,
            time_step: 0,
        })
    }

    pub fn time_step(&self) -> u64 {
        self.time_step
    }

    pub fn state(&self) -> &[[Complex64; 4]] {
        &self.state
    }

    /// Advance one step: transform the analytic `∂t F` (trapezoid of the two
    /// endpoint samples), then apply the cached per-k update.
    pub fn step(&mut self, source: Option<&SourceSpec>) {
        let t = self.time_step as f64;
        let zero = Complex64::new(0.0, 0.0);
        match source {
            Some(spec) => {
                self.ensure_gauss(spec);
                let gauss = &self.gauss.as_ref().unwrap().1;
                let factor = spec.amplitude
                    * (ricker_dt(t, spec.period, spec.t0)
                        + ricker_dt(t + 1.0, spec.period, spec.t0));
                let dir = spec.direction;
                for (i, g) in gauss.iter().enumerate() {
                    let v = factor * g;
                    self.buf_x[i] = Complex64::new(v * dir[0], 0.0);
                    self.buf_y[i] = Complex64::new(v * dir[1], 0.0);
                }
                self.fft.forward(&mut self.buf_x);
                self.fft.forward(&mut self.buf_y);
            }
            None => {
                self.buf_x.fill(zero);
                self.buf_y.fill(zero);
            }
        }
        let inv_rho0 = 1.0 / self.params.rho0;
        for (i, state) in self.state.iter_mut().enumerate() {
            let g = [self.buf_x[i] * inv_rho0, self.buf_y[i] * inv_rho0];
            *state = cn_step(&self.update[i], state, g);
        }
        self.time_step += 1;
    }

    /// Physical mass flux `(jx, jy)`: inverse transform with a check that
    /// the imaginary residue is at round-off level before discarding it.
    pub fn fields(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let jx = self.field_component(0)?;
        let jy = self.field_component(1)?;
        Ok((jx, jy))
    }

    fn field_component(&mut self, component: usize) -> Result<Vec<f64>> {
        for (i, s) in self.state.iter().enumerate() {
            self.buf_x[i] = s[component];
        }
        self.fft.inverse(&mut self.buf_x);
        let max_re = self.buf_x.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let max_im = self.buf_x.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * max_re;
        if max_im > tol && max_im > 1e-300 {
            return Err(Error::ComplexResidue { max_im, tol });
        }
        Ok(self.buf_x.iter().map(|c| c.re).collect())
    }

    /// Largest violation of the conjugate symmetry `Ĵ(-k) = conj Ĵ(k)`,
    /// which real forcing must maintain.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let mut worst = 0.0f64;
        for y in 0..ny {
            for x in 0..nx {
                let i = y * nx + x;
                let j = ((ny - y) % ny) * nx + (nx - x) % nx;
                for c in 0..4 {
                    let d = (self.state[i][c] - self.state[j][c].conj()).norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }

    fn ensure_gauss(&mut self, spec: &SourceSpec) {
        let stale = match &self.gauss {
            Some((cached, _)) => cached != spec,
            None => true,
        };
        if stale {
            let mut g = vec![0.0; self.nx * self.ny];
            for y in 0..self.ny {
                for x in 0..self.nx {
                    g[y * self.nx + x] = spec.spatial(x as f64, y as f64);
                }
            }
            self.gauss = Some((*spec, g));
        }
    }
}

/// Discrete wave number for index `m` of an `n`-periodic grid:
/// `2π m'/n` with `m' ∈ (-n/2, n/2]`.
fn wavenumber(m: usize, n: usize) -> f64 {
    let half = n / 2;
    let signed = if m <= half {
        m as isize
    } else {
        m as isize - n as isize
    };
    2.0 * std::f64::consts::PI * signed as f64 / n as f64
}

/// Minimal 2-D FFT on row-major complex data.
struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    transpose: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(nx);
        let inv_x = planner.plan_fft_inverse(nx);
        let fwd_y = planner.plan_fft_forward(ny);
        let inv_y = planner.plan_fft_inverse(ny);
        let scratch_len = fwd_x
            .get_inplace_scratch_len()
            .max(inv_x.get_inplace_scratch_len())
            .max(fwd_y.get_inplace_scratch_len())
            .max(inv_y.get_inplace_scratch_len());
        Self {
            nx,
            ny,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            transpose: vec![Complex64::new(0.0, 0.0); nx * ny],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    fn forward(&mut self, buf: &mut [Complex64]) {
        self.fwd_x.process_with_scratch(buf, &mut self.scratch);
        self.columns(buf, true);
    }

    /// Inverse transform including the `1/(nx ny)` normalization.
    fn inverse(&mut self, buf: &mut [Complex64]) {
        self.inv_x.process_with_scratch(buf, &mut self.scratch);
        self.columns(buf, false);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn columns(&mut self, buf: &mut [Complex64], forward: bool) {
        let (nx, ny) = (self.nx, self.ny);
        for y in 0..ny {
            for x in 0..nx {
                self.transpose[x * ny + y] = buf[y * nx + x];
            }
        }
        let fft = if forward { &self.fwd_y } else { &self.inv_y };
        fft.process_with_scratch(&mut self.transpose, &mut self.scratch);
        for x in 0..nx {
            for y in 0..ny {
                buf[y * nx + x] = self.transpose[x * ny + y];
            }
        }
    }
}
