//! The lattice Boltzmann update for the elastic solid model.
//!
//! One time step performs, in order: moment recovery from the streamed
//! distributions, the centered density-gradient force, source assembly
//! (elastic gradient + external force - absorbing damping), equilibrium
//! construction, BGK collision with the second-order forcing factor
//! `(1 - Δt/2τ)`, streaming, and boundary application.
//!
//! The moment convention is the standard second-order forcing scheme:
//! `j = Σ f c + (Δt/2) S`, and the equilibrium is built with this `j` as its
//! first moment. Where a damping term `-A j` is active the recovery solves
//! the resulting linear relation for `j` in closed form, so
//! `j = Σ f c + (Δt/2) S` holds exactly with the total source.
//!
//! Fields are stored one plane per direction (row-major within a plane);
//! streaming is a gather from the read buffer, so every pass is a
//! race-free row-parallel map.

use itertools::izip;
use rayon::prelude::*;

use crate::boundaries::{self, BoundaryPlan, BoundarySpec};
use crate::error::{Error, Result};
use crate::lattice::{B2, OPPOSITE, Q, VELOCITIES, WEIGHTS};
use crate::material::MaterialParams;
use crate::sources::SourceSpec;

/// Per-node fields on an `nx × ny` grid, row-major (`idx = y·nx + x`).
#[derive(Debug, Clone)]
pub struct FieldState {
    pub nx: usize,
    pub ny: usize,
    /// Distributions, one plane per direction.
    pub f: [Vec<f64>; Q],
    /// Density, `Σ_i f_i`.
    pub rho: Vec<f64>,
    /// Mass flux with the half-force correction.
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    /// Second moment `P_ab = Σ_i f_i c_ia c_ib`.
    pub pxx: Vec<f64>,
    pub pxy: Vec<f64>,
    pub pyy: Vec<f64>,
    /// Total source, `(μ-λ)/ρ0 ∂ρ + F - A j`.
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub time_step: u64,
}

impl FieldState {
    fn new(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        Self {
            nx,
            ny,
            f: std::array::from_fn(|_| vec![0.0; n]),
            rho: vec![0.0; n],
            jx: vec![0.0; n],
            jy: vec![0.0; n],
            pxx: vec![0.0; n],
            pxy: vec![0.0; n],
            pyy: vec![0.0; n],
            sx: vec![0.0; n],
            sy: vec![0.0; n],
            time_step: 0,
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.nx + x
    }

    pub fn total_density(&self) -> f64 {
        self.rho.iter().sum()
    }
}

/// Node values handed to [`Simulation::seed`]; the stress is given as the
/// deviation `P^n = P - ρ b^2 δ` (zero in the quiescent state).
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeInit {
    pub rho: f64,
    pub jx: f64,
    pub jy: f64,
    pub pn_xx: f64,
    pub pn_xy: f64,
    pub pn_yy: f64,
}

/// Equilibrium distributions for density `rho`, mass flux `j` and stress
/// deviation `pn = (pn_xx, pn_xy, pn_yy)`. Linear in all arguments; its
/// moments reproduce `(ρ, j, P^n + ρb²δ)` and the third moment
/// `b²(j_a δ_bc + j_b δ_ac + j_c δ_ab)` by lattice symmetry.
#[inline]
pub fn equilibrium(rho: f64, j: [f64; 2], pn: [f64; 3]) -> [f64; Q] {
    let [jx, jy] = j;
    let [pn_xx, pn_xy, pn_yy] = pn;
    // 1/b² = 3, 1/(2b⁴) = 4.5 with b² = 1/3; the per-direction contractions
    // below are the expanded form of w_i (ρ + j·c/b² + P^n:(cc - b²δ)/2b⁴).
    let trace_term = -1.5 * (pn_xx + pn_yy);
    let axis_x = 1.5 * (2.0 * pn_xx - pn_yy);
    let axis_y = 1.5 * (2.0 * pn_yy - pn_xx);
    let diag_sum = 3.0 * (pn_xx + pn_yy);
    let diag_cross = 9.0 * pn_xy;
    [
        WEIGHTS[0] * (rho + trace_term),
        WEIGHTS[1] * (rho + 3.0 * jx + axis_x),
        WEIGHTS[2] * (rho + 3.0 * jy + axis_y),
        WEIGHTS[3] * (rho - 3.0 * jx + axis_x),
        WEIGHTS[4] * (rho - 3.0 * jy + axis_y),
        WEIGHTS[5] * (rho + 3.0 * (jx + jy) + diag_sum + diag_cross),
        WEIGHTS[6] * (rho + 3.0 * (-jx + jy) + diag_sum - diag_cross),
        WEIGHTS[7] * (rho - 3.0 * (jx + jy) + diag_sum + diag_cross),
        WEIGHTS[8] * (rho + 3.0 * (jx - jy) + diag_sum - diag_cross),
    ]
}

/// Directional projection of a source vector, `S_i = w_i c_i·S / b²`.
/// Zeroth and second moments vanish; the first moment returns `S`.
#[inline]
pub fn discrete_source(s: [f64; 2]) -> [f64; Q] {
    let [sx, sy] = s;
    let ax = 3.0 * WEIGHTS[1] * sx;
    let ay = 3.0 * WEIGHTS[2] * sy;
    let dp = 3.0 * WEIGHTS[5] * (sx + sy);
    let dm = 3.0 * WEIGHTS[5] * (sx - sy);
    [0.0, ax, ay, -ax, -ay, dp, -dm, -dp, dm]
}

/// BGK collision with second-order forcing:
/// `f* = f - (Δt/τ)(f - f^eq) + Δt (1 - Δt/2τ) S_i`.
#[inline]
pub fn collide_node(f: &[f64; Q], feq: &[f64; Q], si: &[f64; Q], tau: f64) -> [f64; Q] {
    let omega = 1.0 / tau;
    let force_factor = 1.0 - 0.5 * omega;
    std::array::from_fn(|i| f[i] - omega * (f[i] - feq[i]) + force_factor * si[i])
}

/// Zeroth, first and second moments of one node's distributions, with the
/// half-force correction on the flux: `ρ = Σf`, `j = Σ f c + (Δt/2) S`,
/// `P = Σ f c c`.
#[inline]
pub fn recover_node(f: &[f64; Q], s: [f64; 2]) -> (f64, [f64; 2], [f64; 3]) {
    let rho = f.iter().sum::<f64>();
    let m1x = f[1] - f[3] + f[5] - f[6] - f[7] + f[8];
    let m1y = f[2] - f[4] + f[5] + f[6] - f[7] - f[8];
    let pxx = f[1] + f[3] + f[5] + f[6] + f[7] + f[8];
    let pyy = f[2] + f[4] + f[5] + f[6] + f[7] + f[8];
    let pxy = f[5] - f[6] + f[7] - f[8];
    (
        rho,
        [m1x + 0.5 * s[0], m1y + 0.5 * s[1]],
        [pxx, pxy, pyy],
    )
}

/// Centered second-order density gradient; periodic edges wrap, non-periodic
/// edges fall back to one-sided first-order differences.
pub fn density_gradient(
    rho: &[f64],
    nx: usize,
    ny: usize,
    periodic_x: bool,
    periodic_y: bool,
    gx: &mut [f64],
    gy: &mut [f64],
) {
    assert_eq!(rho.len(), nx * ny);
    let rows: Vec<_> = izip!(gx.chunks_mut(nx), gy.chunks_mut(nx))
        .enumerate()
        .collect();
    rows.into_par_iter().for_each(|(y, (gx_row, gy_row))| {
        let (y_up, y_dn, y_scale) = stencil_rows(y, ny, periodic_y);
        let row = &rho[y * nx..(y + 1) * nx];
        let row_up = &rho[y_up * nx..y_up * nx + nx];
        let row_dn = &rho[y_dn * nx..y_dn * nx + nx];
        for x in 0..nx {
            gy_row[x] = (row_up[x] - row_dn[x]) * y_scale;
            let (xp, xm, x_scale) = stencil_rows(x, nx, periodic_x);
            gx_row[x] = (row[xp] - row[xm]) * x_scale;
        }
    });
}

/// Neighbor indices and scale for one axis: centered `(i+1, i-1, 1/2)` in
/// the interior, one-sided first order at non-periodic edges.
#[inline]
fn stencil_rows(i: usize, n: usize, periodic: bool) -> (usize, usize, f64) {
    if periodic {
        ((i + 1) % n, (i + n - 1) % n, 0.5)
    } else if i == 0 {
        (1, 0, 1.0)
    } else if i == n - 1 {
        (n - 1, n - 2, 1.0)
    } else {
        (i + 1, i - 1, 0.5)
    }
}

/// A solver instance: material, boundary plan, and double-buffered state.
pub struct Simulation {
    params: MaterialParams,
    boundary: BoundaryPlan,
    state: FieldState,
    f_next: [Vec<f64>; Q],
    gx: Vec<f64>,
    gy: Vec<f64>,
    cached_gauss: Option<(SourceSpec, Vec<f64>)>,
}

impl Simulation {
    /// Build a simulation seeded with the quiescent stress-free state
    /// `f = f^eq(ρ0, 0, 0)`.
    pub fn new(
        params: MaterialParams,
        nx: usize,
        ny: usize,
        boundary: &BoundarySpec,
    ) -> Result<Self> {
        let plan = BoundaryPlan::new(*boundary, nx, ny)?;
        let n = nx * ny;
        let mut sim = Self {
            params,
            boundary: plan,
            state: FieldState::new(nx, ny),
            f_next: std::array::from_fn(|_| vec![0.0; n]),
            gx: vec![0.0; n],
            gy: vec![0.0; n],
            cached_gauss: None,
        };
        let rho0 = params.rho0;
        sim.seed(|_, _| NodeInit {
            rho: rho0,
            ..NodeInit::default()
        });
        Ok(sim)
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn boundary(&self) -> &BoundarySpec {
        self.boundary.spec()
    }

    /// Replace the boundary layout mid-run (used by the two-phase surface
    /// wave protocol).
    pub fn set_boundary(&mut self, spec: &BoundarySpec) -> Result<()> {
        self.boundary = BoundaryPlan::new(*spec, self.state.nx, self.state.ny)?;
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn set_test_damping(&mut self, plan: BoundaryPlan) {
        self.boundary = plan;
    }

    /// Overwrite the state with equilibrium distributions of the given
    /// per-node macroscopic values.
    pub fn seed(&mut self, init: impl Fn(usize, usize) -> NodeInit) {
        let (nx, ny) = (self.state.nx, self.state.ny);
        for y in 0..ny {
            for x in 0..nx {
                let idx = y * nx + x;
                let v = init(x, y);
                let feq = equilibrium(v.rho, [v.jx, v.jy], [v.pn_xx, v.pn_xy, v.pn_yy]);
                for i in 0..Q {
                    self.state.f[i][idx] = feq[i];
                }
                self.state.rho[idx] = v.rho;
                self.state.jx[idx] = v.jx;
                self.state.jy[idx] = v.jy;
                self.state.pxx[idx] = v.pn_xx + v.rho * B2;
                self.state.pxy[idx] = v.pn_xy;
                self.state.pyy[idx] = v.pn_yy + v.rho * B2;
                self.state.sx[idx] = 0.0;
                self.state.sy[idx] = 0.0;
            }
        }
    }

    /// Set distributions directly (plane per direction) and refresh the
    /// stored moments. For seeding non-equilibrium states in analyses.
    pub fn set_distributions(&mut self, f: [Vec<f64>; Q]) {
        for (dst, src) in self.state.f.iter_mut().zip(f.iter()) {
            assert_eq!(src.len(), dst.len());
            dst.copy_from_slice(src);
        }
        self.refresh_moments();
    }

    /// Recompute `ρ, j, P` from the current distributions with zero source.
    pub fn refresh_moments(&mut self) {
        let state = &mut self.state;
        let n = state.nx * state.ny;
        for idx in 0..n {
            let f: [f64; Q] = std::array::from_fn(|i| state.f[i][idx]);
            let (rho, j, p) = recover_node(&f, [0.0, 0.0]);
            state.rho[idx] = rho;
            state.jx[idx] = j[0];
            state.jy[idx] = j[1];
            state.pxx[idx] = p[0];
            state.pxy[idx] = p[1];
            state.pyy[idx] = p[2];
            state.sx[idx] = 0.0;
            state.sy[idx] = 0.0;
        }
    }

    /// Advance one time step. The external force, if any, is evaluated at
    /// the current step time.
    pub fn step(&mut self, source: Option<&SourceSpec>) -> Result<()> {
        self.recover_moments();
        self.compute_gradient();
        self.assemble_source(source);
        self.collide();
        self.stream_and_apply_boundaries();
        self.check_finite()?;
        self.state.time_step += 1;
        Ok(())
    }

    /// Run `n` steps.
    pub fn run(&mut self, source: Option<&SourceSpec>, n: u64) -> Result<()> {
        for _ in 0..n {
            self.step(source)?;
        }
        Ok(())
    }

    fn recover_moments(&mut self) {
        let state = &mut self.state;
        let nx = state.nx;
        let f = &state.f;
        let rows: Vec<_> = izip!(
            state.rho.chunks_mut(nx),
            state.jx.chunks_mut(nx),
            state.jy.chunks_mut(nx),
            state.pxx.chunks_mut(nx),
            state.pxy.chunks_mut(nx),
            state.pyy.chunks_mut(nx)
        )
        .enumerate()
        .collect();
        rows.into_par_iter()
            .for_each(|(y, (rho, jx, jy, pxx, pxy, pyy))| {
                let base = y * nx;
                for x in 0..nx {
                    let idx = base + x;
                    let f1 = f[1][idx];
                    let f2 = f[2][idx];
                    let f3 = f[3][idx];
                    let f4 = f[4][idx];
                    let f5 = f[5][idx];
                    let f6 = f[6][idx];
                    let f7 = f[7][idx];
                    let f8 = f[8][idx];
                    let diag = f5 + f6 + f7 + f8;
                    rho[x] = f[0][idx] + f1 + f2 + f3 + f4 + diag;
                    // Bare first moment; the half-force correction is added
                    // during source assembly.
                    jx[x] = f1 - f3 + f5 - f6 - f7 + f8;
                    jy[x] = f2 - f4 + f5 + f6 - f7 - f8;
                    pxx[x] = f1 + f3 + diag;
                    pyy[x] = f2 + f4 + diag;
                    pxy[x] = f5 - f6 + f7 - f8;
                }
            });
    }

    fn compute_gradient(&mut self) {
        let spec = self.boundary.spec();
        density_gradient(
            &self.state.rho,
            self.state.nx,
            self.state.ny,
            spec.periodic_x(),
            spec.periodic_y(),
            &mut self.gx,
            &mut self.gy,
        );
    }

    /// Build `S = (μ-λ)/ρ0 ∂ρ + F - A j` and finish the flux recovery.
    /// Inside absorbing layers the damping couples back into `j`; the
    /// closed-form solve keeps `j = Σ f c + (Δt/2) S` exact.
    fn assemble_source(&mut self, source: Option<&SourceSpec>) {
        let t = self.state.time_step as f64;
        let (time_factor, direction) = match source {
            Some(spec) => {
                self.ensure_gauss(spec);
                (
                    spec.amplitude * crate::sources::ricker(t, spec.period, spec.t0),
                    spec.direction,
                )
            }
            None => (0.0, [0.0, 0.0]),
        };
        let gauss = self.cached_gauss.as_ref().map(|(_, g)| g.as_slice());
        let elastic = self.params.gradient_coef();

        let state = &mut self.state;
        let nx = state.nx;
        let a_field = self.boundary.a_field();
        let gx = &self.gx;
        let gy = &self.gy;
        let rows: Vec<_> = izip!(
            state.sx.chunks_mut(nx),
            state.sy.chunks_mut(nx),
            state.jx.chunks_mut(nx),
            state.jy.chunks_mut(nx)
        )
        .enumerate()
        .collect();
        rows.into_par_iter().for_each(|(y, (sx, sy, jx, jy))| {
            let base = y * nx;
            for x in 0..nx {
                let idx = base + x;
                let force = match gauss {
                    Some(g) if time_factor != 0.0 => time_factor * g[idx],
                    _ => 0.0,
                };
                let s0x = elastic * gx[idx] + force * direction[0];
                let s0y = elastic * gy[idx] + force * direction[1];
                let denom = 1.0 + 0.5 * a_field[idx];
                jx[x] = (jx[x] + 0.5 * s0x) / denom;
                jy[x] = (jy[x] + 0.5 * s0y) / denom;
                sx[x] = s0x;
                sy[x] = s0y;
            }
            let a_row = &a_field[base..base + nx];
            boundaries::apply_absorbing(sx, sy, jx, jy, a_row);
        });
    }

    fn collide(&mut self) {
        let state = &mut self.state;
        let nx = state.nx;
        let tau = self.params.tau;
        let rho = &state.rho;
        let jx = &state.jx;
        let jy = &state.jy;
        let pxx = &state.pxx;
        let pxy = &state.pxy;
        let pyy = &state.pyy;
        let sx = &state.sx;
        let sy = &state.sy;

        let mut planes: Vec<&mut [f64]> = state.f.iter_mut().map(|p| p.as_mut_slice()).collect();
        // Split each plane into rows so one task owns one row of all planes.
        let mut rows: Vec<(usize, Vec<&mut [f64]>)> = Vec::new();
        {
            let mut rest: Vec<&mut [f64]> = planes.drain(..).collect();
            let ny = state.ny;
            for y in 0..ny {
                let mut row_planes = Vec::with_capacity(Q);
                let mut remainder = Vec::with_capacity(Q);
                for plane in rest.drain(..) {
                    let (head, tail) = plane.split_at_mut(nx);
                    row_planes.push(head);
                    remainder.push(tail);
                }
                rows.push((y, row_planes));
                rest = remainder;
            }
        }
        rows.into_par_iter().for_each(|(y, mut row_planes)| {
            let base = y * nx;
            for x in 0..nx {
                let idx = base + x;
                let r = rho[idx];
                let feq = equilibrium(
                    r,
                    [jx[idx], jy[idx]],
                    [pxx[idx] - r * B2, pxy[idx], pyy[idx] - r * B2],
                );
                let si = discrete_source([sx[idx], sy[idx]]);
                let f: [f64; Q] = std::array::from_fn(|i| row_planes[i][x]);
                let post = collide_node(&f, &feq, &si, tau);
                for i in 0..Q {
                    row_planes[i][x] = post[i];
                }
            }
        });
    }

    fn stream_and_apply_boundaries(&mut self) {
        let state = &self.state;
        let (nx, ny) = (state.nx, state.ny);
        self.f_next
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, dst)| {
                let src = &state.f[i];
                let [cx, cy] = VELOCITIES[i];
                for y in 0..ny {
                    let sy = (y as isize - cy as isize).rem_euclid(ny as isize) as usize;
                    let dst_row = &mut dst[y * nx..(y + 1) * nx];
                    let src_row = &src[sy * nx..sy * nx + nx];
                    match cx {
                        0 => dst_row.copy_from_slice(src_row),
                        1 => {
                            dst_row[1..].copy_from_slice(&src_row[..nx - 1]);
                            dst_row[0] = src_row[nx - 1];
                        }
                        _ => {
                            dst_row[..nx - 1].copy_from_slice(&src_row[1..]);
                            dst_row[nx - 1] = src_row[0];
                        }
                    }
                }
            });
        boundaries::apply_streaming_rules(&self.boundary, &self.state, &mut self.f_next);
        std::mem::swap(&mut self.state.f, &mut self.f_next);
    }

    /// NaN watchdog: the scheme is linearly unstable away from ν = 0.25 at
    /// high wave numbers, so divergence must fail loudly.
    fn check_finite(&self) -> Result<()> {
        let nx = self.state.nx;
        for plane in &self.state.f {
            // Non-finite values poison a plain sum, so scan only on demand.
            let total: f64 = plane.iter().sum();
            if !total.is_finite() {
                if let Some(idx) = plane.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        x: idx % nx,
                        y: idx / nx,
                        step: self.state.time_step,
                    });
                }
            }
        }
        Ok(())
    }

    fn ensure_gauss(&mut self, spec: &SourceSpec) {
        let stale = match &self.cached_gauss {
            Some((cached, _)) => cached != spec,
            None => true,
        };
        if stale {
            let (nx, ny) = (self.state.nx, self.state.ny);
            let mut g = vec![0.0; nx * ny];
            for y in 0..ny {
                for x in 0..nx {
                    g[y * nx + x] = spec.spatial(x as f64, y as f64);
                }
            }
            self.cached_gauss = Some((*spec, g));
        }
    }
}

/// Seed closure for a plane compression wave travelling along `axis`
/// (0 = x, 1 = y) with `sign = ±1`. `strain` gives the longitudinal strain
/// profile as a function of the coordinate along the axis; flux, density and
/// stress deviation are set consistently for a freely travelling wave:
/// `j = -ρ0 v_P h n̂`, `δρ = -ρ0 h`, `P^n = -2μ h n̂n̂`.
pub fn plane_p_wave(
    params: MaterialParams,
    axis: usize,
    sign: f64,
    strain: impl Fn(f64) -> f64 + Copy,
) -> impl Fn(usize, usize) -> NodeInit + Copy {
    move |x, y| {
        let coord = if axis == 0 { x as f64 } else { y as f64 };
        let h = strain(coord);
        let j = -params.rho0 * params.v_p * h * sign;
        let pn = -2.0 * params.mu * h;
        NodeInit {
            rho: params.rho0 * (1.0 - h),
            jx: if axis == 0 { j } else { 0.0 },
            jy: if axis == 1 { j } else { 0.0 },
            pn_xx: if axis == 0 { pn } else { 0.0 },
            pn_xy: 0.0,
            pn_yy: if axis == 1 { pn } else { 0.0 },
        }
    }
}

/// Seed closure for a plane shear wave travelling along `axis` with
/// `sign = ±1`, polarized along the other axis: `j_t = -ρ0 v_S h`,
/// `P^n_tn = -μ h sign`, no density perturbation.
pub fn plane_s_wave(
    params: MaterialParams,
    axis: usize,
    sign: f64,
    strain: impl Fn(f64) -> f64 + Copy,
) -> impl Fn(usize, usize) -> NodeInit + Copy {
    move |x, y| {
        let coord = if axis == 0 { x as f64 } else { y as f64 };
        let h = strain(coord);
        let j = -params.rho0 * params.v_s * h * sign;
        NodeInit {
            rho: params.rho0,
            jx: if axis == 1 { j } else { 0.0 },
            jy: if axis == 0 { j } else { 0.0 },
            pn_xx: 0.0,
            pn_xy: -params.mu * h * sign,
            pn_yy: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn periodic_sim(nx: usize, ny: usize) -> Simulation {
        Simulation::new(
            MaterialParams::default(),
            nx,
            ny,
            &BoundarySpec::periodic(),
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_rest_state_is_weights() {
        let feq = equilibrium(1.0, [0.0, 0.0], [0.0, 0.0, 0.0]);
        for i in 0..Q {
            assert_relative_eq!(feq[i], WEIGHTS[i]);
        }
    }

    #[test]
    fn equilibrium_pure_flux_moments() {
        let feq = equilibrium(0.0, [1.0, 0.0], [0.0, 0.0, 0.0]);
        let sum: f64 = feq.iter().sum();
        let m1x: f64 = feq
            .iter()
            .zip(&VELOCITIES)
            .map(|(f, c)| f * c[0] as f64)
            .sum();
        assert!(sum.abs() < 1e-15);
        assert_relative_eq!(m1x, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn equilibrium_stress_moments() {
        let feq = equilibrium(1.0, [0.0, 0.0], [0.1, 0.0, -0.1]);
        let mxx: f64 = feq
            .iter()
            .zip(&VELOCITIES)
            .map(|(f, c)| f * (c[0] * c[0]) as f64)
            .sum();
        let myy: f64 = feq
            .iter()
            .zip(&VELOCITIES)
            .map(|(f, c)| f * (c[1] * c[1]) as f64)
            .sum();
        let mxy: f64 = feq
            .iter()
            .zip(&VELOCITIES)
            .map(|(f, c)| f * (c[0] * c[1]) as f64)
            .sum();
        assert_relative_eq!(mxx, 1.0 / 3.0 + 0.1, max_relative = 1e-14);
        assert_relative_eq!(myy, 1.0 / 3.0 - 0.1, max_relative = 1e-14);
        assert!(mxy.abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn equilibrium_moment_identities(
            rho in -2.0f64..2.0,
            jx in -1.0f64..1.0,
            jy in -1.0f64..1.0,
            pn_xx in -0.5f64..0.5,
            pn_xy in -0.5f64..0.5,
            pn_yy in -0.5f64..0.5,
        ) {
            let feq = equilibrium(rho, [jx, jy], [pn_xx, pn_xy, pn_yy]);
            let m0: f64 = feq.iter().sum();
            let mx: f64 = feq.iter().zip(&VELOCITIES).map(|(f, c)| f * c[0] as f64).sum();
            let my: f64 = feq.iter().zip(&VELOCITIES).map(|(f, c)| f * c[1] as f64).sum();
            let mxx: f64 = feq.iter().zip(&VELOCITIES).map(|(f, c)| f * (c[0] * c[0]) as f64).sum();
            let mxy: f64 = feq.iter().zip(&VELOCITIES).map(|(f, c)| f * (c[0] * c[1]) as f64).sum();
            let myy: f64 = feq.iter().zip(&VELOCITIES).map(|(f, c)| f * (c[1] * c[1]) as f64).sum();
            prop_assert!((m0 - rho).abs() < 1e-12);
            prop_assert!((mx - jx).abs() < 1e-12);
            prop_assert!((my - jy).abs() < 1e-12);
            prop_assert!((mxx - (pn_xx + rho / 3.0)).abs() < 1e-12);
            prop_assert!((mxy - pn_xy).abs() < 1e-12);
            prop_assert!((myy - (pn_yy + rho / 3.0)).abs() < 1e-12);
            // Third moment: b²(j_a δ_bc + j_b δ_ac + j_c δ_ab); the xxx
            // component is 3b² j_x = j_x with b² = 1/3, and xxy is b² j_y.
            let mxxx: f64 = feq.iter().zip(&VELOCITIES).map(|(f, c)| f * (c[0] * c[0] * c[0]) as f64).sum();
            let mxxy: f64 = feq.iter().zip(&VELOCITIES).map(|(f, c)| f * (c[0] * c[0] * c[1]) as f64).sum();
            prop_assert!((mxxx - jx).abs() < 1e-12);
            prop_assert!((mxxy - jy / 3.0).abs() < 1e-12);
        }

        #[test]
        fn discrete_source_moment_identities(sx in -1.0f64..1.0, sy in -1.0f64..1.0) {
            let si = discrete_source([sx, sy]);
            let m0: f64 = si.iter().sum();
            let mx: f64 = si.iter().zip(&VELOCITIES).map(|(s, c)| s * c[0] as f64).sum();
            let my: f64 = si.iter().zip(&VELOCITIES).map(|(s, c)| s * c[1] as f64).sum();
            let mxx: f64 = si.iter().zip(&VELOCITIES).map(|(s, c)| s * (c[0] * c[0]) as f64).sum();
            let mxy: f64 = si.iter().zip(&VELOCITIES).map(|(s, c)| s * (c[0] * c[1]) as f64).sum();
            let myy: f64 = si.iter().zip(&VELOCITIES).map(|(s, c)| s * (c[1] * c[1]) as f64).sum();
            prop_assert!(m0.abs() < 1e-15);
            prop_assert!((mx - sx).abs() < 1e-14);
            prop_assert!((my - sy).abs() < 1e-14);
            prop_assert!(mxx.abs() < 1e-15);
            prop_assert!(mxy.abs() < 1e-15);
            prop_assert!(myy.abs() < 1e-15);
        }
    }

    #[test]
    fn discrete_source_examples() {
        assert_eq!(discrete_source([0.0, 0.0]), [0.0; Q]);
        let si = discrete_source([1.0, 0.0]);
        assert_eq!(si[0], 0.0);
    }

    #[test]
    fn collide_examples() {
        let feq = equilibrium(1.0, [0.1, -0.05], [0.01, 0.0, -0.02]);
        let zero = [0.0; Q];
        // f = f^eq with no source is a fixed point.
        let post = collide_node(&feq, &feq, &zero, 0.55);
        for i in 0..Q {
            assert_relative_eq!(post[i], feq[i]);
        }
        // τ = Δt relaxes fully onto the equilibrium.
        let f = equilibrium(1.1, [0.0, 0.2], [0.0, 0.03, 0.0]);
        let post = collide_node(&f, &feq, &zero, 1.0);
        for i in 0..Q {
            assert_relative_eq!(post[i], feq[i]);
        }
        // τ = Δt with a source leaves f^eq + S_i/2.
        let si = discrete_source([0.4, -0.3]);
        let post = collide_node(&f, &feq, &si, 1.0);
        for i in 0..Q {
            assert_relative_eq!(post[i], feq[i] + 0.5 * si[i], max_relative = 1e-14);
        }
    }

    #[test]
    fn recover_examples() {
        let w: [f64; Q] = WEIGHTS;
        let (rho, j, p) = recover_node(&w, [0.0, 0.0]);
        assert_relative_eq!(rho, 1.0, max_relative = 1e-15);
        assert!(j[0].abs() < 1e-16 && j[1].abs() < 1e-16);
        assert_relative_eq!(p[0], 1.0 / 3.0, max_relative = 1e-14);
        assert!(p[1].abs() < 1e-16);
        assert_relative_eq!(p[2], 1.0 / 3.0, max_relative = 1e-14);

        let (_, j, _) = recover_node(&w, [0.01, 0.0]);
        assert_relative_eq!(j[0], 0.005, max_relative = 1e-14);

        // Distributions with bare first moment (0.2, 0).
        let f = equilibrium(1.0, [0.2, 0.0], [0.0, 0.0, 0.0]);
        let (_, j, _) = recover_node(&f, [0.0, 0.0]);
        assert_relative_eq!(j[0], 0.2, max_relative = 1e-13);
        assert!(j[1].abs() < 1e-15);
    }

    #[test]
    fn gradient_of_uniform_field_vanishes() {
        let (nx, ny) = (16, 12);
        let rho = vec![1.0; nx * ny];
        let mut gx = vec![0.0; nx * ny];
        let mut gy = vec![0.0; nx * ny];
        density_gradient(&rho, nx, ny, true, true, &mut gx, &mut gy);
        assert!(gx.iter().chain(gy.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_of_periodic_sine_matches_stencil_symbolics() {
        let (nx, ny) = (32, 4);
        let eps = 0.01;
        let k = 2.0 * std::f64::consts::PI / nx as f64;
        let mut rho = vec![0.0; nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                rho[y * nx + x] = 1.0 + eps * (k * x as f64).sin();
            }
        }
        let mut gx = vec![0.0; nx * ny];
        let mut gy = vec![0.0; nx * ny];
        density_gradient(&rho, nx, ny, true, true, &mut gx, &mut gy);
        // The 3-point stencil applied to sin(kx) gives sin(k)·cos(kx) exactly.
        for x in 0..nx {
            let expected = eps * k.sin() * (k * x as f64).cos();
            assert_relative_eq!(gx[x], expected, max_relative = 1e-12, epsilon = 1e-15);
            assert!(gy[x].abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_of_affine_ramp_is_exact_in_the_interior() {
        let (nx, ny) = (16, 8);
        let (a, b) = (2.0, 0.125);
        let mut rho = vec![0.0; nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                rho[y * nx + x] = a + b * x as f64;
            }
        }
        let mut gx = vec![0.0; nx * ny];
        let mut gy = vec![0.0; nx * ny];
        density_gradient(&rho, nx, ny, false, false, &mut gx, &mut gy);
        for y in 0..ny {
            for x in 0..nx {
                // One-sided first-order edges are exact for affine fields too.
                assert_relative_eq!(gx[y * nx + x], b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn streaming_advects_a_single_population() {
        let mut sim = periodic_sim(12, 10);
        let mut f: [Vec<f64>; Q] = std::array::from_fn(|_| vec![0.0; 120]);
        f[1][5 * 12 + 5] = 1.0;
        sim.set_distributions(f);
        sim.stream_and_apply_boundaries();
        assert_eq!(sim.state().f[1][5 * 12 + 6], 1.0);
        let total: f64 = sim.state().f[1].iter().sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn streaming_leaves_uniform_planes_unchanged() {
        let mut sim = periodic_sim(8, 6);
        let f: [Vec<f64>; Q] = std::array::from_fn(|i| vec![0.1 + 0.01 * i as f64; 48]);
        sim.set_distributions(f.clone());
        sim.stream_and_apply_boundaries();
        for i in 0..Q {
            assert_eq!(sim.state().f[i], f[i]);
        }
    }

    #[test]
    fn streaming_conserves_per_direction_sums_on_periodic_domain() {
        let mut sim = periodic_sim(9, 7);
        let n = 63;
        let mut f: [Vec<f64>; Q] = std::array::from_fn(|i| {
            (0..n).map(|idx| ((i * 31 + idx * 7) % 13) as f64 * 0.01).collect()
        });
        f[0][3] = 0.5;
        let before: Vec<f64> = f.iter().map(|p| p.iter().sum()).collect();
        sim.set_distributions(f);
        sim.stream_and_apply_boundaries();
        for i in 0..Q {
            let after: f64 = sim.state.f[i].iter().sum();
            assert_relative_eq!(after, before[i], max_relative = 1e-15);
        }
    }

    #[test]
    fn rest_state_is_a_fixed_point() {
        let mut sim = periodic_sim(16, 16);
        sim.run(None, 20).unwrap();
        for i in 0..Q {
            for &v in &sim.state().f[i] {
                assert!((v - WEIGHTS[i]).abs() < 1e-12, "direction {i}: {v}");
            }
        }
        for &j in sim.state().jx.iter().chain(sim.state().jy.iter()) {
            assert!(j.abs() < 1e-12);
        }
    }

    #[test]
    fn mass_is_conserved_with_a_source_on_a_periodic_domain() {
        let mut sim = periodic_sim(32, 32);
        let source = SourceSpec::centered(32, 32);
        let initial = sim.state().total_density();
        sim.run(Some(&source), 200).unwrap();
        let total = sim.state().total_density();
        assert_relative_eq!(total, initial, max_relative = 1e-12);
    }

    #[test]
    fn solver_is_linear_in_source_amplitude() {
        let run = |amplitude: f64| -> (Vec<f64>, Vec<f64>) {
            let mut sim = periodic_sim(32, 32);
            let mut source = SourceSpec::centered(32, 32);
            source.amplitude = amplitude;
            sim.run(Some(&source), 50).unwrap();
            (sim.state().jx.clone(), sim.state().jy.clone())
        };
        let (jx1, jy1) = run(1e-3);
        let (jx2, jy2) = run(2e-3);
        let scale: f64 = jx1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for idx in 0..jx1.len() {
            assert!((jx2[idx] - 2.0 * jx1[idx]).abs() <= 1e-12 * scale);
            assert!((jy2[idx] - 2.0 * jy1[idx]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn watchdog_reports_non_finite_nodes() {
        let mut sim = periodic_sim(8, 8);
        let mut f: [Vec<f64>; Q] = std::array::from_fn(|i| sim.state().f[i].clone());
        f[2][3 * 8 + 5] = f64::NAN;
        for (dst, src) in sim.state.f.iter_mut().zip(f.iter()) {
            dst.copy_from_slice(src);
        }
        let err = sim.step(None).unwrap_err();
        match err {
            Error::NonFinite { x, y, step } => {
                assert_eq!((x, y, step), (5, 3, 0));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn moment_bookkeeping_is_consistent_after_refresh() {
        let mut sim = periodic_sim(16, 16);
        let source = SourceSpec::centered(16, 16);
        sim.run(Some(&source), 30).unwrap();
        sim.refresh_moments();
        let state = sim.state();
        for idx in 0..state.rho.len() {
            let f: [f64; Q] = std::array::from_fn(|i| state.f[i][idx]);
            let (rho, _, p) = recover_node(&f, [0.0, 0.0]);
            assert!((state.rho[idx] - rho).abs() <= 1e-12 * rho.abs().max(1.0));
            assert!((state.pxx[idx] - p[0]).abs() <= 1e-12);
        }
    }
}
