//! Body-force source: Gaussian in space, Ricker wavelet in time.
//!
//! The wavelet is peak-normalized with `ψ(t0) = 1`; the spatial factor is a
//! radial Gaussian so the source stays band-limited. The analytic time
//! derivative is also provided because the spectral reference solver
//! integrates `∂t F` rather than `F`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Description of the body force
/// `F(x, t) = amplitude · direction · exp(-|x - center|^2 / 2σ^2) · ψ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    /// Center of the Gaussian, in node coordinates.
    pub center: [f64; 2],
    /// Gaussian radius σ, in nodes.
    pub sigma: f64,
    /// Unit force direction.
    pub direction: [f64; 2],
    /// Force scale.
    pub amplitude: f64,
    /// Ricker period T; the wavelet frequency is 1/T.
    pub period: f64,
    /// Wavelet delay. Defaults to T so the truncated startup at t = 0 stays
    /// below 1e-3 of peak.
    pub t0: f64,
}

impl SourceSpec {
    pub fn new(
        center: [f64; 2],
        sigma: f64,
        direction: [f64; 2],
        amplitude: f64,
        period: f64,
        t0: f64,
    ) -> Result<Self> {
        let mut violations = Vec::new();
        if !(sigma > 0.0) {
            violations.push(format!("source sigma must be positive, got {sigma}"));
        }
        if !(period > 0.0) {
            violations.push(format!("source period must be positive, got {period}"));
        }
        let norm = (direction[0] * direction[0] + direction[1] * direction[1]).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            violations.push("source direction must be a nonzero vector".to_string());
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations.into()));
        }
        Ok(Self {
            center,
            sigma,
            direction: [direction[0] / norm, direction[1] / norm],
            amplitude,
            period,
            t0,
        })
    }

    /// Default bulk source: centered, σ = 4, x-directed, T = 20, t0 = T.
    pub fn centered(nx: usize, ny: usize) -> Self {
        Self::new(
            [nx as f64 / 2.0, ny as f64 / 2.0],
            4.0,
            [1.0, 0.0],
            1e-3,
            20.0,
            20.0,
        )
        .expect("default source is valid")
    }

    /// Spatial Gaussian factor at a node.
    pub fn spatial(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Force vector at a node and time.
    pub fn force_at(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let s = self.amplitude * self.spatial(x, y) * ricker(t, self.period, self.t0);
        [s * self.direction[0], s * self.direction[1]]
    }

    /// Full force field at time t, as `(Fx, Fy)` planes in row-major order.
    pub fn eval_force(&self, nx: usize, ny: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        self.eval_with(nx, ny, ricker(t, self.period, self.t0))
    }

    /// Analytic `∂t F` field at time t.
    pub fn eval_force_dt(&self, nx: usize, ny: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        self.eval_with(nx, ny, ricker_dt(t, self.period, self.t0))
    }

    fn eval_with(&self, nx: usize, ny: usize, time_factor: f64) -> (Vec<f64>, Vec<f64>) {
        let mut fx = vec![0.0; nx * ny];
        let mut fy = vec![0.0; nx * ny];
        let scale = self.amplitude * time_factor;
        for y in 0..ny {
            for x in 0..nx {
                let g = scale * self.spatial(x as f64, y as f64);
                fx[y * nx + x] = g * self.direction[0];
                fy[y * nx + x] = g * self.direction[1];
            }
        }
        (fx, fy)
    }
}

/// Ricker wavelet `ψ(t) = (1 - 2π²f²(t-t0)²) exp(-π²f²(t-t0)²)` with
/// `f = 1/T`. Peak value 1 at `t = t0`, zero mean over the line.
pub fn ricker(t: f64, period: f64, t0: f64) -> f64 {
    let a = PI * (t - t0) / period;
    let a2 = a * a;
    (1.0 - 2.0 * a2) * (-a2).exp()
}

/// Analytic derivative `dψ/dt = -2π²f²(t-t0)(3 - 2π²f²(t-t0)²) exp(...)`.
pub fn ricker_dt(t: f64, period: f64, t0: f64) -> f64 {
    let u = t - t0;
    let a = PI * PI / (period * period);
    let au2 = a * u * u;
    -2.0 * a * u * (3.0 - 2.0 * au2) * (-au2).exp()
}
