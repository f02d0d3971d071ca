//! Material parameters of the isotropic linear elastic solid, in lattice units.

use crate::error::{Error, Result};
use crate::lattice::B2;

/// Poisson ratios at or above this limit are rejected outright: the centered
/// density-gradient stencil lets information travel at speed 2, and the
/// P-wave speed exceeds even that once `ν >= 5/11`.
pub const NU_LIMIT: f64 = 5.0 / 11.0;

/// Elastic constants and derived wave speeds. The shear Lamé coefficient is
/// pinned by the lattice, `μ = ρ0 b^2`, so the shear speed always equals the
/// lattice sound speed `b = 1/sqrt(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Reference density.
    pub rho0: f64,
    /// Poisson ratio.
    pub nu: f64,
    /// BGK relaxation time, in units of Δt.
    pub tau: f64,
    /// Shear Lamé coefficient, `ρ0 b^2`.
    pub mu: f64,
    /// First Lamé coefficient, `2ν μ / (1 - 2ν)`.
    pub lambda: f64,
    /// P-wave speed, `sqrt((λ + 2μ)/ρ0)`.
    pub v_p: f64,
    /// S-wave speed, `sqrt(μ/ρ0) = b`.
    pub v_s: f64,
    /// Forcing coefficient `Λ = (μ - λ)/(ρ0 b^2) = (1 - 4ν)/(1 - 2ν)`;
    /// vanishes for a Poisson solid (ν = 0.25).
    pub lambda_coef: f64,
}

impl MaterialParams {
    pub fn new(rho0: f64, nu: f64, tau: f64) -> Result<Self> {
        let mut violations = Vec::new();
        if !(rho0 > 0.0 && rho0.is_finite()) {
            violations.push(format!("rho0 must be positive and finite, got {rho0}"));
        }
        if !(tau > 0.5) {
            violations.push(format!("tau must exceed Δt/2 = 0.5, got {tau}"));
        }
        if !(nu < NU_LIMIT) {
            violations.push(format!(
                "nu = {nu} is at or above the hard limit 5/11 ≈ {NU_LIMIT:.4}: \
                 the P-wave would outrun the widened stencil speed 2"
            ));
        }
        if !(nu > -1.0) {
            violations.push(format!("nu must exceed -1, got {nu}"));
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations.into()));
        }

        let mu = rho0 * B2;
        let lambda = 2.0 * nu * mu / (1.0 - 2.0 * nu);
        Ok(Self {
            rho0,
            nu,
            tau,
            mu,
            lambda,
            v_p: ((lambda + 2.0 * mu) / rho0).sqrt(),
            v_s: (mu / rho0).sqrt(),
            lambda_coef: (mu - lambda) / (rho0 * B2),
        })
    }

    /// Theoretical `v_P/v_S = sqrt((2 - 2ν)/(1 - 2ν))`; monotone increasing
    /// in ν below the incompressible limit.
    pub fn vp_vs_ratio(nu: f64) -> f64 {
        ((2.0 - 2.0 * nu) / (1.0 - 2.0 * nu)).sqrt()
    }

    /// Coefficient of the elastic gradient force, `(μ - λ)/ρ0 = Λ b^2`.
    pub fn gradient_coef(&self) -> f64 {
        (self.mu - self.lambda) / self.rho0
    }
}

impl Default for MaterialParams {
    /// Poisson solid at the reference relaxation time: ρ0 = 1, ν = 0.25,
    /// τ = 0.55.
    fn default() -> Self {
        Self::new(1.0, 0.25, 0.55).expect("default parameters are valid")
    }
}
