//! The D2Q9 velocity set.
//!
//! Nine velocities on the unit square lattice (Δx = Δt = 1):
//!
//! ```text
//!   6   2   5
//!    \  |  /
//!   3 - 0 - 1
//!    /  |  \
//!   7   4   8
//! ```
//!
//! Index 0 is the rest velocity, 1-4 the axis directions, 5-8 the diagonals.
//! The ordering is fixed so that snapshot files and the amplification matrix
//! are reproducible bit-for-bit.

use crate::error::{Error, Result};

/// Number of discrete velocities.
pub const Q: usize = 9;

/// Discrete velocities `c_i` in lattice units.
pub const VELOCITIES: [[i32; 2]; Q] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 0],
    [0, -1],
    [1, 1],
    [-1, 1],
    [-1, -1],
    [1, -1],
];

/// Quadrature weights `w_i`: 4/9 rest, 1/9 axis, 1/36 diagonal. Solving the
/// order-0/2/4 isotropy conditions on this stencil gives exactly these
/// rationals.
pub const WEIGHTS: [f64; Q] = [
    4.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

/// `OPPOSITE[i]` is the index with `c = -c_i`.
pub const OPPOSITE: [usize; Q] = [0, 3, 4, 1, 2, 7, 8, 5, 6];

/// Lattice sound speed squared, `b^2 = 1/3`. The shear wave speed of the
/// solid model is pinned to `b`.
pub const B2: f64 = 1.0 / 3.0;

/// A D2Q9 velocity set with its weights and derived constants.
///
/// Immutable after construction and freely shareable across threads. Hot
/// loops use the module-level constants directly; this type exists for the
/// isotropy verification and for probing modified weight sets.
#[derive(Debug, Clone)]
pub struct LatticeD2Q9 {
    pub velocities: [[i32; 2]; Q],
    pub weights: [f64; Q],
    pub opposite: [usize; Q],
    /// Lattice sound speed, `sqrt(sum_i w_i c_ix^2)`.
    pub b: f64,
}

impl LatticeD2Q9 {
    /// The canonical D2Q9 set with `b^2 = 1/3`.
    pub fn canonical() -> Self {
        Self {
            velocities: VELOCITIES,
            weights: WEIGHTS,
            opposite: OPPOSITE,
            b: B2.sqrt(),
        }
    }

    /// Same velocities, custom weights; `b` is recomputed from the order-2
    /// moment of the given weights.
    pub fn with_weights(weights: [f64; Q]) -> Self {
        let b2: f64 = VELOCITIES
            .iter()
            .zip(&weights)
            .map(|(c, w)| w * (c[0] * c[0]) as f64)
            .sum();
        Self {
            velocities: VELOCITIES,
            weights,
            opposite: OPPOSITE,
            b: b2.sqrt(),
        }
    }

    pub fn b2(&self) -> f64 {
        self.b * self.b
    }

    /// Index of the direction with `c = -c_i`; an involution whose only
    /// fixed point is the rest velocity.
    pub fn opposite_index(&self, i: usize) -> Result<usize> {
        if i >= Q {
            return Err(Error::DirectionOutOfRange(i));
        }
        Ok(self.opposite[i])
    }

    /// Residuals of the weighted-moment isotropy conditions at orders
    /// 0, 2, 4, 6.
    ///
    /// Order 0 checks `sum w_i = 1`; order 2 checks
    /// `sum w_i c_a c_b = b^2 δ_ab`; order 4 checks the target
    /// `b^4 Δ^(4)_abcd`; order 6 checks `b^6 (Δ^(6) - 6 δ_abcdef)`, where the
    /// `-6δ` deficit is what distinguishes regular lattices from a fully
    /// isotropic set.
    pub fn check_isotropy(&self) -> IsotropyReport {
        let b2 = self.b2();
        let b4 = b2 * b2;
        let b6 = b4 * b2;

        let order0 = (self.weights.iter().sum::<f64>() - 1.0).abs();

        let mut order2 = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                let m: f64 = self
                    .velocities
                    .iter()
                    .zip(&self.weights)
                    .map(|(c, w)| w * (c[a] * c[b]) as f64)
                    .sum();
                order2 = order2.max((m - b2 * delta(a, b)).abs());
            }
        }

        let mut order4 = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                for g in 0..2 {
                    for k in 0..2 {
                        let m: f64 = self
                            .velocities
                            .iter()
                            .zip(&self.weights)
                            .map(|(c, w)| w * (c[a] * c[b] * c[g] * c[k]) as f64)
                            .sum();
                        order4 = order4.max((m - b4 * delta4(a, b, g, k)).abs());
                    }
                }
            }
        }

        let mut order6 = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                for g in 0..2 {
                    for k in 0..2 {
                        for t in 0..2 {
                            for p in 0..2 {
                                let m: f64 = self
                                    .velocities
                                    .iter()
                                    .zip(&self.weights)
                                    .map(|(c, w)| {
                                        w * (c[a] * c[b] * c[g] * c[k] * c[t] * c[p]) as f64
                                    })
                                    .sum();
                                let target = b6 * (delta6(a, b, g, k, t, p)
                                    - 6.0 * delta_all(&[a, b, g, k, t, p]));
                                order6 = order6.max((m - target).abs());
                            }
                        }
                    }
                }
            }
        }

        IsotropyReport {
            order0,
            order2,
            order4,
            order6,
        }
    }
}

/// Maximum absolute deviation from each isotropy condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropyReport {
    pub order0: f64,
    pub order2: f64,
    pub order4: f64,
    pub order6: f64,
}

impl IsotropyReport {
    pub fn max(&self) -> f64 {
        self.order0.max(self.order2).max(self.order4).max(self.order6)
    }
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `Δ^(4)_abcd = δ_ab δ_cd + δ_ac δ_bd + δ_ad δ_bc`.
fn delta4(a: usize, b: usize, c: usize, d: usize) -> f64 {
    delta(a, b) * delta(c, d) + delta(a, c) * delta(b, d) + delta(a, d) * delta(b, c)
}

/// `Δ^(6)` expanded over pairings of the first index with `Δ^(4)` remainders.
fn delta6(a: usize, b: usize, c: usize, d: usize, t: usize, p: usize) -> f64 {
    delta(a, b) * delta4(c, d, t, p)
        + delta(a, c) * delta4(b, d, t, p)
        + delta(a, d) * delta4(b, c, t, p)
        + delta(a, t) * delta4(b, c, d, p)
        + delta(a, p) * delta4(b, c, d, t)
}

/// Generalized Kronecker delta: 1 when all indices coincide.
fn delta_all(idx: &[usize]) -> f64 {
    if idx.iter().all(|&i| i == idx[0]) {
        1.0
    } else {
        0.0
    }
}
