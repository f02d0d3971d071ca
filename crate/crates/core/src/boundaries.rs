//! Boundary conditions: rigid-wall bounce-back, free-surface
//! anti-bounce-back with extrapolated density/stress, periodic wrap, and
//! absorbing-layer damping.
//!
//! Walls sit half a link outside the last node row. Streaming first performs
//! a periodic shift everywhere; the populations whose true source lies
//! outside a non-periodic edge are then reconstructed here.

use crate::error::{Error, Result};
use crate::lattice::{B2, OPPOSITE, Q, VELOCITIES, WEIGHTS};
use crate::solver::FieldState;

/// Treatment of one domain edge. `top` is the row `y = ny - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeKind {
    Periodic,
    /// Zero mass flux at the wall: full bounce-back.
    RigidWall,
    /// Zero traction at the wall: anti-bounce-back against the extrapolated
    /// interface density and stress deviation.
    FreeSurface,
    /// Sponge layer of `thickness` nodes damping the mass flux, plus
    /// bounce-back at the outermost row. The damping amplitude ramps from 0
    /// at the inner interface to `a_max` at the domain edge with the given
    /// exponent.
    Absorbing {
        thickness: usize,
        a_max: f64,
        profile: f64,
    },
}

impl EdgeKind {
    fn is_periodic(&self) -> bool {
        matches!(self, EdgeKind::Periodic)
    }
}

/// Per-edge boundary layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub left: EdgeKind,
    pub right: EdgeKind,
    pub bottom: EdgeKind,
    pub top: EdgeKind,
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        Self {
            left: EdgeKind::Periodic,
            right: EdgeKind::Periodic,
            bottom: EdgeKind::Periodic,
            top: EdgeKind::Periodic,
        }
    }

    pub fn periodic_x(&self) -> bool {
        self.left.is_periodic()
    }

    pub fn periodic_y(&self) -> bool {
        self.bottom.is_periodic()
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.periodic_x() && self.periodic_y()
    }

    fn edges(&self) -> [(&'static str, EdgeKind, usize); 4] {
        [
            ("left", self.left, 0),
            ("right", self.right, 0),
            ("bottom", self.bottom, 1),
            ("top", self.top, 1),
        ]
    }

    /// Check the layout against the grid; collects every violation.
    pub fn validate(&self, nx: usize, ny: usize) -> Result<()> {
        let mut violations = Vec::new();
        if self.left.is_periodic() != self.right.is_periodic() {
            violations
                .push("left and right edges must both be periodic or both non-periodic".into());
        }
        if self.bottom.is_periodic() != self.top.is_periodic() {
            violations
                .push("bottom and top edges must both be periodic or both non-periodic".into());
        }
        let max_thickness = nx.min(ny) / 2;
        for (name, kind, axis) in self.edges() {
            match kind {
                EdgeKind::Absorbing {
                    thickness,
                    a_max,
                    profile,
                } => {
                    if thickness < 1 || thickness > max_thickness {
                        violations.push(format!(
                            "{name} absorbing thickness {thickness} outside 1..={max_thickness}"
                        ));
                    }
                    if !(a_max >= 0.0 && a_max.is_finite()) {
                        violations.push(format!("{name} absorbing a_max must be >= 0"));
                    }
                    if !(profile >= 0.0 && profile.is_finite()) {
                        violations.push(format!("{name} absorbing profile must be >= 0"));
                    }
                }
                EdgeKind::FreeSurface => {
                    let extent = if axis == 0 { nx } else { ny };
                    if extent < 3 {
                        violations.push(format!(
                            "{name} free surface needs at least 3 nodes across \
                             for the two-row extrapolation, grid is {nx}x{ny}"
                        ));
                    }
                }
                _ => {}
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations.into()))
        }
    }
}

/// Damping amplitude at `distance` nodes from the outer domain edge:
/// `A = a_max ((thickness - distance)/thickness)^profile`, so the ramp is
/// zero at the inner interface and `a_max` at the outermost node.
pub fn damping_profile(distance: f64, thickness: usize, a_max: f64, profile: f64) -> f64 {
    let t = thickness as f64;
    if distance >= t {
        return 0.0;
    }
    a_max * ((t - distance) / t).powf(profile)
}

/// Add the sponge penalty to the source field: `S ← S - A j`, pointwise.
pub fn apply_absorbing(sx: &mut [f64], sy: &mut [f64], jx: &[f64], jy: &[f64], a: &[f64]) {
    for i in 0..sx.len() {
        sx[i] -= a[i] * jx[i];
        sy[i] -= a[i] * jy[i];
    }
}

/// Boundary layout compiled for a grid: edge kinds plus the precomputed
/// damping field.
#[derive(Debug, Clone)]
pub struct BoundaryPlan {
    spec: BoundarySpec,
    nx: usize,
    ny: usize,
    a_field: Vec<f64>,
}

impl BoundaryPlan {
    pub fn new(spec: BoundarySpec, nx: usize, ny: usize) -> Result<Self> {
        spec.validate(nx, ny)?;
        let mut a_field = vec![0.0; nx * ny];
        let mut add_layer = |kind: EdgeKind, distance_of: &dyn Fn(usize, usize) -> usize| {
            if let EdgeKind::Absorbing {
                thickness,
                a_max,
                profile,
            } = kind
            {
                for y in 0..ny {
                    for x in 0..nx {
                        let d = distance_of(x, y);
                        if d < thickness {
                            let a = damping_profile(d as f64, thickness, a_max, profile);
                            let cell = &mut a_field[y * nx + x];
                            // Overlapping corner layers take the larger ramp.
                            *cell = cell.max(a);
                        }
                    }
                }
            }
        };
        add_layer(spec.left, &|x, _| x);
        add_layer(spec.right, &|x, _| nx - 1 - x);
        add_layer(spec.bottom, &|_, y| y);
        add_layer(spec.top, &|_, y| ny - 1 - y);
        Ok(Self {
            spec,
            nx,
            ny,
            a_field,
        })
    }

    /// Periodic plan with a constant damping everywhere; the homogeneous
    /// limit used to study the sponge term in isolation.
    #[cfg(test)]
    pub(crate) fn uniform_damping(nx: usize, ny: usize, a: f64) -> Self {
        Self {
            spec: BoundarySpec::periodic(),
            nx,
            ny,
            a_field: vec![a; nx * ny],
        }
    }

    pub fn spec(&self) -> &BoundarySpec {
        &self.spec
    }

    pub fn a_field(&self) -> &[f64] {
        &self.a_field
    }
}

/// Which domain edge a streaming source fell out of.
#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    fn kind(self, spec: &BoundarySpec) -> EdgeKind {
        match self {
            Side::Left => spec.left,
            Side::Right => spec.right,
            Side::Bottom => spec.bottom,
            Side::Top => spec.top,
        }
    }

    /// Unit step from the boundary node toward the interior.
    fn inward(self) -> (isize, isize) {
        match self {
            Side::Left => (1, 0),
            Side::Right => (-1, 0),
            Side::Bottom => (0, 1),
            Side::Top => (0, -1),
        }
    }

    /// Tangential axis: 0 for x, 1 for y.
    fn tangential_axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 1,
            Side::Bottom | Side::Top => 0,
        }
    }
}

/// Reconstruct the populations whose streaming source lies outside a
/// non-periodic edge. `state.f` holds post-collision values and the moment
/// fields hold the current step; `f_new` holds the wrapped-shift result.
///
/// Corners crossing two non-periodic edges bounce back unless both edges are
/// free surfaces, in which case the anti-bounce-back uses a diagonal
/// extrapolation with zero stress deviation.
pub(crate) fn apply_streaming_rules(
    plan: &BoundaryPlan,
    state: &FieldState,
    f_new: &mut [Vec<f64>; Q],
) {
    let spec = plan.spec;
    if spec.is_fully_periodic() {
        return;
    }
    let (nx, ny) = (plan.nx, plan.ny);
    for y in 0..ny {
        let y_edge = y == 0 || y + 1 == ny;
        if y_edge {
            for x in 0..nx {
                fixup_node(&spec, state, f_new, x, y);
            }
        } else if !spec.periodic_x() {
            fixup_node(&spec, state, f_new, 0, y);
            fixup_node(&spec, state, f_new, nx - 1, y);
        }
    }
}

fn fixup_node(
    spec: &BoundarySpec,
    state: &FieldState,
    f_new: &mut [Vec<f64>; Q],
    x: usize,
    y: usize,
) {
    let (nx, ny) = (state.nx, state.ny);
    let idx = y * nx + x;
    for i in 1..Q {
        let [cx, cy] = VELOCITIES[i];
        let sx = x as isize - cx as isize;
        let sy = y as isize - cy as isize;
        let side_x = if spec.periodic_x() {
            None
        } else if sx < 0 {
            Some(Side::Left)
        } else if sx >= nx as isize {
            Some(Side::Right)
        } else {
            None
        };
        let side_y = if spec.periodic_y() {
            None
        } else if sy < 0 {
            Some(Side::Bottom)
        } else if sy >= ny as isize {
            Some(Side::Top)
        } else {
            None
        };
        let value = match (side_x, side_y) {
            (None, None) => continue,
            (Some(side), None) | (None, Some(side)) => match side.kind(spec) {
                EdgeKind::Periodic => unreachable!(),
                EdgeKind::RigidWall | EdgeKind::Absorbing { .. } => state.f[OPPOSITE[i]][idx],
                EdgeKind::FreeSurface => free_surface_value(state, side, i, x, y),
            },
            (Some(ex), Some(ey)) => {
                if ex.kind(spec) == EdgeKind::FreeSurface && ey.kind(spec) == EdgeKind::FreeSurface
                {
                    // Doubly-exterior diagonal between two free surfaces.
                    let (ix, _) = ex.inward();
                    let (_, iy) = ey.inward();
                    let in_idx = ((y as isize + iy) * nx as isize + x as isize + ix) as usize;
                    let rho_air = 1.5 * state.rho[idx] - 0.5 * state.rho[in_idx];
                    -state.f[OPPOSITE[i]][idx] + 2.0 * WEIGHTS[i] * rho_air
                } else {
                    state.f[OPPOSITE[i]][idx]
                }
            }
        };
        f_new[i][idx] = value;
    }
}

/// Anti-bounce-back value for the incoming direction `i` at a free-surface
/// node: `-f*_ī + 2 w_i (ρ_air + P^n_air : (c c - b²δ) / 2b⁴)`.
///
/// The interface density is the two-point linear extrapolation
/// `ρ_air = 3/2 ρ_b - 1/2 ρ_in`. The interface stress deviation keeps only
/// its tangential-tangential component (extrapolated the same way); the
/// normal row vanishes so the wall carries no traction and the quiescent
/// state is preserved exactly.
fn free_surface_value(state: &FieldState, side: Side, i: usize, x: usize, y: usize) -> f64 {
    let nx = state.nx;
    let idx = y * nx + x;
    let (ix, iy) = side.inward();
    let in_idx = ((y as isize + iy) * nx as isize + (x as isize + ix)) as usize;

    let rho_air = 1.5 * state.rho[idx] - 0.5 * state.rho[in_idx];
    let tangential = side.tangential_axis();
    let (pt_b, pt_in) = if tangential == 0 {
        (state.pxx[idx], state.pxx[in_idx])
    } else {
        (state.pyy[idx], state.pyy[in_idx])
    };
    let pn_b = pt_b - B2 * state.rho[idx];
    let pn_in = pt_in - B2 * state.rho[in_idx];
    let pn_tt_air = 1.5 * pn_b - 0.5 * pn_in;

    let ct = VELOCITIES[i][tangential] as f64;
    let contraction = 4.5 * pn_tt_air * (ct * ct - B2);
    -state.f[OPPOSITE[i]][idx] + 2.0 * WEIGHTS[i] * (rho_air + contraction)
}
