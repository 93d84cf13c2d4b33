//! Energy-dependent characteristic coordinates for the director wave equation
//!
//! ```text
//! theta_tt + (gamma1 - h^2/g) theta_t = c (c theta_x)_x - h J
//! ```
//!
//! with `J(x, t)` prescribed. With the Riemann variables `R = theta_t + c theta_x`
//! and `S = theta_t - c theta_x`, the coordinate `X` is constant along backward
//! characteristics (`dx/dt = -c`) and `Y` along forward ones, normalised on the
//! initial line by `X' = 1 + R^2`, `-Y' = 1 + S^2`. In the variables
//! `w = 2 atan R`, `z = 2 atan S`, `p = (1 + R^2)/X_x`, `q = (1 + S^2)/(-Y_x)` the
//! equation becomes a semilinear first-order system that stays bounded when
//! `theta_t` and `theta_x` blow up (a cusp is `w` or `z` passing through `+-pi`).
//!
//! The lattice is indexed by pairs of initial points: node `(a, b)` with `b <= a`
//! is where the backward characteristic from `x_a` meets the forward one from
//! `x_b`, so `X = X(x_a)`, `Y = Y(x_b)`. Nodes are stored by `(a, d = a - b)` up
//! to a band `d <= D` that covers `t <= t_final`.

mod mapping;
mod sweep;

pub use mapping::{energy_on_level, jacobian_check, map_back, pq_bounds, JacobianReport, MappedFields, PqBounds};
pub use sweep::{integrate_semilinear, node_rates, CharSolution, NodeRates, SweepConfig, SweepReport};

use serde::Serialize;

use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Extra padding of the initial line beyond `c_max t_final`.
pub const PAD_FACTOR: f64 = 1.1;

/// Lattice geometry in characteristic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharGrid {
    /// Physical feet of the characteristics on the (padded) initial line.
    pub x0: Vec<f64>,
    /// `X_a`, increasing in `a`.
    pub x_char: Vec<f64>,
    /// `Y_b`, decreasing in `b`.
    pub y_char: Vec<f64>,
    pub band: usize,
    /// Index of the first unpadded initial point.
    pub pad: usize,
    /// Physical grid the data came from.
    pub domain: Grid1D,
    pub t_final: f64,
}

impl CharGrid {
    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn len(&self) -> usize {
        self.n() * (self.band + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    #[inline]
    pub fn idx(&self, a: usize, d: usize) -> usize {
        a * (self.band + 1) + d
    }

    #[inline]
    pub fn valid(&self, a: usize, d: usize) -> bool {
        a < self.n() && d <= a && d <= self.band
    }
}

/// Values of the unknowns on the initial curve, one per initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveData {
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

/// Pads the initial data by `PAD_FACTOR c_max t_final` on both sides (far-field
/// constants on a decay grid, periodic continuation otherwise) and builds the
/// characteristic coordinates of every initial point.
pub fn to_characteristic(
    grid: &Grid1D,
    theta0: &[f64],
    theta1: &[f64],
    f: &CoefficientFunctions,
    t_final: f64,
) -> Result<(CharGrid, CurveData)> {
    let n = grid.n;
    if theta0.len() != n || theta1.len() != n {
        return Err(Error::InvalidInput("characteristic data does not match the grid".into()));
    }
    if !(t_final > 0.0) {
        return Err(Error::InvalidInput("t_final must be positive".into()));
    }
    let dx = grid.dx();
    let c_max = f.c_max();
    let pad = (PAD_FACTOR * c_max * t_final / dx).ceil() as usize + 2;
    let total = n + 2 * pad;
    let mut th = Vec::with_capacity(total);
    let mut om = Vec::with_capacity(total);
    for k in 0..total {
        let i = k as isize - pad as isize;
        let j = if grid.is_periodic() {
            i.rem_euclid(n as isize) as usize
        } else {
            i.clamp(0, n as isize - 1) as usize
        };
        let outside = i < 0 || i >= n as isize;
        th.push(theta0[j]);
        om.push(if outside && !grid.is_periodic() { 0.0 } else { theta1[j] });
    }
    let line = Grid1D::decay(grid.x_min - pad as f64 * dx, grid.x_min + (total - 1 - pad) as f64 * dx, total)?;
    let thx = line.ddx(&th);
    let mut r = Vec::with_capacity(total);
    let mut s = Vec::with_capacity(total);
    for k in 0..total {
        let c = f.c(th[k]);
        r.push(om[k] + c * thx[k]);
        s.push(om[k] - c * thx[k]);
    }
    let x_char = line.antider(&r.iter().map(|v| 1.0 + v * v).collect::<Vec<_>>());
    let y_cum = line.antider(&s.iter().map(|v| 1.0 + v * v).collect::<Vec<_>>());
    let y_total = y_cum[total - 1];
    let y_char: Vec<f64> = y_cum.iter().map(|v| y_total - v).collect();
    let band = ((2.0 * c_max * t_final / dx).ceil() as usize + 2).min(total - 1);
    let cg = CharGrid {
        x0: line.nodes(),
        x_char,
        y_char,
        band,
        pad,
        domain: *grid,
        t_final,
    };
    let curve = CurveData {
        theta: th,
        w: r.iter().map(|v| 2.0 * v.atan()).collect(),
        z: s.iter().map(|v| 2.0 * v.atan()).collect(),
    };
    Ok((cg, curve))
}

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}
