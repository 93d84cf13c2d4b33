//! From the characteristic lattice back to physical fields, plus geometric
//! consistency checks of the solution.

use serde::Serialize;

use super::{wrap_angle, CharSolution};
use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};
use crate::grid::{Grid1D, SpaceTimeField};

/// Physical fields interpolated from the lattice on `domain x times`.
#[derive(Debug, Clone)]
pub struct MappedFields {
    pub theta: SpaceTimeField,
    pub theta_t: SpaceTimeField,
    pub theta_x: SpaceTimeField,
    /// `theta` is available at the node.
    pub covered: Vec<bool>,
    /// `theta_t`, `theta_x` are available (no vertex within the margin of a cusp).
    pub derivatives_covered: Vec<bool>,
    /// Largest spread of `theta` between triangles claiming the same node.
    pub max_tie_discrepancy: f64,
}

impl MappedFields {
    pub fn coverage(&self) -> f64 {
        self.covered.iter().filter(|&&c| c).count() as f64 / self.covered.len() as f64
    }
}

/// Full lattice cells, corners as storage indices of
/// `[(a,b), (a+1,b), (a+1,b+1), (a,b+1)]`.
fn cells(sol: &CharSolution) -> impl Iterator<Item = (usize, usize, [usize; 4])> + '_ {
    let g = &sol.grid;
    (0..g.n().saturating_sub(1)).flat_map(move |a| {
        (0..a).filter_map(move |b| {
            let d = a - b;
            if d + 1 > g.band {
                return None;
            }
            Some((a, b, [g.idx(a, d), g.idx(a + 1, d + 1), g.idx(a + 1, d), g.idx(a, d - 1)]))
        })
    })
}

/// Triangles covering the band: two per full cell plus the half cells
/// `(a,a), (a+1,a), (a+1,a+1)` resting on the initial curve.
fn triangles(sol: &CharSolution) -> Vec<[usize; 3]> {
    let g = &sol.grid;
    let mut out = Vec::new();
    for (_, _, c) in cells(sol) {
        out.push([c[0], c[1], c[2]]);
        out.push([c[0], c[2], c[3]]);
    }
    if g.band >= 1 {
        for a in 0..g.n().saturating_sub(1) {
            out.push([g.idx(a, 0), g.idx(a + 1, 1), g.idx(a + 1, 0)]);
        }
    }
    out
}

/// Barycentric interpolation on the two triangles of every lattice cell.
/// Degenerate triangles are skipped; nodes claimed by several triangles are
/// averaged. `angle_margin` excludes derivative recovery near `|w|, |z| = pi`.
pub fn map_back(
    sol: &CharSolution,
    f: &CoefficientFunctions,
    times: &[f64],
    angle_margin: f64,
) -> Result<MappedFields> {
    let domain = sol.grid.domain;
    let n = domain.n;
    let nt = times.len();
    if nt == 0 {
        return Err(Error::InvalidInput("map_back needs at least one time".into()));
    }
    let limit = std::f64::consts::PI - angle_margin;
    let mut sum = vec![[0.0f64; 3]; n * nt];
    let mut count = vec![0u32; n * nt];
    let mut dcount = vec![0u32; n * nt];
    let mut lo = vec![f64::INFINITY; n * nt];
    let mut hi = vec![f64::NEG_INFINITY; n * nt];
    let dx = domain.dx();
    for tri in triangles(sol) {
        let px = tri.map(|k| sol.x[k]);
        let pt = tri.map(|k| sol.t[k]);
        let area = (px[1] - px[0]) * (pt[2] - pt[0]) - (px[2] - px[0]) * (pt[1] - pt[0]);
        if !(area.abs() > 1e-14) {
            continue;
        }
        let w0 = sol.w[tri[0]];
        let z0 = sol.z[tri[0]];
        let ws = [w0, w0 + wrap_angle(sol.w[tri[1]] - w0), w0 + wrap_angle(sol.w[tri[2]] - w0)];
        let zs = [z0, z0 + wrap_angle(sol.z[tri[1]] - z0), z0 + wrap_angle(sol.z[tri[2]] - z0)];
        let smooth = tri.iter().all(|&k| sol.w[k].abs() <= limit && sol.z[k].abs() <= limit);
        let (tmin, tmax) = (pt.iter().cloned().fold(f64::INFINITY, f64::min), pt.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let (xmin, xmax) = (px.iter().cloned().fold(f64::INFINITY, f64::min), px.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let i_lo = (((xmin - domain.x_min) / dx).ceil().max(0.0)) as usize;
        let i_hi = ((xmax - domain.x_min) / dx).floor();
        if i_hi < 0.0 {
            continue;
        }
        let i_hi = (i_hi as usize).min(n - 1);
        for (k, &tk) in times.iter().enumerate() {
            if tk < tmin - 1e-14 || tk > tmax + 1e-14 {
                continue;
            }
            for i in i_lo..=i_hi {
                let xi = domain.x(i);
                let l1 = ((xi - px[0]) * (pt[2] - pt[0]) - (px[2] - px[0]) * (tk - pt[0])) / area;
                let l2 = ((px[1] - px[0]) * (tk - pt[0]) - (xi - px[0]) * (pt[1] - pt[0])) / area;
                let l0 = 1.0 - l1 - l2;
                let eps = -1e-12;
                if l0 < eps || l1 < eps || l2 < eps {
                    continue;
                }
                let lam = [l0, l1, l2];
                let interp = |v: [f64; 3]| lam[0] * v[0] + lam[1] * v[1] + lam[2] * v[2];
                let th = interp(tri.map(|k| sol.theta[k]));
                let slot = k * n + i;
                count[slot] += 1;
                sum[slot][0] += th;
                lo[slot] = lo[slot].min(th);
                hi[slot] = hi[slot].max(th);
                if smooth {
                    let w = interp(ws);
                    let z = interp(zs);
                    let (r, s) = ((0.5 * w).tan(), (0.5 * z).tan());
                    dcount[slot] += 1;
                    sum[slot][1] += 0.5 * (r + s);
                    sum[slot][2] += (r - s) / (2.0 * f.c(th));
                }
            }
        }
    }
    let mut theta = vec![f64::NAN; n * nt];
    let mut theta_t = vec![f64::NAN; n * nt];
    let mut theta_x = vec![f64::NAN; n * nt];
    let mut max_tie = 0.0f64;
    for slot in 0..n * nt {
        if count[slot] > 0 {
            theta[slot] = sum[slot][0] / count[slot] as f64;
            max_tie = max_tie.max(hi[slot] - lo[slot]);
        }
        if dcount[slot] > 0 {
            theta_t[slot] = sum[slot][1] / dcount[slot] as f64;
            theta_x[slot] = sum[slot][2] / dcount[slot] as f64;
        }
    }
    let field = |data: Vec<f64>| SpaceTimeField {
        grid: domain,
        times: times.to_vec(),
        data,
    };
    Ok(MappedFields {
        covered: count.iter().map(|&c| c > 0).collect(),
        derivatives_covered: dcount.iter().map(|&c| c > 0).collect(),
        theta: field(theta),
        theta_t: field(theta_t),
        theta_x: field(theta_x),
        max_tie_discrepancy: max_tie,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianReport {
    pub cells: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// Compares the finite-difference Jacobian of `(X, Y) -> (x, t)` with
/// `pq (1 + cos w)(1 + cos z) / (8c)` on cells whose corners satisfy
/// `|w|, |z| <= angle_limit` and `t <= t_max`. Errors are relative errors of
/// `d(X,Y)/d(x,t) = 8c / (pq (1 + cos w)(1 + cos z))`.
pub fn jacobian_check(sol: &CharSolution, f: &CoefficientFunctions, angle_limit: f64, t_max: f64) -> JacobianReport {
    let g = &sol.grid;
    let mut cells_checked = 0usize;
    let mut max_err = 0.0f64;
    let mut total = 0.0;
    for (a, b, c) in cells(sol) {
        if c.iter().any(|&k| sol.w[k].abs() > angle_limit || sol.z[k].abs() > angle_limit || sol.t[k] > t_max) {
            continue;
        }
        let (n00, n10, n11, n01) = (c[0], c[1], c[2], c[3]);
        let dxc = g.x_char[a + 1] - g.x_char[a];
        let dyc = g.y_char[b + 1] - g.y_char[b];
        let d_x = |v: &[f64]| 0.5 * ((v[n10] - v[n00]) + (v[n11] - v[n01])) / dxc;
        let d_y = |v: &[f64]| 0.5 * ((v[n01] - v[n00]) + (v[n11] - v[n10])) / dyc;
        let det = d_x(&sol.x) * d_y(&sol.t) - d_y(&sol.x) * d_x(&sol.t);
        let analytic: f64 = c
            .iter()
            .map(|&k| sol.p[k] * sol.q[k] * (1.0 + sol.w[k].cos()) * (1.0 + sol.z[k].cos()) / (8.0 * f.c(sol.theta[k])))
            .sum::<f64>()
            / 4.0;
        let err = (analytic / det - 1.0).abs();
        cells_checked += 1;
        total += err;
        max_err = max_err.max(err);
    }
    JacobianReport {
        cells: cells_checked,
        max_rel_error: max_err,
        mean_rel_error: if cells_checked > 0 { total / cells_checked as f64 } else { 0.0 },
    }
}

/// `int (1 - cos w) p/4 dX - (1 - cos z) q/4 dY` along the level curve `t = level`,
/// which equals `int (theta_t^2 + c^2 theta_x^2) dx` at that time.
pub fn energy_on_level(sol: &CharSolution, level: f64) -> Option<f64> {
    let g = &sol.grid;
    let mut points: Vec<(usize, f64, f64, f64)> = Vec::new();
    for a in 0..g.n() {
        let top = a.min(g.band);
        for d in 0..top {
            let (k0, k1) = (g.idx(a, d), g.idx(a, d + 1));
            let (t0, t1) = (sol.t[k0], sol.t[k1]);
            if t0 <= level && level < t1 {
                let lam = (level - t0) / (t1 - t0);
                let b = a - d;
                let y = g.y_char[b] + lam * (g.y_char[b - 1] - g.y_char[b]);
                let ex0 = (1.0 - sol.w[k0].cos()) * sol.p[k0] / 4.0;
                let ex1 = (1.0 - sol.w[k1].cos()) * sol.p[k1] / 4.0;
                let ey0 = (1.0 - sol.z[k0].cos()) * sol.q[k0] / 4.0;
                let ey1 = (1.0 - sol.z[k1].cos()) * sol.q[k1] / 4.0;
                points.push((a, y, ex0 + lam * (ex1 - ex0), ey0 + lam * (ey1 - ey0)));
                break;
            }
        }
    }
    if points.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    for w in points.windows(2) {
        let (a0, y0, ex0, ey0) = w[0];
        let (a1, y1, ex1, ey1) = w[1];
        if a1 != a0 + 1 {
            continue;
        }
        total += 0.5 * (ex0 + ex1) * (g.x_char[a1] - g.x_char[a0]) - 0.5 * (ey0 + ey1) * (y1 - y0);
    }
    Some(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PqBounds {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub nodes: usize,
}

/// Extremes of `p`, `q` over lattice nodes with `t <= t_max` inside `domain`.
pub fn pq_bounds(sol: &CharSolution, domain: &Grid1D, t_max: f64) -> PqBounds {
    let g = &sol.grid;
    let mut out = PqBounds {
        p_min: f64::INFINITY,
        p_max: f64::NEG_INFINITY,
        q_min: f64::INFINITY,
        q_max: f64::NEG_INFINITY,
        nodes: 0,
    };
    for a in 0..g.n() {
        for d in 0..=a.min(g.band) {
            let k = g.idx(a, d);
            if sol.t[k] > t_max || sol.x[k] < domain.x_min || sol.x[k] > domain.x_max {
                continue;
            }
            out.nodes += 1;
            out.p_min = out.p_min.min(sol.p[k]);
            out.p_max = out.p_max.max(sol.p[k]);
            out.q_min = out.q_min.min(sol.q[k]);
            out.q_max = out.q_max.max(sol.q[k]);
        }
    }
    out
}
