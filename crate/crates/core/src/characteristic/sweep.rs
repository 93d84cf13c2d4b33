//! Picard iteration of the integral form of the semilinear system on strips of
//! diagonals.
//!
//! Along a line of constant `X` (fixed `a`) the unknowns `theta, w, p` and the
//! Y-route position are integrated in `Y`; along a line of constant `Y` (fixed
//! `b`) the unknowns `z, q` and the X-route position are integrated in `X`.
//! Both use the trapezoid rule from the seed diagonal of the strip. A strip is
//! swept until the largest update falls below the tolerance; consecutive strips
//! overlap by a few diagonals and the recomputed overlap is compared with the
//! previous strip.

use rayon::prelude::*;
use serde::Serialize;

use super::{wrap_angle, CharGrid, CurveData};
use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    /// Diagonals per strip.
    pub strip_width: usize,
    /// Diagonals shared by consecutive strips.
    pub overlap: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Abort after this many consecutive sweeps with growing updates.
    pub stall_sweeps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            strip_width: 8,
            overlap: 2,
            tol: 1e-10,
            max_sweeps: 200,
            stall_sweeps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub strips: usize,
    pub sweeps: Vec<usize>,
    /// Largest change of a recomputed overlap diagonal between strips.
    pub max_overlap_mismatch: f64,
    /// Largest difference between the X-route and Y-route positions.
    pub max_route_discrepancy: f64,
}

/// Semilinear unknowns on the lattice (indexed by [`CharGrid::idx`]).
#[derive(Debug, Clone)]
pub struct CharSolution {
    pub grid: CharGrid,
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Physical position: mean of the two integration routes.
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub x_route_x: Vec<f64>,
    pub t_route_x: Vec<f64>,
    pub x_route_y: Vec<f64>,
    pub t_route_y: Vec<f64>,
    pub report: SweepReport,
}

/// Right-hand sides of the semilinear system at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeRates {
    pub theta_y: f64,
    pub w_y: f64,
    pub p_y: f64,
    pub x_y: f64,
    pub t_y: f64,
    pub z_x: f64,
    pub q_x: f64,
    pub x_x: f64,
    pub t_x: f64,
}

/// Evaluates the system at `(theta, w, z, p, q)` with flux `j`.
pub fn node_rates(f: &CoefficientFunctions, theta: f64, w: f64, z: f64, p: f64, q: f64, j: f64) -> NodeRates {
    let c = f.c(theta);
    let cp = f.c_prime(theta);
    let b = f.wave_b(theta);
    let h = f.h(theta);
    let (sw, cw) = w.sin_cos();
    let (sz, cz) = z.sin_cos();
    let cw2 = 0.5 * (1.0 + cw);
    let cz2 = 0.5 * (1.0 + cz);
    let sw2 = 0.5 * (1.0 - cw);
    let sz2 = 0.5 * (1.0 - cz);
    let elastic = cp / (4.0 * c * c);
    let damp = b / (4.0 * c) * (sw * cz2 + sz * cw2);
    let forcing = h / c * j * cz2 * cw2;
    let cross = 0.25 * sw * sz;
    NodeRates {
        theta_y: q * sz / (4.0 * c),
        w_y: q * (elastic * (cz2 - cw2) + damp - forcing),
        p_y: p * q * (0.5 * elastic * (sz - sw) + b / (2.0 * c) * (cross + sw2 * cz2) - h / (2.0 * c) * j * sw * cz2),
        x_y: -(1.0 + cz) * q / 4.0,
        t_y: (1.0 + cz) * q / (4.0 * c),
        z_x: p * (elastic * (cw2 - cz2) + damp - forcing),
        q_x: p * q * (0.5 * elastic * (sw - sz) + b / (2.0 * c) * (cross + sz2 * cw2) - h / (2.0 * c) * j * sz * cw2),
        x_x: (1.0 + cw) * p / 4.0,
        t_x: (1.0 + cw) * p / (4.0 * c),
    }
}

struct Fields {
    theta: Vec<f64>,
    w: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    x: Vec<f64>,
    t: Vec<f64>,
    xx: Vec<f64>,
    tx: Vec<f64>,
    xy: Vec<f64>,
    ty: Vec<f64>,
}

impl Fields {
    fn copy_node(&mut self, dst: usize, src: usize) {
        for v in self.all_mut() {
            v[dst] = v[src];
        }
    }

    fn all_mut(&mut self) -> [&mut Vec<f64>; 11] {
        [
            &mut self.theta,
            &mut self.w,
            &mut self.z,
            &mut self.p,
            &mut self.q,
            &mut self.x,
            &mut self.t,
            &mut self.xx,
            &mut self.tx,
            &mut self.xy,
            &mut self.ty,
        ]
    }

    /// Values compared between sweeps: theta, w, z, p, q, x, t.
    fn snapshot(&self, k: usize) -> [f64; 7] {
        [self.theta[k], self.w[k], self.z[k], self.p[k], self.q[k], self.x[k], self.t[k]]
    }
}

fn change(old: &[f64; 7], new: &[f64; 7]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..7 {
        let d = if i == 1 || i == 2 {
            wrap_angle(new[i] - old[i]).abs()
        } else {
            (new[i] - old[i]).abs() / (1.0 + old[i].abs())
        };
        m = m.max(if d.is_nan() { f64::INFINITY } else { d });
    }
    m
}

/// Integrates the semilinear system over the whole band.
pub fn integrate_semilinear(
    grid: &CharGrid,
    curve: &CurveData,
    f: &CoefficientFunctions,
    j: &(dyn Fn(f64, f64) -> f64 + Sync),
    config: &SweepConfig,
) -> Result<CharSolution> {
    if config.strip_width <= config.overlap || config.strip_width == 0 {
        return Err(Error::InvalidInput("strip width must exceed the overlap".into()));
    }
    let n = grid.n();
    let len = grid.len();
    let nan = vec![f64::NAN; len];
    let mut fl = Fields {
        theta: nan.clone(),
        w: nan.clone(),
        z: nan.clone(),
        p: nan.clone(),
        q: nan.clone(),
        x: nan.clone(),
        t: nan.clone(),
        xx: nan.clone(),
        tx: nan.clone(),
        xy: nan.clone(),
        ty: nan,
    };
    for a in 0..n {
        let k = grid.idx(a, 0);
        fl.theta[k] = curve.theta[a];
        fl.w[k] = curve.w[a];
        fl.z[k] = curve.z[a];
        fl.p[k] = 1.0;
        fl.q[k] = 1.0;
        for v in [&mut fl.x, &mut fl.xx, &mut fl.xy] {
            v[k] = grid.x0[a];
        }
        for v in [&mut fl.t, &mut fl.tx, &mut fl.ty] {
            v[k] = 0.0;
        }
    }

    let mut report = SweepReport {
        strips: 0,
        sweeps: Vec::new(),
        max_overlap_mismatch: 0.0,
        max_route_discrepancy: 0.0,
    };
    let mut d0 = 0usize;
    let mut filled = 0usize;
    while d0 < grid.band {
        let d1 = (d0 + config.strip_width).min(grid.band);
        let strip_nodes: Vec<usize> = (0..n)
            .flat_map(|a| (d0 + 1..=d1.min(a)).map(move |d| (a, d)))
            .map(|(a, d)| grid.idx(a, d))
            .collect();
        // overlap values from the previous strip, fresh nodes seeded from the diagonal below
        let mut overlap_before = Vec::new();
        for a in 0..n {
            for d in d0 + 1..=d1.min(a) {
                let k = grid.idx(a, d);
                if d <= filled {
                    overlap_before.push((k, fl.snapshot(k)));
                } else {
                    fl.copy_node(k, grid.idx(a, d - 1));
                }
            }
        }

        let mut prev_res = f64::INFINITY;
        let mut growth = 0usize;
        let mut sweeps = 0usize;
        loop {
            sweeps += 1;
            let before: Vec<[f64; 7]> = strip_nodes.iter().map(|&k| fl.snapshot(k)).collect();
            let y_first = sweeps % 2 == 1;
            for pass in 0..2 {
                let along_y = (pass == 0) == y_first;
                let rates = strip_rates(grid, &fl, f, j, d0, d1);
                if along_y {
                    y_pass(grid, &mut fl, &rates, d0, d1);
                } else {
                    x_pass(grid, &mut fl, &rates, d0, d1);
                }
            }
            for &k in &strip_nodes {
                fl.x[k] = 0.5 * (fl.xx[k] + fl.xy[k]);
                fl.t[k] = 0.5 * (fl.tx[k] + fl.ty[k]);
            }
            let mut res = 0.0f64;
            let mut worst = strip_nodes.first().copied().unwrap_or(0);
            for (i, &k) in strip_nodes.iter().enumerate() {
                let c = change(&before[i], &fl.snapshot(k));
                if c > res || c.is_nan() {
                    res = c;
                    worst = k;
                }
            }
            for &k in &strip_nodes {
                if !(fl.p[k] > 0.0 && fl.q[k] > 0.0) {
                    let (a, d) = (k / (grid.band + 1), k % (grid.band + 1));
                    return Err(Error::Invariant(format!(
                        "p or q left (0, inf) at X={:.6}, Y={:.6}: p={:.3e}, q={:.3e}",
                        grid.x_char[a],
                        grid.y_char[a - d],
                        fl.p[k],
                        fl.q[k]
                    )));
                }
            }
            if res < config.tol {
                break;
            }
            growth = if res > prev_res { growth + 1 } else { 0 };
            prev_res = res;
            if growth >= config.stall_sweeps || sweeps >= config.max_sweeps || !res.is_finite() {
                let (a, d) = (worst / (grid.band + 1), worst % (grid.band + 1));
                return Err(Error::NonContraction {
                    x_char: grid.x_char[a],
                    y_char: grid.y_char[a - d],
                    residual: res,
                    detail: format!("strip d in ({d0}, {d1}] after {sweeps} sweeps"),
                });
            }
        }
        for (k, old) in &overlap_before {
            let now = fl.snapshot(*k);
            report.max_overlap_mismatch = report.max_overlap_mismatch.max(change(old, &now));
        }
        for &k in &strip_nodes {
            let disc = (fl.xx[k] - fl.xy[k]).abs().max((fl.tx[k] - fl.ty[k]).abs());
            report.max_route_discrepancy = report.max_route_discrepancy.max(disc);
        }
        report.strips += 1;
        report.sweeps.push(sweeps);
        filled = d1;
        if d1 == grid.band {
            break;
        }
        d0 = d1 - config.overlap;
    }

    Ok(CharSolution {
        grid: grid.clone(),
        theta: fl.theta,
        w: fl.w,
        z: fl.z,
        p: fl.p,
        q: fl.q,
        x: fl.x,
        t: fl.t,
        x_route_x: fl.xx,
        t_route_x: fl.tx,
        x_route_y: fl.xy,
        t_route_y: fl.ty,
        report,
    })
}

/// Rates on every node of the strip including its seed diagonal, indexed by
/// `(a, d - d0)`.
fn strip_rates(
    grid: &CharGrid,
    fl: &Fields,
    f: &CoefficientFunctions,
    j: &(dyn Fn(f64, f64) -> f64 + Sync),
    d0: usize,
    d1: usize,
) -> Vec<NodeRates> {
    let width = d1 - d0 + 1;
    (0..grid.n())
        .into_par_iter()
        .flat_map_iter(|a| {
            (0..width).map(move |e| {
                let d = d0 + e;
                if d > a {
                    return NodeRates::default();
                }
                let k = grid.idx(a, d);
                let jv = j(fl.x[k], fl.t[k]);
                node_rates(f, fl.theta[k], fl.w[k], fl.z[k], fl.p[k], fl.q[k], jv)
            })
        })
        .collect()
}

fn y_pass(grid: &CharGrid, fl: &mut Fields, rates: &[NodeRates], d0: usize, d1: usize) {
    let width = d1 - d0 + 1;
    let lines: Vec<(usize, Vec<[f64; 5]>)> = (0..grid.n())
        .into_par_iter()
        .filter(|&a| a > d0)
        .map(|a| {
            let seed = grid.idx(a, d0);
            let mut acc = [fl.theta[seed], fl.w[seed], fl.p[seed], fl.xy[seed], fl.ty[seed]];
            let mut out = Vec::with_capacity(width);
            for d in d0 + 1..=d1.min(a) {
                let b = a - d;
                let dy = grid.y_char[b] - grid.y_char[b + 1];
                let r0 = &rates[a * width + (d - 1 - d0)];
                let r1 = &rates[a * width + (d - d0)];
                acc[0] += 0.5 * dy * (r0.theta_y + r1.theta_y);
                acc[1] += 0.5 * dy * (r0.w_y + r1.w_y);
                acc[2] += 0.5 * dy * (r0.p_y + r1.p_y);
                acc[3] += 0.5 * dy * (r0.x_y + r1.x_y);
                acc[4] += 0.5 * dy * (r0.t_y + r1.t_y);
                out.push(acc);
            }
            (a, out)
        })
        .collect();
    for (a, vals) in lines {
        for (e, v) in vals.into_iter().enumerate() {
            let k = grid.idx(a, d0 + 1 + e);
            fl.theta[k] = v[0];
            fl.w[k] = wrap_angle(v[1]);
            fl.p[k] = v[2];
            fl.xy[k] = v[3];
            fl.ty[k] = v[4];
        }
    }
}

fn x_pass(grid: &CharGrid, fl: &mut Fields, rates: &[NodeRates], d0: usize, d1: usize) {
    let width = d1 - d0 + 1;
    let n = grid.n();
    let lines: Vec<(usize, Vec<[f64; 4]>)> = (0..n)
        .into_par_iter()
        .filter(|&b| b + d0 + 1 < n)
        .map(|b| {
            let seed = grid.idx(b + d0, d0);
            let mut acc = [fl.z[seed], fl.q[seed], fl.xx[seed], fl.tx[seed]];
            let mut out = Vec::with_capacity(width);
            for d in d0 + 1..=d1 {
                let a = b + d;
                if a >= n {
                    break;
                }
                let dxc = grid.x_char[a] - grid.x_char[a - 1];
                let r0 = &rates[(a - 1) * width + (d - 1 - d0)];
                let r1 = &rates[a * width + (d - d0)];
                acc[0] += 0.5 * dxc * (r0.z_x + r1.z_x);
                acc[1] += 0.5 * dxc * (r0.q_x + r1.q_x);
                acc[2] += 0.5 * dxc * (r0.x_x + r1.x_x);
                acc[3] += 0.5 * dxc * (r0.t_x + r1.t_x);
                out.push(acc);
            }
            (b, out)
        })
        .collect();
    for (b, vals) in lines {
        for (e, v) in vals.into_iter().enumerate() {
            let d = d0 + 1 + e;
            let k = grid.idx(b + d, d);
            fl.z[k] = wrap_angle(v[0]);
            fl.q[k] = v[1];
            fl.xx[k] = v[2];
            fl.tx[k] = v[3];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristic::to_characteristic;
    use crate::coefficients::LeslieCoefficients;
    use crate::grid::Grid1D;

    #[test]
    fn rates_vanish_at_rest_without_forcing() {
        let f = LeslieCoefficients::preset("general").unwrap().functions();
        let r = node_rates(&f, 0.4, 0.0, 0.0, 1.0, 1.0, 0.0);
        for v in [r.theta_y, r.w_y, r.p_y, r.z_x, r.q_x] {
            assert_eq!(v, 0.0);
        }
        let c = f.c(0.4);
        assert!((r.t_x - 0.5 / c).abs() < 1e-15 && (r.t_y - 0.5 / c).abs() < 1e-15);
        assert!((r.x_x - 0.5).abs() < 1e-15 && (r.x_y + 0.5).abs() < 1e-15);
    }

    #[test]
    fn w_rate_matches_riemann_transport() {
        // w_Y must equal (q / (2c(1+S^2))) * 2 (R_t - c R_x) / (1 + R^2)
        let f = LeslieCoefficients::preset("general").unwrap().functions();
        let (th, r, s, q, jv) = (0.7, 1.3, -0.4, 1.7, 0.9);
        let (c, cp, b, h) = (f.c(th), f.c_prime(th), f.wave_b(th), f.h(th));
        let transport = cp / (4.0 * c) * (r * r - s * s) + 0.5 * b * (r + s) - h * jv;
        let expect = q / (2.0 * c * (1.0 + s * s)) * 2.0 * transport / (1.0 + r * r);
        let got = node_rates(&f, th, 2.0 * r.atan(), 2.0 * s.atan(), 0.8, q, jv).w_y;
        assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
    }

    #[test]
    fn p_rate_matches_direct_derivation() {
        // p_Y = pq/(2c(1+S^2)) * (2 R (R_t - c R_x)/(1 + R^2) - c' theta_x)
        let f = LeslieCoefficients::preset("cusp").unwrap().functions();
        let (th, r, s, p, q, jv) = (0.3, -2.1, 0.6, 1.4, 0.7, -0.5);
        let (c, cp, b, h) = (f.c(th), f.c_prime(th), f.wave_b(th), f.h(th));
        let transport = cp / (4.0 * c) * (r * r - s * s) + 0.5 * b * (r + s) - h * jv;
        let theta_x = (r - s) / (2.0 * c);
        let expect = p * q / (2.0 * c * (1.0 + s * s)) * (2.0 * r * transport / (1.0 + r * r) - cp * theta_x);
        let got = node_rates(&f, th, 2.0 * r.atan(), 2.0 * s.atan(), p, q, jv).p_y;
        assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
        // mirror identity for q_X
        let transport_s = cp / (4.0 * c) * (s * s - r * r) + 0.5 * b * (r + s) - h * jv;
        let expect_q = p * q / (2.0 * c * (1.0 + r * r)) * (2.0 * s * transport_s / (1.0 + s * s) + cp * theta_x);
        let got_q = node_rates(&f, th, 2.0 * r.atan(), 2.0 * s.atan(), p, q, jv).q_x;
        assert!((got_q - expect_q).abs() < 1e-13, "{got_q} vs {expect_q}");
    }

    #[test]
    fn resting_data_stays_at_rest() {
        let f = LeslieCoefficients::special(1.0, 1.0).functions();
        let grid = Grid1D::decay(-2.0, 2.0, 41).unwrap();
        let (cg, curve) = to_characteristic(&grid, &vec![0.2; 41], &vec![0.0; 41], &f, 0.5).unwrap();
        let sol = integrate_semilinear(&cg, &curve, &f, &|_, _| 0.0, &SweepConfig::default()).unwrap();
        for a in 0..cg.n() {
            for d in 0..=a.min(cg.band) {
                let k = cg.idx(a, d);
                assert!((sol.theta[k] - 0.2).abs() < 1e-14);
                assert!((sol.p[k] - 1.0).abs() < 1e-14);
                let expect_t = 0.05 * d as f64;
                assert!((sol.t[k] - expect_t).abs() < 1e-12);
            }
        }
        assert!(sol.report.max_overlap_mismatch < 1e-12);
    }

    #[test]
    fn rejects_bad_strip_layout() {
        let f = LeslieCoefficients::special(1.0, 1.0).functions();
        let grid = Grid1D::decay(-2.0, 2.0, 21).unwrap();
        let (cg, curve) = to_characteristic(&grid, &vec![0.0; 21], &vec![0.0; 21], &f, 0.5).unwrap();
        let cfg = SweepConfig { strip_width: 2, overlap: 2, ..Default::default() };
        assert!(integrate_semilinear(&cg, &curve, &f, &|_, _| 0.0, &cfg).is_err());
    }
}
