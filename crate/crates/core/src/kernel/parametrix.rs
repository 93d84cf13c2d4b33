use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, graded_rule_lower, graded_rule_upper};
use super::{heat, heat_x, heat_xx, ScalarField};
use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};
use crate::grid::catmull_rom;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParametrixConfig {
    /// Time levels `s - tau = H ((j + 1/2)/N)^4`.
    pub levels: usize,
    /// Points of the similarity grid `zeta = (y - xi)/sqrt(2 g_max (s - tau))`.
    pub zeta_points: usize,
    /// Half-width of the similarity and local spatial grids.
    pub window: f64,
    pub local_time_nodes: usize,
    pub local_space_points: usize,
    pub max_terms: usize,
    pub series_tol: f64,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        Self {
            levels: 32,
            zeta_points: 65,
            window: 8.0,
            local_time_nodes: 8,
            local_space_points: 49,
            max_terms: 4,
            series_tol: 1e-6,
        }
    }
}

impl ParametrixConfig {
    /// Every quadrature resolution doubled.
    pub fn refined(&self) -> Self {
        Self {
            levels: 2 * self.levels,
            zeta_points: 2 * self.zeta_points - 1,
            local_time_nodes: 2 * self.local_time_nodes,
            local_space_points: 2 * self.local_space_points - 1,
            ..*self
        }
    }
}

/// `C s^p` fitted by least squares in log-log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub constant: f64,
    pub points: usize,
}

pub fn fit_power_law(s: &[f64], v: &[f64]) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> = s
        .iter()
        .zip(v)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    Some(PowerFit {
        exponent,
        constant: (my - exponent * mx).exp(),
        points: pts.len(),
    })
}

/// `Gamma`, its frozen part `Z` and `Gamma_x` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaProbe {
    pub gamma: f64,
    pub frozen: f64,
    pub gamma_x: f64,
}

/// `Phi(y, s; xi, tau)` for one source, resolved on a similarity lattice.
pub struct ParametrixTable<'a> {
    theta: &'a dyn ScalarField,
    f: CoefficientFunctions,
    pub xi: f64,
    pub tau: f64,
    pub horizon: f64,
    pub decay: f64,
    pub g_max: f64,
    pub config: ParametrixConfig,
    /// `s_j - tau`.
    pub offsets: Vec<f64>,
    pub zeta: Vec<f64>,
    /// `terms[k][j * zeta.len() + l]` is the `(k+1)`-th Volterra term.
    pub terms: Vec<Vec<f64>>,
    pub term_norms: Vec<f64>,
    /// Power of `s - tau` used to rescale each term between levels.
    pub exponents: Vec<f64>,
    pub phi: Vec<f64>,
    g_source: f64,
    gl: (Vec<f64>, Vec<f64>),
}

impl<'a> ParametrixTable<'a> {
    pub fn build(
        theta: &'a dyn ScalarField,
        f: &CoefficientFunctions,
        decay: f64,
        xi: f64,
        tau: f64,
        horizon: f64,
        config: ParametrixConfig,
    ) -> Result<Self> {
        if !(horizon > 0.0) || config.levels < 4 || config.zeta_points < 5 || config.local_space_points < 5 {
            return Err(Error::InvalidInput("parametrix table needs horizon > 0 and a non-trivial lattice".into()));
        }
        let n_lev = config.levels;
        let offsets: Vec<f64> = (0..n_lev)
            .map(|j| horizon * ((j as f64 + 0.5) / n_lev as f64).powi(4))
            .collect();
        let nz = config.zeta_points;
        let zeta: Vec<f64> = (0..nz)
            .map(|l| -config.window + 2.0 * config.window * l as f64 / (nz - 1) as f64)
            .collect();
        let g_max = f.g_max();
        let mut table = Self {
            theta,
            f: *f,
            xi,
            tau,
            horizon,
            decay,
            g_max,
            config,
            offsets,
            zeta,
            terms: Vec::new(),
            term_norms: Vec::new(),
            exponents: Vec::new(),
            phi: vec![0.0; n_lev * nz],
            g_source: f.g(theta.value(xi, tau)),
            gl: gauss_legendre(config.local_time_nodes),
        };
        let first: Vec<f64> = (0..n_lev * nz)
            .map(|idx| {
                let (y, s) = table.node(idx);
                table.defect(y, s, xi, tau, table.g_source)
            })
            .collect();
        table.push_term(first);
        for k in 1..config.max_terms {
            let next: Vec<f64> = (0..n_lev * nz)
                .into_par_iter()
                .map(|idx| {
                    let (y, s) = table.node(idx);
                    table.convolve_defect(k - 1, y, s)
                })
                .collect();
            let norm = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let prev = table.term_norms[k - 1];
            if norm > prev && norm > 1e-14 {
                return Err(Error::SeriesDivergence {
                    order: k + 1,
                    detail: format!("term sup {norm:.3e} exceeds previous {prev:.3e}; g(theta) is suspect near the source"),
                });
            }
            table.push_term(next);
            let total = table.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm <= config.series_tol * total {
                break;
            }
        }
        Ok(table)
    }

    fn push_term(&mut self, values: Vec<f64>) {
        let nz = self.zeta.len();
        let sup = |j: usize| values[j * nz..(j + 1) * nz].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (m0, m1) = (sup(0), sup(1));
        let beta = if m0 > 0.0 && m1 > 0.0 {
            (-(m1 / m0).ln() / (self.offsets[1] / self.offsets[0]).ln()).clamp(0.0, 1.5)
        } else {
            0.0
        };
        self.term_norms.push(values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        self.exponents.push(beta);
        for (p, v) in self.phi.iter_mut().zip(&values) {
            *p += v;
        }
        self.terms.push(values);
    }

    fn width(&self, offset: f64) -> f64 {
        (2.0 * self.g_max * offset).sqrt()
    }

    fn node(&self, idx: usize) -> (f64, f64) {
        let nz = self.zeta.len();
        let (j, l) = (idx / nz, idx % nz);
        let off = self.offsets[j];
        (self.xi + self.width(off) * self.zeta[l], self.tau + off)
    }

    fn g_at(&self, x: f64, t: f64) -> f64 {
        self.f.g(self.theta.value(x, t))
    }

    /// `K(y,s; eta,sigma)` with `g(eta, sigma)` supplied.
    fn defect(&self, y: f64, s: f64, eta: f64, sigma: f64, g_src: f64) -> f64 {
        (self.g_at(y, s) - g_src) * heat_xx(g_src, self.decay, y - eta, s - sigma)
    }

    /// Term `k` at an arbitrary point: closed form for the first term,
    /// similarity interpolation otherwise.
    fn term_at(&self, k: usize, eta: f64, sigma: f64) -> f64 {
        let off = sigma - self.tau;
        if off <= 0.0 {
            return 0.0;
        }
        if k == 0 {
            return self.defect(eta, sigma, self.xi, self.tau, self.g_source);
        }
        let n_lev = self.offsets.len();
        let z = (eta - self.xi) / self.width(off);
        let beta = self.exponents[k];
        let pos = (off / self.horizon).powf(0.25) * n_lev as f64 - 0.5;
        let level = |j: usize| self.zeta_interp(&self.terms[k], j, z) * self.offsets[j].powf(beta);
        let scaled = if pos <= 0.0 {
            level(0)
        } else if pos >= (n_lev - 1) as f64 {
            level(n_lev - 1)
        } else {
            let j0 = pos.floor() as usize;
            let r = pos - j0 as f64;
            let a = level(j0);
            a + r * (level(j0 + 1) - a)
        };
        scaled * off.powf(-beta)
    }

    fn phi_at(&self, eta: f64, sigma: f64) -> f64 {
        (0..self.terms.len()).map(|k| self.term_at(k, eta, sigma)).sum()
    }

    fn zeta_interp(&self, values: &[f64], j: usize, z: f64) -> f64 {
        let nz = self.zeta.len();
        let dz = self.zeta[1] - self.zeta[0];
        let s = (z - self.zeta[0]) / dz;
        if s < 0.0 || s > (nz - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(nz - 2);
        let r = s - i as f64;
        let row = &values[j * nz..(j + 1) * nz];
        let at = |m: isize| -> f64 {
            if m < 0 || m >= nz as isize {
                0.0
            } else {
                row[m as usize]
            }
        };
        let i = i as isize;
        catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), r)
    }

    /// Number of whole lattice cells below the midpoint `(tau + t)/2`.
    pub fn split_for(&self, t: f64) -> usize {
        let n_lev = self.offsets.len();
        let u = ((t - self.tau) / self.horizon).max(0.0).powf(0.25);
        ((u * 0.5f64.powf(0.25) * n_lev as f64).floor() as usize).min(n_lev)
    }

    /// Midpoint-in-`u` weight of level `j` (`d sigma = 4 H u^3 du`).
    fn level_weight(&self, j: usize) -> f64 {
        let n_lev = self.offsets.len() as f64;
        let u = (j as f64 + 0.5) / n_lev;
        4.0 * self.horizon * u.powi(3) / n_lev
    }

    /// `int_tau^t int kern(x,t; eta,sigma) field(eta,sigma)`, the first
    /// `split` cells on the lattice and the rest with a local rule around `x`.
    fn space_time_integral(
        &self,
        x: f64,
        t: f64,
        split: usize,
        lattice: &[f64],
        kern: &dyn Fn(f64, f64, f64) -> f64,
        field: &dyn Fn(f64, f64) -> f64,
    ) -> f64 {
        let nz = self.zeta.len();
        let dz = self.zeta[1] - self.zeta[0];
        let mut acc = 0.0;
        for j in 0..split {
            let off = self.offsets[j];
            let sigma = self.tau + off;
            let w = self.width(off);
            let mut row = 0.0;
            for l in 0..nz {
                let v = lattice[j * nz + l];
                if v != 0.0 {
                    row += kern(x - self.xi - w * self.zeta[l], sigma, self.xi + w * self.zeta[l]) * v;
                }
            }
            acc += self.level_weight(j) * row * w * dz;
        }
        let n_lev = self.offsets.len() as f64;
        let sigma_a = self.tau + self.horizon * (split as f64 / n_lev).powi(4);
        if t <= sigma_a {
            return acc;
        }
        let centred = |centre: f64, spread: f64, sigma: f64| -> f64 {
            let m = self.config.local_space_points;
            let half = self.config.window * spread;
            let step = 2.0 * half / (m - 1) as f64;
            let mut s = 0.0;
            for q in 0..m {
                let eta = centre - half + q as f64 * step;
                let v = field(eta, sigma);
                if v != 0.0 {
                    s += kern(x - eta, sigma, eta) * v;
                }
            }
            s * step
        };
        if split > 0 {
            for (sigma, w) in graded_rule_upper(sigma_a, t, &self.gl) {
                acc += w * centred(x, self.width(t - sigma), sigma);
            }
        } else {
            let mid = 0.5 * (self.tau + t);
            for (sigma, w) in graded_rule_lower(self.tau, mid, &self.gl) {
                acc += w * centred(self.xi, self.width(sigma - self.tau), sigma);
            }
            for (sigma, w) in graded_rule_upper(mid, t, &self.gl) {
                acc += w * centred(x, self.width(t - sigma), sigma);
            }
        }
        acc
    }

    fn convolve_defect(&self, k: usize, y: f64, s: f64) -> f64 {
        let g_target = self.g_at(y, s);
        let decay = self.decay;
        let kern = |r: f64, sigma: f64, eta: f64| -> f64 {
            let gs = self.g_at(eta, sigma);
            (g_target - gs) * heat_xx(gs, decay, r, s - sigma)
        };
        let field = |eta: f64, sigma: f64| self.term_at(k, eta, sigma);
        self.space_time_integral(y, s, self.split_for(s), &self.terms[k], &kern, &field)
    }

    /// `Gamma(x, t; xi, tau)` with the lattice/local split fixed to `split`.
    pub fn gamma_with_split(&self, x: f64, t: f64, split: usize) -> GammaProbe {
        let dt = t - self.tau;
        let frozen = heat(self.g_source, self.decay, x - self.xi, dt);
        let frozen_x = heat_x(self.g_source, self.decay, x - self.xi, dt);
        let decay = self.decay;
        let value = |r: f64, sigma: f64, eta: f64| heat(self.g_at(eta, sigma), decay, r, t - sigma);
        let deriv = |r: f64, sigma: f64, eta: f64| heat_x(self.g_at(eta, sigma), decay, r, t - sigma);
        let field = |eta: f64, sigma: f64| self.phi_at(eta, sigma);
        let corr = self.space_time_integral(x, t, split, &self.phi, &value, &field);
        let corr_x = self.space_time_integral(x, t, split, &self.phi, &deriv, &field);
        GammaProbe {
            gamma: frozen + corr,
            frozen,
            gamma_x: frozen_x + corr_x,
        }
    }

    pub fn gamma(&self, x: f64, t: f64) -> Result<GammaProbe> {
        if !(t > self.tau) || t > self.tau + self.horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "Gamma evaluated at t = {t} outside (tau, tau + H] = ({}, {}]",
                self.tau,
                self.tau + self.horizon
            )));
        }
        Ok(self.gamma_with_split(x, t, self.split_for(t)))
    }

    /// `(s - tau, sup_y |Phi(y, s)|)` per level.
    pub fn phi_sup_by_level(&self) -> Vec<(f64, f64)> {
        let nz = self.zeta.len();
        self.offsets
            .iter()
            .enumerate()
            .map(|(j, &off)| (off, self.phi[j * nz..(j + 1) * nz].iter().fold(0.0f64, |m, v| m.max(v.abs()))))
            .collect()
    }

    /// Power law of `sup |Phi|` over the levels with `s - tau <= fraction H`.
    pub fn phi_exponent(&self, fraction: f64) -> Option<PowerFit> {
        let (s, v): (Vec<f64>, Vec<f64>) = self
            .phi_sup_by_level()
            .into_iter()
            .filter(|(off, _)| *off <= fraction * self.horizon)
            .unzip();
        fit_power_law(&s, &v)
    }

    /// Smallest `C` with `|Phi| <= C (s-tau)^-beta exp(-d (y-xi)^2 / 4(s-tau))`
    /// on every lattice node, for `d = 1/(2 g_max)`.
    pub fn phi_gaussian_constant(&self, beta: f64) -> f64 {
        let d = 0.5 / self.g_max;
        let nz = self.zeta.len();
        let mut c = 0.0f64;
        for (j, &off) in self.offsets.iter().enumerate() {
            let w = self.width(off);
            for l in 0..nz {
                let r = w * self.zeta[l];
                let env = off.powf(-beta) * (-d * r * r / (4.0 * off)).exp();
                c = c.max(self.phi[j * nz + l].abs() / env);
            }
        }
        c
    }

    /// `sup_x |Gamma - Z|` at each requested time, over a similarity grid of
    /// `points` abscissae in `|x - xi| <= spread * sqrt(2 g_max (t - tau))`.
    pub fn correction_sup(&self, times: &[f64], spread: f64, points: usize) -> Vec<f64> {
        times
            .par_iter()
            .map(|&t| {
                let w = self.width(t - self.tau);
                (0..points)
                    .map(|q| {
                        let x = self.xi - spread * w + 2.0 * spread * w * q as f64 / (points - 1) as f64;
                        let p = self.gamma_with_split(x, t, self.split_for(t));
                        (p.gamma - p.frozen).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Finite-difference residual of `L Gamma` at off-diagonal points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `(x, t, residual, scale)` with `scale = |Gamma_t| + |g Gamma_xx| + |decay Gamma|`.
    pub points: Vec<(f64, f64, f64, f64)>,
    pub max_abs: f64,
    pub max_relative: f64,
}

/// Fourth-order stencils with `h_x = hx * sqrt(t - tau)`, `h_t = ht * (t - tau)`;
/// the lattice split is frozen per point so `Gamma` is smooth over the stencil.
pub fn gamma_fd_residual(table: &ParametrixTable<'_>, points: &[(f64, f64)], hx: f64, ht: f64) -> ResidualReport {
    let rows: Vec<(f64, f64, f64, f64)> = points
        .par_iter()
        .map(|&(x, t)| {
            let dt = t - table.tau;
            let (h, k) = (hx * dt.sqrt(), ht * dt);
            let split = table.split_for(t - 2.0 * k);
            let gm = |x: f64, t: f64| table.gamma_with_split(x, t, split).gamma;
            let centre = gm(x, t);
            let gxx = (-gm(x + 2.0 * h, t) + 16.0 * gm(x + h, t) - 30.0 * centre + 16.0 * gm(x - h, t)
                - gm(x - 2.0 * h, t))
                / (12.0 * h * h);
            let gt = (-gm(x, t + 2.0 * k) + 8.0 * gm(x, t + k) - 8.0 * gm(x, t - k) + gm(x, t - 2.0 * k)) / (12.0 * k);
            let g = table.g_at(x, t);
            let res = gt - g * gxx + table.decay * centre;
            (x, t, res, gt.abs() + (g * gxx).abs() + (table.decay * centre).abs())
        })
        .collect();
    let max_abs = rows.iter().fold(0.0f64, |m, r| m.max(r.2.abs()));
    let scale = rows.iter().fold(0.0f64, |m, r| m.max(r.3));
    ResidualReport {
        points: rows,
        max_abs,
        max_relative: if scale > 0.0 { max_abs / scale } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::LeslieCoefficients;

    #[test]
    fn constant_g_gives_the_frozen_kernel() {
        let f = LeslieCoefficients::special(1.0, 1.0).functions();
        let theta = |_: f64, _: f64| 0.3;
        for decay in [0.0, 1.0] {
            let table = ParametrixTable::build(&theta, &f, decay, 0.2, 0.1, 0.5, ParametrixConfig::default()).unwrap();
            assert!(table.phi.iter().all(|&v| v == 0.0));
            let p = table.gamma(0.5, 0.4).unwrap();
            let exact = (-decay * 0.3f64).exp() * (-(0.3f64 * 0.3) / (4.0 * 0.3)).exp() / (4.0 * std::f64::consts::PI * 0.3f64).sqrt();
            assert!((p.gamma - exact).abs() < 1e-15 * exact.max(1.0));
        }
    }

    #[test]
    fn fit_recovers_power() {
        let s: Vec<f64> = (1..20).map(|k| 0.01 * k as f64).collect();
        let v: Vec<f64> = s.iter().map(|x| 3.0 * x.powf(-1.25)).collect();
        let fit = fit_power_law(&s, &v).unwrap();
        assert!((fit.exponent + 1.25).abs() < 1e-12);
        assert!((fit.constant - 3.0).abs() < 1e-10);
        assert!(fit_power_law(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn evaluation_outside_the_horizon_is_rejected() {
        let f = LeslieCoefficients::special(1.0, 1.0).functions();
        let theta = |_: f64, _: f64| 0.0;
        let table = ParametrixTable::build(&theta, &f, 0.0, 0.0, 0.0, 0.5, ParametrixConfig::default()).unwrap();
        assert!(table.gamma(0.0, 0.0).is_err());
        assert!(table.gamma(0.0, 0.7).is_err());
    }
}
