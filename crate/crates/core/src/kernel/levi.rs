use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, graded_rule_upper, plain_rule};
use super::{kernel_eval, KernelKind};
use crate::coefficients::CoefficientFunctions;
use crate::diagnostics::holder_quotient;
use crate::error::{Error, Result};
use crate::grid::{Grid1D, SpaceTimeField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeviConfig {
    /// Maximum number of `K`-convolutions in the Volterra series.
    pub max_terms: usize,
    /// Stop once a term's sup-norm falls below this fraction of the partial sum.
    pub series_tol: f64,
    /// Gauss-Legendre nodes per lattice time interval.
    pub time_nodes: usize,
    /// Spatial half-window in units of `sqrt(2 g_max (t - tau))`.
    pub window: f64,
    /// Fail on a non-decaying series instead of only reporting it.
    pub strict: bool,
}

impl Default for LeviConfig {
    fn default() -> Self {
        Self {
            max_terms: 3,
            series_tol: 1e-3,
            time_nodes: 4,
            window: 7.0,
            strict: true,
        }
    }
}

/// Sup-norms of the Volterra terms `K^{*m} F`, `m = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub source_norm: f64,
    pub term_norms: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub value: SpaceTimeField,
    pub dx: SpaceTimeField,
    pub series: SeriesReport,
}

/// `int Gamma(x,t; xi,t0) phi(xi) d xi` and its `x`-derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLayer {
    pub value: SpaceTimeField,
    pub dx: SpaceTimeField,
    pub series: SeriesReport,
}

/// Something that can produce a full spatial row at any time in the slab.
trait RowSource: Sync {
    fn row(&self, tau: f64) -> Vec<f64>;
}

fn lerp_row(field: &SpaceTimeField, tau: f64) -> Vec<f64> {
    let (k, w) = field.time_bracket(tau);
    let a = field.row(k);
    if w == 0.0 || field.n_t() == 1 {
        return a.to_vec();
    }
    let b = field.row(k + 1);
    a.iter().zip(b).map(|(&p, &q)| p + w * (q - p)).collect()
}

impl RowSource for SpaceTimeField {
    fn row(&self, tau: f64) -> Vec<f64> {
        lerp_row(self, tau)
    }
}

struct Sum<'a>(Vec<&'a dyn RowSource>);

impl RowSource for Sum<'_> {
    fn row(&self, tau: f64) -> Vec<f64> {
        let mut out = self.0[0].row(tau);
        for s in &self.0[1..] {
            for (o, v) in out.iter_mut().zip(s.row(tau)) {
                *o += v;
            }
        }
        out
    }
}

/// `chi_1(x, s) = int K(x,s; xi,t0) phi(xi) d xi`, computed on demand so the
/// singular start of the slab is never interpolated.
struct InitialDefect<'a> {
    op: &'a LeviOperator,
    phi: &'a [f64],
}

impl RowSource for InitialDefect<'_> {
    fn row(&self, tau: f64) -> Vec<f64> {
        let op = self.op;
        let t0 = op.times[0];
        let dt = tau - t0;
        if dt <= 0.0 {
            return vec![0.0; op.grid.n];
        }
        let g_now = lerp_row(&op.g, tau);
        let g0 = op.g.row(0);
        (0..op.grid.n)
            .map(|i| op.space_sum(KernelKind::Defect, op.grid.x(i), dt, g_now[i], g0, self.phi))
            .collect()
    }
}

/// Lattice evaluation of the Levi potentials for a fixed `g(theta)` field.
#[derive(Debug, Clone)]
pub struct LeviOperator {
    pub grid: Grid1D,
    pub times: Vec<f64>,
    /// `g(theta)` on the lattice.
    pub g: SpaceTimeField,
    pub decay: f64,
    pub g_max: f64,
    pub config: LeviConfig,
    gl: (Vec<f64>, Vec<f64>),
}

impl LeviOperator {
    pub fn new(theta: &SpaceTimeField, f: &CoefficientFunctions, decay: f64, config: LeviConfig) -> Result<Self> {
        if theta.n_t() < 2 {
            return Err(Error::InvalidInput("kernel lattice needs at least two time levels".into()));
        }
        if theta.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("kernel lattice times must increase".into()));
        }
        if !(decay >= 0.0) || config.time_nodes == 0 || !(config.window > 0.0) {
            return Err(Error::InvalidInput("invalid kernel configuration".into()));
        }
        let g = theta.map(|th| f.g(th));
        let g_max = g.data.iter().cloned().fold(0.0, f64::max);
        if !(g.data.iter().all(|&v| v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("g(theta) must be positive and finite".into()));
        }
        Ok(Self {
            grid: theta.grid,
            times: theta.times.clone(),
            g,
            decay,
            g_max,
            config,
            gl: gauss_legendre(config.time_nodes),
        })
    }

    fn zero_field(&self) -> SpaceTimeField {
        SpaceTimeField::zeros(self.grid, self.times.clone())
    }

    /// `int kernel(x - xi, dt) src(xi) d xi` with `g` frozen at `xi` from
    /// `g_row`. Uses the lattice nodes when they resolve the kernel and a
    /// local interpolated rule otherwise. On a decay grid `src` and `g` are
    /// continued by their end values.
    fn space_sum(&self, kind: KernelKind, x: f64, dt: f64, g_target: f64, g_row: &[f64], src: &[f64]) -> f64 {
        let grid = &self.grid;
        let n = grid.n;
        let h = grid.dx();
        let std = (2.0 * self.g_max * dt).sqrt();
        let half = self.config.window * std;
        let mut acc = 0.0;
        // Edges of the region covered by the rule, for the far-field tails.
        let (left_edge, right_edge);
        if h <= 0.5 * std {
            let lo = ((x - half - grid.x_min) / h).ceil() as isize;
            let hi = ((x + half - grid.x_min) / h).floor() as isize;
            let n = n as isize;
            for l in lo..=hi {
                let idx = if grid.is_periodic() {
                    l.rem_euclid(n)
                } else if l < 0 || l >= n {
                    continue;
                } else {
                    l
                } as usize;
                let s = src[idx];
                if s == 0.0 {
                    continue;
                }
                let r = x - (grid.x_min + l as f64 * h);
                acc += kernel_eval(kind, g_row[idx], g_target, self.decay, r, dt) * s;
            }
            acc *= h;
            left_edge = (lo < 0).then_some(grid.x_min - 0.5 * h);
            right_edge = (hi >= n).then_some(grid.x_max + 0.5 * h);
        } else {
            let points = (6.0 * self.config.window).ceil() as usize + 1;
            let step = 2.0 * half / (points - 1) as f64;
            let (mut first, mut last) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut clipped = (false, false);
            for m in 0..points {
                let eta = x - half + m as f64 * step;
                if !grid.is_periodic() && eta < grid.x_min {
                    clipped.0 = true;
                    continue;
                }
                if !grid.is_periodic() && eta > grid.x_max {
                    clipped.1 = true;
                    continue;
                }
                first = first.min(eta);
                last = last.max(eta);
                let s = grid.interpolate(src, eta);
                let gs = grid.interpolate(g_row, eta);
                acc += kernel_eval(kind, gs, g_target, self.decay, x - eta, dt) * s;
            }
            acc *= step;
            left_edge = clipped.0.then_some(first - 0.5 * step);
            right_edge = clipped.1.then_some(last + 0.5 * step);
        }
        if grid.is_periodic() {
            return acc;
        }
        if let Some(b) = right_edge {
            acc += src[n - 1] * self.tail(kind, g_row[n - 1], g_target, b - x, dt, 1.0);
        }
        if let Some(a) = left_edge {
            acc += src[0] * self.tail(kind, g_row[0], g_target, x - a, dt, -1.0);
        }
        acc
    }

    /// `int kernel(x - xi) d xi` over the half line beyond an edge at distance
    /// `gap` from `x`; `side` is +1 for the right edge and -1 for the left.
    fn tail(&self, kind: KernelKind, g: f64, g_target: f64, gap: f64, dt: f64, side: f64) -> f64 {
        match kind {
            KernelKind::Value => 0.5 * (-self.decay * dt).exp() * libm::erfc(gap / (4.0 * g * dt).sqrt()),
            KernelKind::Derivative => side * super::heat(g, self.decay, gap, dt),
            KernelKind::Defect => (g_target - g) * -super::heat_x(g, self.decay, gap, dt),
        }
    }

    /// Space-time convolution `int_{t0}^{t} int kernel(x,t; xi,tau) src(xi,tau)`
    /// on every lattice point; row 0 is zero.
    fn convolve(&self, kind: KernelKind, src: &dyn RowSource) -> SpaceTimeField {
        let nt = self.times.len();
        let n = self.grid.n;
        // Node rows per interval: plain (for earlier targets) and graded (for
        // the target at the interval's upper end).
        let intervals: Vec<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = (0..nt - 1)
            .map(|j| {
                let (a, b) = (self.times[j], self.times[j + 1]);
                (plain_rule(a, b, &self.gl), graded_rule_upper(a, b, &self.gl))
            })
            .collect();
        type Rows = Vec<(f64, f64, Vec<f64>, Vec<f64>)>;
        let rows: Vec<(Rows, Rows)> = intervals
            .par_iter()
            .map(|(plain, graded)| {
                let build = |nodes: &Vec<(f64, f64)>| -> Rows {
                    nodes.iter().map(|&(tau, w)| (tau, w, lerp_row(&self.g, tau), src.row(tau))).collect()
                };
                (build(plain), build(graded))
            })
            .collect();
        let mut out = self.zero_field();
        let values: Vec<f64> = (n..nt * n)
            .into_par_iter()
            .map(|flat| {
                let (k, i) = (flat / n, flat % n);
                let t = self.times[k];
                let x = self.grid.x(i);
                let g_target = self.g.at(k, i);
                let mut acc = 0.0;
                for (j, (plain, graded)) in rows.iter().enumerate().take(k) {
                    let nodes = if j + 1 == k { graded } else { plain };
                    for (tau, w, g_row, s_row) in nodes {
                        acc += w * self.space_sum(kind, x, t - tau, g_target, g_row, s_row);
                    }
                }
                acc
            })
            .collect();
        out.data[n..].copy_from_slice(&values);
        out
    }

    /// `psi = sum_m K^{*m} src` with adaptive truncation.
    fn series(&self, src: &dyn RowSource, source_norm: f64) -> Result<(SpaceTimeField, SeriesReport)> {
        let mut psi = self.zero_field();
        let mut report = SeriesReport {
            source_norm,
            term_norms: Vec::new(),
            converged: false,
        };
        if self.config.max_terms == 0 {
            report.converged = true;
            return Ok((psi, report));
        }
        let mut term = self.convolve(KernelKind::Defect, src);
        for m in 1..=self.config.max_terms {
            let norm = term.sup_norm();
            report.term_norms.push(norm);
            for (p, v) in psi.data.iter_mut().zip(&term.data) {
                *p += v;
            }
            if m >= 2 && norm > report.term_norms[m - 2] && norm > 1e-14 * source_norm.max(1e-300) {
                report.converged = false;
                if self.config.strict {
                    let holder = self.g_holder_quotient();
                    return Err(Error::SeriesDivergence {
                        order: m,
                        detail: format!(
                            "term {m} sup {norm:.3e} exceeds term {} sup {:.3e}; C^1/2 quotient of g(theta) on the last slice is {holder:.3e}",
                            m - 1,
                            report.term_norms[m - 2]
                        ),
                    });
                }
                return Ok((psi, report));
            }
            let partial = psi.sup_norm().max(source_norm);
            if norm <= self.config.series_tol * partial {
                report.converged = true;
                return Ok((psi, report));
            }
            if m < self.config.max_terms {
                term = self.convolve(KernelKind::Defect, &term);
            }
        }
        Ok((psi, report))
    }

    fn g_holder_quotient(&self) -> f64 {
        let last = self.g.row(self.times.len() - 1);
        holder_quotient(&self.grid, last, 0.5, 0, 0).quotient
    }

    /// `Z * src` only (no parametrix correction).
    pub fn frozen_potential(&self, src: &SpaceTimeField) -> SpaceTimeField {
        self.convolve(KernelKind::Value, src)
    }

    /// `M_F = Gamma * F` and `M_{F,x} = Gamma_x * F`.
    pub fn potential(&self, src: &SpaceTimeField) -> Result<Potential> {
        let (psi, series) = self.series(src, src.sup_norm())?;
        let total = src.zip_map(&psi, |a, b| a + b);
        Ok(Potential {
            value: self.convolve(KernelKind::Value, &total),
            dx: self.convolve(KernelKind::Derivative, &total),
            series,
        })
    }

    /// Solution of `L w = 0`, `w(t0) = phi`, and its `x`-derivative.
    pub fn initial_layer(&self, phi: &[f64]) -> Result<InitialLayer> {
        if phi.len() != self.grid.n {
            return Err(Error::InvalidInput("initial data does not match the grid".into()));
        }
        let chi = InitialDefect { op: self, phi };
        let nt = self.times.len();
        let chi_norm = (1..nt)
            .map(|k| chi.row(self.times[k]).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max);
        let (psi, series) = self.series(&chi, chi_norm)?;
        let total = Sum(vec![&chi, &psi]);
        let mut value = self.convolve(KernelKind::Value, &total);
        let mut dx = self.convolve(KernelKind::Derivative, &total);
        let g0 = self.g.row(0).to_vec();
        let t0 = self.times[0];
        let n = self.grid.n;
        let direct: Vec<(f64, f64)> = (n..nt * n)
            .into_par_iter()
            .map(|flat| {
                let (k, i) = (flat / n, flat % n);
                let dt = self.times[k] - t0;
                let x = self.grid.x(i);
                (
                    self.space_sum(KernelKind::Value, x, dt, 0.0, &g0, phi),
                    self.space_sum(KernelKind::Derivative, x, dt, 0.0, &g0, phi),
                )
            })
            .collect();
        for (flat, (v, d)) in (n..nt * n).zip(direct) {
            value.data[flat] += v;
            dx.data[flat] += d;
        }
        value.row_mut(0).copy_from_slice(phi);
        let phi_x = self.grid.ddx(phi);
        dx.row_mut(0).copy_from_slice(&phi_x);
        Ok(InitialLayer { value, dx, series })
    }
}
