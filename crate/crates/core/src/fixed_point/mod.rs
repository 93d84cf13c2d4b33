//! The map on the flux
//!
//! ```text
//! J  ->  theta (wave equation driven by J)  ->  v  ->  A  ->  A_x + J0
//! ```
//!
//! and its damped Picard iteration. `v` solves `v_t = g v_xx + h theta_t` from
//! `v0 = int u0`; `A` solves `A_t = g A_xx - gamma1 A + g' theta_x J + F` from
//! zero. Both parabolic stages run either by finite differences on the lattice
//! or through the kernel potentials.

mod norms;
mod parabolic;

pub use norms::{consistency_j, weighted_norms, ConsistencyReport, WeightedNorms};
pub use parabolic::crank_nicolson;

use serde::{Deserialize, Serialize};

use crate::characteristic::{integrate_semilinear, map_back, to_characteristic, SweepConfig};
use crate::coefficients::CoefficientFunctions;
use crate::diagnostics::{energy, holder_quotient};
use crate::direct::solve_wave;
use crate::error::{Error, Result};
use crate::grid::{Grid1D, SpaceTimeField};
use crate::kernel::{assemble_forcing, solve_a_kernel, solve_v_kernel, AForcing, AInputs, LeviConfig, LeviOperator};
use crate::state::PhysicalState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveSolver {
    /// Finite differences unless `|w|` or `|z|` passes `pi/2` on the first map.
    Auto,
    FiniteDifference,
    Characteristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParabolicSolver {
    FiniteDifference,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointConfig {
    pub t_final: f64,
    /// Sup-norm threshold on `J^{k+1} - J^k`.
    pub tol: f64,
    pub max_iter: usize,
    /// Picard damping `omega` in `(0, 1]`.
    pub relaxation: f64,
    /// Weight exponent for the diagnostic norms; `None` picks the default from the energy.
    pub lambda: Option<f64>,
    /// Hölder exponent of the reported norms, in `(0, 1/4)`.
    pub alpha: f64,
    /// Lattice step as a fraction of `dx / c_max`.
    pub cfl: f64,
    pub wave: WaveSolver,
    pub parabolic: ParabolicSolver,
    pub kernel: LeviConfig,
    /// Random pairs in the Hölder quotients.
    pub holder_pairs: usize,
    pub seed: u64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            tol: 1e-6,
            max_iter: 50,
            relaxation: 0.7,
            lambda: None,
            alpha: 0.2,
            cfl: 0.5,
            wave: WaveSolver::Auto,
            parabolic: ParabolicSolver::FiniteDifference,
            kernel: LeviConfig::default(),
            holder_pairs: 10_000,
            seed: 0,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.t_final > 0.0) {
            bad.push("t_final must be positive");
        }
        if !(self.tol > 0.0) {
            bad.push("tol must be positive");
        }
        if self.max_iter == 0 {
            bad.push("max_iter must be at least 1");
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            bad.push("relaxation must lie in (0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha < 0.25) {
            bad.push("alpha must lie in (0, 1/4)");
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            bad.push("cfl must lie in (0, 1]");
        }
        if matches!(self.lambda, Some(l) if !(l >= 0.0)) {
            bad.push("lambda must be non-negative");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(bad.join("; ")))
        }
    }

    /// Uniform time levels on `[t0, t0 + T]` with step at most `cfl dx / c_max`.
    pub fn lattice(&self, initial: &PhysicalState, f: &CoefficientFunctions) -> Vec<f64> {
        let step = self.cfl * initial.grid.dx() / f.c_max();
        let m = (self.t_final / step - 1e-9).ceil().max(2.0) as usize;
        (0..=m).map(|k| initial.t + self.t_final * k as f64 / m as f64).collect()
    }
}

/// Default weight `max{(2 sqrt 2)^8 T E0^8, 36 E0^2 |g'|^2 T}`.
pub fn default_lambda(initial: &PhysicalState, f: &CoefficientFunctions, t_final: f64) -> f64 {
    let e0 = energy(initial, f).total;
    let gp = f.g_prime_sup();
    (4096.0 * t_final * e0.powi(8)).max(36.0 * e0 * e0 * gp * gp * t_final)
}

/// Which wave solver produced `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveUsed {
    FiniteDifference,
    Characteristic,
}

/// Everything one application of the map produces.
#[derive(Debug, Clone)]
pub struct MapOutput {
    pub j: SpaceTimeField,
    pub theta: SpaceTimeField,
    pub theta_t: SpaceTimeField,
    pub theta_x: SpaceTimeField,
    pub v: SpaceTimeField,
    pub v_x: SpaceTimeField,
    pub a: SpaceTimeField,
    pub forcing: AForcing,
    pub wave: WaveUsed,
}

struct WaveFields {
    theta: SpaceTimeField,
    theta_t: SpaceTimeField,
    theta_x: SpaceTimeField,
}

fn wave_fd(j: &SpaceTimeField, initial: &PhysicalState, f: &CoefficientFunctions, cfl: f64) -> Result<WaveFields> {
    let flux = |x: f64, t: f64| j.sample(x, t);
    let sol = solve_wave(&initial.grid, &initial.theta, &initial.theta_t, f, &flux, &j.times, cfl)?;
    Ok(WaveFields {
        theta: sol.theta,
        theta_t: sol.theta_t,
        theta_x: sol.theta_x,
    })
}

/// Linear fill of the gaps a cusp leaves in the mapped derivatives.
fn fill_gaps(row: &mut [f64]) {
    let known: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_finite()).collect();
    if known.is_empty() {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for i in 0..row.len() {
        if row[i].is_finite() {
            continue;
        }
        let right = known.partition_point(|&k| k < i);
        row[i] = match (right.checked_sub(1).map(|p| known[p]), known.get(right)) {
            (Some(l), Some(&r)) => row[l] + (row[r] - row[l]) * (i - l) as f64 / (r - l) as f64,
            (Some(l), None) => row[l],
            (None, Some(&r)) => row[r],
            (None, None) => 0.0,
        };
    }
}

fn wave_characteristic(j: &SpaceTimeField, initial: &PhysicalState, f: &CoefficientFunctions) -> Result<WaveFields> {
    let t0 = j.times[0];
    let t_final = j.times[j.n_t() - 1] - t0;
    let flux = |x: f64, t: f64| j.sample(x, t + t0);
    let (cg, curve) = to_characteristic(&initial.grid, &initial.theta, &initial.theta_t, f, t_final)?;
    let sol = integrate_semilinear(&cg, &curve, f, &flux, &SweepConfig::default())?;
    let local: Vec<f64> = j.times.iter().map(|t| t - t0).collect();
    let mut mapped = map_back(&sol, f, &local, 0.05)?;
    if mapped.theta.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "characteristic lattice covers only {:.1}% of the slab",
            100.0 * mapped.coverage()
        )));
    }
    for field in [&mut mapped.theta_t, &mut mapped.theta_x] {
        field.times = j.times.clone();
        for k in 0..field.n_t() {
            fill_gaps(field.row_mut(k));
        }
    }
    mapped.theta.times = j.times.clone();
    Ok(WaveFields {
        theta: mapped.theta,
        theta_t: mapped.theta_t,
        theta_x: mapped.theta_x,
    })
}

/// Largest `|R|, |S|` on the lattice; `|w| > pi/2` exactly when this exceeds 1.
fn riemann_sup(w: &WaveFields, f: &CoefficientFunctions) -> f64 {
    w.theta
        .data
        .iter()
        .zip(&w.theta_t.data)
        .zip(&w.theta_x.data)
        .map(|((&th, &tt), &tx)| {
            let c = f.c(th);
            (tt + c * tx).abs().max((tt - c * tx).abs())
        })
        .fold(0.0, f64::max)
}

fn x_derivative(field: &SpaceTimeField) -> SpaceTimeField {
    let mut out = field.clone();
    for k in 0..field.n_t() {
        let d = field.grid.ddx(field.row(k));
        out.row_mut(k).copy_from_slice(&d);
    }
    out
}

/// One application of the map. `J(., t0)` must equal `initial.j0`.
pub fn map_m(
    j: &SpaceTimeField,
    initial: &PhysicalState,
    f: &CoefficientFunctions,
    config: &FixedPointConfig,
    wave: WaveUsed,
) -> Result<MapOutput> {
    let grid = initial.grid;
    if j.grid != grid || j.n_t() < 3 {
        return Err(Error::InvalidInput("J must live on the initial grid with at least three time levels".into()));
    }
    let w = match wave {
        WaveUsed::FiniteDifference => wave_fd(j, initial, f, config.cfl),
        WaveUsed::Characteristic => wave_characteristic(j, initial, f),
    }
    .map_err(|e| e.in_stage("wave"))?;
    let (v, v_x) = solve_v(&w, initial, f, config).map_err(|e| e.in_stage("v"))?;
    let forcing = assemble_forcing(&w.theta, &w.theta_t, &w.theta_x, &v_x, &initial.j0, f).map_err(|e| e.in_stage("A"))?;
    let (a, a_x) = solve_a(&w, &v_x, j, &initial.j0, &forcing, f, config).map_err(|e| e.in_stage("A"))?;
    let mut j_new = a_x;
    for k in 0..j_new.n_t() {
        for (out, j0) in j_new.row_mut(k).iter_mut().zip(&initial.j0) {
            if k == 0 {
                *out = *j0;
            } else {
                *out += j0;
            }
        }
    }
    Ok(MapOutput {
        j: j_new,
        theta: w.theta,
        theta_t: w.theta_t,
        theta_x: w.theta_x,
        v,
        v_x,
        a,
        forcing,
        wave,
    })
}

fn solve_v(
    w: &WaveFields,
    initial: &PhysicalState,
    f: &CoefficientFunctions,
    config: &FixedPointConfig,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    match config.parabolic {
        ParabolicSolver::FiniteDifference => {
            let g = w.theta.map(|th| f.g(th));
            let source = w.theta.zip_map(&w.theta_t, |th, tt| f.h(th) * tt);
            let v = crank_nicolson(&g, 0.0, &source, &initial.v)?;
            let v_x = x_derivative(&v);
            Ok((v, v_x))
        }
        ParabolicSolver::Kernel => {
            let k = solve_v_kernel(&w.theta, &w.theta_t, &initial.v, f, config.kernel)?;
            Ok((k.value, k.dx))
        }
    }
}

fn solve_a(
    w: &WaveFields,
    v_x: &SpaceTimeField,
    j: &SpaceTimeField,
    j0: &[f64],
    forcing: &AForcing,
    f: &CoefficientFunctions,
    config: &FixedPointConfig,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    match config.parabolic {
        ParabolicSolver::FiniteDifference => {
            let mut source = forcing.total.clone();
            for (idx, s) in source.data.iter_mut().enumerate() {
                *s += f.g_prime(w.theta.data[idx]) * w.theta_x.data[idx] * j.data[idx];
            }
            let g = w.theta.map(|th| f.g(th));
            let a = crank_nicolson(&g, f.gamma1(), &source, &vec![0.0; j.grid.n])?;
            let a_x = x_derivative(&a);
            Ok((a, a_x))
        }
        ParabolicSolver::Kernel => {
            let inputs = AInputs {
                theta: &w.theta,
                theta_t: &w.theta_t,
                theta_x: &w.theta_x,
                v_x,
                j,
                j0,
            };
            let k = solve_a_kernel(&inputs, f, config.kernel)?;
            Ok((k.value, k.dx))
        }
    }
}

/// Contribution of `g'(theta) theta_x J` alone to the next flux, on frozen
/// `theta`: the `x`-derivative of the solution of `L Q = g' theta_x J`, `Q(0) = 0`.
pub fn q_contribution(
    theta: &SpaceTimeField,
    theta_x: &SpaceTimeField,
    j: &SpaceTimeField,
    f: &CoefficientFunctions,
    config: &FixedPointConfig,
) -> Result<SpaceTimeField> {
    let mut source = j.clone();
    for (idx, s) in source.data.iter_mut().enumerate() {
        *s *= f.g_prime(theta.data[idx]) * theta_x.data[idx];
    }
    match config.parabolic {
        ParabolicSolver::FiniteDifference => {
            let g = theta.map(|th| f.g(th));
            Ok(x_derivative(&crank_nicolson(&g, f.gamma1(), &source, &vec![0.0; j.grid.n])?))
        }
        ParabolicSolver::Kernel => {
            let op = LeviOperator::new(theta, f, f.gamma1(), config.kernel)?;
            Ok(op.potential(&source)?.dx)
        }
    }
}

/// Largest of the three weighted norms.
fn ball_norm(field: &SpaceTimeField, lambda: f64, alpha: f64, pairs: usize, seed: u64) -> f64 {
    let n = weighted_norms(field, lambda, alpha, pairs, seed);
    n.sup.max(n.l2).max(n.holder)
}

fn initial_norm(grid: &Grid1D, j0: &[f64], alpha: f64, pairs: usize, seed: u64) -> f64 {
    let sup = j0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    sup + grid.l2_norm(j0) + holder_quotient(grid, j0, alpha, pairs, seed).quotient
}

/// Bounds on the data-only part of the forcing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForcingBound {
    /// `||G||_{L^inf}`.
    pub g_sup: f64,
    /// `sup_t ||f(t)||_{L^2}`.
    pub f_l2: f64,
    pub c0: f64,
}

impl ForcingBound {
    fn of(forcing: &AForcing) -> Self {
        let g_sup = forcing.integral.sup_norm();
        let grid = forcing.local.grid;
        let f_l2 = (0..forcing.local.n_t())
            .map(|k| grid.l2_norm(forcing.local.row(k)))
            .fold(0.0, f64::max);
        Self {
            g_sup,
            f_l2,
            c0: g_sup.max(f_l2),
        }
    }

    fn max(self, other: Self) -> Self {
        Self {
            g_sup: self.g_sup.max(other.g_sup),
            f_l2: self.f_l2.max(other.f_l2),
            c0: self.c0.max(other.c0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    /// `||J^{k+1} - J^k||` in sup, per-slice `L^2` (max over slices) and weighted sup.
    pub residual_sup: Vec<f64>,
    pub residual_l2: Vec<f64>,
    pub residual_weighted: Vec<f64>,
    /// Weighted norm (largest of sup, `L^2`, Hölder) of every iterate `J^k`,
    /// checked against `k_t`.
    pub iterate_norms: Vec<f64>,
    pub ball: Vec<bool>,
    pub k_t: f64,
    pub j0_norm: f64,
    pub forcing: ForcingBound,
    pub lambda: f64,
    pub converged: bool,
    pub diverged: bool,
    pub wave: WaveUsed,
    pub final_norms: WeightedNorms,
    #[serde(skip)]
    pub fields: Option<MapOutput>,
}

impl FixedPointReport {
    pub fn iterations(&self) -> usize {
        self.residual_sup.len()
    }

    pub fn all_in_ball(&self) -> bool {
        self.ball.iter().all(|&b| b)
    }
}

/// Consecutive residual increases that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 5;

/// Flags a residual history that is non-finite or has risen
/// [`DIVERGENCE_WINDOW`] times in a row.
#[derive(Debug, Default, Clone, Copy)]
pub struct DivergenceMonitor {
    prev: Option<f64>,
    rising: usize,
}

impl DivergenceMonitor {
    pub fn observe(&mut self, residual: f64) -> bool {
        if let Some(prev) = self.prev {
            self.rising = if residual > prev { self.rising + 1 } else { 0 };
        }
        self.prev = Some(residual);
        !residual.is_finite() || self.rising >= DIVERGENCE_WINDOW
    }
}

/// Damped Picard iteration `J^{k+1} = (1 - omega) J^k + omega M(J^k)` from
/// `J^0(x, t) = J0(x)`.
pub fn iterate(initial: &PhysicalState, f: &CoefficientFunctions, config: &FixedPointConfig) -> Result<FixedPointReport> {
    config.validate()?;
    let grid = initial.grid;
    let times = config.lattice(initial, f);
    let lambda = config.lambda.unwrap_or_else(|| default_lambda(initial, f, config.t_final));
    let mut j = SpaceTimeField::zeros(grid, times);
    for k in 0..j.n_t() {
        j.row_mut(k).copy_from_slice(&initial.j0);
    }
    let wave = match config.wave {
        WaveSolver::FiniteDifference => WaveUsed::FiniteDifference,
        WaveSolver::Characteristic => WaveUsed::Characteristic,
        WaveSolver::Auto => {
            let probe = wave_fd(&j, initial, f, config.cfl).map_err(|e| e.in_stage("wave"))?;
            if riemann_sup(&probe, f) > 1.0 {
                WaveUsed::Characteristic
            } else {
                WaveUsed::FiniteDifference
            }
        }
    };
    let (pairs, seed) = (config.holder_pairs, config.seed);
    let mut report = FixedPointReport {
        residual_sup: Vec::new(),
        residual_l2: Vec::new(),
        residual_weighted: Vec::new(),
        iterate_norms: Vec::new(),
        ball: Vec::new(),
        k_t: 0.0,
        j0_norm: initial_norm(&grid, &initial.j0, config.alpha, pairs, seed),
        forcing: ForcingBound {
            g_sup: 0.0,
            f_l2: 0.0,
            c0: 0.0,
        },
        lambda,
        converged: false,
        diverged: false,
        wave,
        final_norms: weighted_norms(&j, lambda, config.alpha, pairs, seed),
        fields: None,
    };
    let mut monitor = DivergenceMonitor::default();
    for _ in 0..config.max_iter {
        report.iterate_norms.push(ball_norm(&j, lambda, config.alpha, pairs, seed));
        let out = map_m(&j, initial, f, config, wave)?;
        report.forcing = report.forcing.max(ForcingBound::of(&out.forcing));
        let diff = out.j.zip_map(&j, |a, b| a - b);
        let sup = diff.sup_norm();
        let l2 = (0..diff.n_t()).map(|k| grid.l2_norm(diff.row(k))).fold(0.0, f64::max);
        let weighted = weighted_norms(&diff, lambda, config.alpha, 0, seed).sup;
        report.residual_sup.push(sup);
        report.residual_l2.push(l2);
        report.residual_weighted.push(weighted);
        if sup <= config.tol {
            report.converged = true;
            report.fields = Some(out);
            break;
        }
        if monitor.observe(sup) {
            report.diverged = true;
            report.fields = Some(out);
            break;
        }
        let omega = config.relaxation;
        j = j.zip_map(&out.j, |old, new| (1.0 - omega) * old + omega * new);
        report.fields = Some(out);
    }
    let c0 = report.forcing.c0;
    report.k_t = 2.0 * (report.j0_norm + c0.max(c0 * c0) * config.t_final * config.t_final);
    report.ball = report.iterate_norms.iter().map(|&v| v <= report.k_t).collect();
    if let Some(out) = &report.fields {
        report.final_norms = weighted_norms(&out.j, lambda, config.alpha, pairs, seed);
    }
    Ok(report)
}
