//! Energy bookkeeping, Hölder quotients, the J-cancellation monitor and
//! trajectory comparison.
//!
//! Energies: `E = 1/2 int (theta_t^2 + c^2 theta_x^2)` (wave part) and
//! `Etot = int (theta_t^2 + c^2 theta_x^2 + u^2)`. Smooth solutions satisfy
//!
//! ```text
//! d Etot/dt = -2 int (g J^2 + (gamma1 - h^2/g) theta_t^2)
//! ```
//!
//! so the sharp defect `Etot(t) - Etot(0) + 2 int_0^t int (g J^2 + B theta_t^2)`
//! vanishes up to discretization error. The unit-weight residual
//! `r = Etot(t) - Etot(0) + int int (J^2 + theta_t^2)` is nonpositive whenever
//! `g >= 1/2` and `B >= 1/2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::CoefficientFunctions;
use crate::grid::Grid1D;
use crate::state::PhysicalState;

/// Calibrated constants of the dissipation tolerance `C1 dx^2 + C2 dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationTolerance {
    pub version: u32,
    pub c1: f64,
    pub c2: f64,
}

pub const DISSIPATION_TOLERANCE: DissipationTolerance = DissipationTolerance {
    version: 1,
    c1: 0.05,
    c2: 0.05,
};

impl DissipationTolerance {
    pub fn bound(&self, dx: f64, dt: f64) -> f64 {
        self.c1 * dx * dx + self.c2 * dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energies {
    /// `1/2 int (theta_t^2 + c^2 theta_x^2)`
    pub wave: f64,
    /// `int (theta_t^2 + c^2 theta_x^2 + u^2)`
    pub total: f64,
}

pub fn energy(state: &PhysicalState, f: &CoefficientFunctions) -> Energies {
    let grid = &state.grid;
    let thx = state.theta_x();
    let wave_density: Vec<f64> = (0..grid.n)
        .map(|i| state.theta_t[i].powi(2) + f.c2(state.theta[i]) * thx[i] * thx[i])
        .collect();
    let w = grid.integral(&wave_density);
    let u2: Vec<f64> = state.u.iter().map(|u| u * u).collect();
    Energies {
        wave: 0.5 * w,
        total: w + grid.integral(&u2),
    }
}

/// Energy history of a trajectory sampled at (ideally every) time step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyHistory {
    pub times: Vec<f64>,
    pub wave: Vec<f64>,
    pub total: Vec<f64>,
    /// `int_0^t int (J^2 + theta_t^2)` with J from the fields.
    pub dissipation: Vec<f64>,
    /// Same integral with `J = v_t / g` from time differences of `v`.
    pub dissipation_from_v: Vec<f64>,
    /// `Etot(t) - Etot(0) + dissipation(t)`.
    pub residual: Vec<f64>,
    /// `Etot(t) - Etot(0) + 2 int_0^t int (g J^2 + B theta_t^2)`.
    pub sharp_defect: Vec<f64>,
}

impl EnergyHistory {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_sharp_defect(&self) -> f64 {
        self.sharp_defect.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest increase of the total energy between consecutive samples.
    pub fn max_total_increase(&self) -> f64 {
        self.total
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    pub fn max_dissipation_mismatch(&self) -> f64 {
        self.dissipation
            .iter()
            .zip(&self.dissipation_from_v)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub fn energy_history(states: &[PhysicalState], f: &CoefficientFunctions) -> EnergyHistory {
    let m = states.len();
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    let energies: Vec<Energies> = states.iter().map(|s| energy(s, f)).collect();
    let mut unit_rate = Vec::with_capacity(m);
    let mut sharp_rate = Vec::with_capacity(m);
    for s in states {
        let grid = &s.grid;
        let unit: Vec<f64> = (0..grid.n).map(|i| s.j[i] * s.j[i] + s.theta_t[i].powi(2)).collect();
        let sharp: Vec<f64> = (0..grid.n)
            .map(|i| {
                let th = s.theta[i];
                2.0 * (f.g(th) * s.j[i] * s.j[i] + f.damping(th) * s.theta_t[i].powi(2))
            })
            .collect();
        unit_rate.push(grid.integral(&unit));
        sharp_rate.push(grid.integral(&sharp));
    }
    let mut v_rate = Vec::with_capacity(m);
    for k in 0..m {
        let s = &states[k];
        let (lo, hi) = if m < 2 {
            (k, k)
        } else if k == 0 {
            (0, 1)
        } else if k == m - 1 {
            (m - 2, m - 1)
        } else {
            (k - 1, k + 1)
        };
        if lo == hi {
            v_rate.push(unit_rate[k]);
            continue;
        }
        let dt = times[hi] - times[lo];
        let grid = &s.grid;
        let dens: Vec<f64> = (0..grid.n)
            .map(|i| {
                let j = (states[hi].v[i] - states[lo].v[i]) / dt / f.g(s.theta[i]);
                j * j + s.theta_t[i].powi(2)
            })
            .collect();
        v_rate.push(grid.integral(&dens));
    }
    let cumulative = |rate: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(m);
        let mut acc = 0.0;
        for k in 0..m {
            if k > 0 {
                acc += 0.5 * (times[k] - times[k - 1]) * (rate[k] + rate[k - 1]);
            }
            out.push(acc);
        }
        out
    };
    let dissipation = cumulative(&unit_rate);
    let dissipation_from_v = cumulative(&v_rate);
    let sharp = cumulative(&sharp_rate);
    let e0 = energies.first().map(|e| e.total).unwrap_or(0.0);
    EnergyHistory {
        residual: (0..m).map(|k| energies[k].total - e0 + dissipation[k]).collect(),
        sharp_defect: (0..m).map(|k| energies[k].total - e0 + sharp[k]).collect(),
        wave: energies.iter().map(|e| e.wave).collect(),
        total: energies.iter().map(|e| e.total).collect(),
        times,
        dissipation,
        dissipation_from_v,
    }
}

/// Outcome of the dissipation check against `C1 dx^2 + C2 dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationCheck {
    pub tolerance: f64,
    pub constants: DissipationTolerance,
    pub max_residual: f64,
    pub max_abs_sharp_defect: f64,
    pub max_total_increase: f64,
    pub max_dissipation_mismatch: f64,
    /// The residual and the energy increase stay within the tolerance.
    pub passed: bool,
    /// The two dissipation integrands agree within the tolerance.
    pub forms_agree: bool,
}

pub fn dissipation_check(history: &EnergyHistory, dx: f64, dt: f64) -> DissipationCheck {
    let constants = DISSIPATION_TOLERANCE;
    let tolerance = constants.bound(dx, dt);
    let max_residual = history.max_residual();
    let max_total_increase = history.max_total_increase();
    let max_dissipation_mismatch = history.max_dissipation_mismatch();
    DissipationCheck {
        tolerance,
        constants,
        max_residual,
        max_abs_sharp_defect: history.max_abs_sharp_defect(),
        max_total_increase,
        max_dissipation_mismatch,
        passed: max_residual <= tolerance && max_total_increase <= tolerance,
        forms_agree: max_dissipation_mismatch <= tolerance,
    }
}

/// Wave-energy bound `E(t) <= E(0) + (sup h^2 / (4 C_*)) int int J^2`.
pub fn wave_energy_bound(history: &EnergyHistory, states: &[PhysicalState], f: &CoefficientFunctions) -> Vec<f64> {
    let (_, _, c_star) = f.sampled_minima();
    let kappa = f.h_sup().powi(2) / (4.0 * c_star);
    let mut out = Vec::with_capacity(states.len());
    let mut acc = 0.0;
    let mut prev = None;
    for (k, s) in states.iter().enumerate() {
        let j2: Vec<f64> = s.j.iter().map(|v| v * v).collect();
        let rate = s.grid.integral(&j2);
        if let Some((t0, r0)) = prev {
            acc += 0.5 * (s.t - t0) * (rate + r0);
        }
        prev = Some((s.t, rate));
        out.push(history.wave[0] + kappa * acc - history.wave[k]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub quotient: f64,
    /// Node pair attaining the maximum.
    pub pair: (usize, usize),
    pub adjacent_max: f64,
    pub random_max: f64,
}

/// Discrete Hölder quotient `max |f(x_i) - f(x_j)| / |x_i - x_j|^alpha` over all
/// adjacent pairs and `n_random` seeded random pairs.
pub fn holder_quotient(grid: &Grid1D, f: &[f64], alpha: f64, n_random: usize, seed: u64) -> HolderReport {
    let n = grid.n;
    let dx = grid.dx();
    let q = |i: usize, j: usize| -> f64 {
        let d = (i as f64 - j as f64).abs() * dx;
        (f[i] - f[j]).abs() / d.powf(alpha)
    };
    let mut best = (0.0, (0, 1));
    let mut adjacent_max = 0.0f64;
    for i in 0..n - 1 {
        let v = q(i, i + 1);
        adjacent_max = adjacent_max.max(v);
        if v > best.0 {
            best = (v, (i, i + 1));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_max = 0.0f64;
    for _ in 0..n_random {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        if j == i {
            j = (i + 1) % n;
        }
        let v = q(i.min(j), i.max(j));
        random_max = random_max.max(v);
        if v > best.0 {
            best = (v, (i.min(j), i.max(j)));
        }
    }
    HolderReport {
        alpha,
        quotient: best.0,
        pair: best.1,
        adjacent_max,
        random_max,
    }
}

/// Tracks `sup |J|` against `max |theta_t|` as a solution approaches a cusp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CancellationReport {
    pub times: Vec<f64>,
    pub sup_j: Vec<f64>,
    pub max_theta_t: Vec<f64>,
    /// `(sup|J| / sup|J|(0)) / (max|theta_t| / max|theta_t|(0))`, once theta_t has doubled.
    pub ratio: Vec<Option<f64>>,
    pub onset_time: Option<f64>,
    pub theta_t_growth: f64,
    pub j_growth: f64,
    pub min_ratio: Option<f64>,
}

/// Growth factor of `max|theta_t|` that flags blow-up onset.
pub const ONSET_GROWTH: f64 = 1e3;

pub fn cancellation_monitor(states: &[PhysicalState]) -> CancellationReport {
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    let sup_j: Vec<f64> = states.iter().map(|s| sup(&s.j)).collect();
    let max_theta_t: Vec<f64> = states.iter().map(|s| sup(&s.theta_t)).collect();
    let (j0, w0) = (sup_j[0].max(f64::MIN_POSITIVE), max_theta_t[0].max(f64::MIN_POSITIVE));
    let mut ratio = Vec::with_capacity(states.len());
    let mut onset_time = None;
    for k in 0..states.len() {
        let gw = max_theta_t[k] / w0;
        let gj = sup_j[k] / j0;
        ratio.push(if gw >= 2.0 { Some(gj / gw) } else { None });
        if onset_time.is_none() && gw > ONSET_GROWTH {
            onset_time = Some(times[k]);
        }
    }
    let theta_t_growth = max_theta_t.iter().cloned().fold(0.0, f64::max) / w0;
    let j_growth = sup_j.iter().cloned().fold(0.0, f64::max) / j0;
    let min_ratio = ratio.iter().flatten().cloned().reduce(f64::min);
    CancellationReport {
        times,
        sup_j,
        max_theta_t,
        ratio,
        onset_time,
        theta_t_growth,
        j_growth,
        min_ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub u_l2: f64,
    pub u_linf: f64,
    pub theta_l2: f64,
    pub theta_linf: f64,
    pub theta_t_l2: f64,
    pub theta_t_linf: f64,
    pub j_l2: f64,
    pub j_linf: f64,
}

/// Differences between two trajectories at matching times, with `b`
/// interpolated onto the grid of `a`.
pub fn compare(a: &[PhysicalState], b: &[PhysicalState]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for sa in a {
        let Some(sb) = b.iter().find(|s| (s.t - sa.t).abs() <= 1e-9 * (1.0 + sa.t.abs())) else {
            continue;
        };
        let grid = &sa.grid;
        let diff = |fa: &[f64], fb: &[f64]| -> (f64, f64) {
            let d: Vec<f64> = (0..grid.n)
                .map(|i| fa[i] - sb.grid.interpolate(fb, grid.x(i)))
                .collect();
            (grid.l2_norm(&d), d.iter().fold(0.0, |m, v| m.max(v.abs())))
        };
        let (u_l2, u_linf) = diff(&sa.u, &sb.u);
        let (theta_l2, theta_linf) = diff(&sa.theta, &sb.theta);
        let (theta_t_l2, theta_t_linf) = diff(&sa.theta_t, &sb.theta_t);
        let (j_l2, j_linf) = diff(&sa.j, &sb.j);
        rows.push(ComparisonRow {
            t: sa.t,
            u_l2,
            u_linf,
            theta_l2,
            theta_linf,
            theta_t_l2,
            theta_t_linf,
            j_l2,
            j_linf,
        });
    }
    rows
}
