//! Finite-difference solver for the coupled flow/director system
//!
//! ```text
//! u_t = (g(theta) u_x + h(theta) theta_t)_x
//! theta_tt + gamma1 theta_t = c(theta) (c(theta) theta_x)_x - h(theta) u_x
//! ```
//!
//! The director is advanced with a velocity-Verlet splitting (half kick, drift,
//! half kick) whose second half kick treats the `gamma1` damping implicitly
//! and pointwise. Between the two kicks the flow is advanced with the coupling
//! source `(h theta_t)_x` taken explicitly at the half step and the diffusion
//! `(g u_x)_x` in conservative flux form, either backward Euler (`Imex1`) or
//! Crank-Nicolson (`Imex2`). The elastic term uses the discrete gradient of
//! `1/2 sum c^2(theta) (D+ theta)^2 dx`, so the undamped, uncoupled scheme is
//! symplectic.
//!
//! Decay grids hold `u = 0`, `theta_t = 0` and `theta` at its far-field value
//! on the two end nodes; waves must not reach them before `t_final`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};
use crate::grid::{solve_cyclic_tridiagonal, solve_tridiagonal, Grid1D, SpaceTimeField};
use crate::state::PhysicalState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Backward Euler for the flow diffusion; first order in time.
    Imex1,
    /// Crank-Nicolson for the flow diffusion; second order in time.
    Imex2,
}

/// Multipliers on the damping and coupling terms. Anything other than
/// `(1, 1)` solves a modified model and exists for verification runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSwitches {
    pub damping: f64,
    pub coupling: f64,
}

impl Default for ModelSwitches {
    fn default() -> Self {
        Self {
            damping: 1.0,
            coupling: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    pub t_final: f64,
    /// Fixed step; derived from `cfl` when absent.
    pub dt: Option<f64>,
    /// Courant number `c_max dt / dx` used when `dt` is absent.
    pub cfl: f64,
    pub scheme: Scheme,
    /// Store a snapshot every this many steps (the final state is always stored).
    pub save_every: usize,
    /// Stop when `max|theta_t|` or `max|u_x|` exceeds this.
    pub blowup_ceiling: f64,
    pub switches: ModelSwitches,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt: None,
            cfl: 0.5,
            scheme: Scheme::Imex2,
            save_every: 1,
            blowup_ceiling: 1e6,
            switches: ModelSwitches::default(),
        }
    }
}

pub type SourceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Manufactured-solution forcing added to the flow and director equations.
#[derive(Clone)]
pub struct Forcing {
    pub u: SourceFn,
    pub theta: SourceFn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BlowupReason {
    NonFinite,
    Ceiling { quantity: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupEvent {
    pub t: f64,
    pub step: usize,
    pub reason: BlowupReason,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<PhysicalState>,
    pub dt: f64,
    pub steps: usize,
    pub blowup: Option<BlowupEvent>,
}

impl Trajectory {
    pub fn last(&self) -> &PhysicalState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// `J` on the saved times as a space-time field.
    pub fn j_field(&self) -> SpaceTimeField {
        let rows: Vec<Vec<f64>> = self.states.iter().map(|s| s.j.clone()).collect();
        SpaceTimeField::from_rows(self.states[0].grid, self.times(), &rows).expect("consistent rows")
    }
}

/// Time step honouring the Courant limit and landing exactly on `t_final`.
pub fn choose_dt(grid: &Grid1D, c_max: f64, t_final: f64, dt: Option<f64>, cfl: f64) -> Result<(f64, usize)> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidInput(format!("t_final must be positive, got {t_final}")));
    }
    let limit = grid.dx() / c_max;
    let target = dt.unwrap_or(cfl * limit);
    if !(target > 0.0) || target > limit {
        return Err(Error::InvalidInput(format!(
            "time step {target:.3e} violates the Courant limit {limit:.3e}"
        )));
    }
    let steps = (t_final / target - 1e-9).ceil().max(1.0) as usize;
    Ok((t_final / steps as f64, steps))
}

pub struct DirectSolver {
    pub coeffs: CoefficientFunctions,
    pub config: DirectConfig,
    pub forcing: Option<Forcing>,
}

impl DirectSolver {
    pub fn new(coeffs: CoefficientFunctions, config: DirectConfig) -> Self {
        Self {
            coeffs,
            config,
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    /// Advances `state` by one step of size `dt`.
    pub fn step(&self, state: &PhysicalState, dt: f64) -> Result<PhysicalState> {
        let f = &self.coeffs;
        let grid = state.grid;
        let n = grid.n;
        let sw = self.config.switches;
        let gamma = f.gamma1() * sw.damping;
        let t = state.t;
        let x = grid.nodes();
        let (lo, hi) = interior(&grid);
        let src = |which: fn(&Forcing) -> &SourceFn, tt: f64| -> Vec<f64> {
            match &self.forcing {
                Some(fc) => x.iter().map(|&xi| which(fc)(xi, tt)).collect(),
                None => vec![0.0; n],
            }
        };

        let ux = d0(&grid, &state.u);
        let w = elastic_force(&grid, &state.theta, f);
        let ft = src(|fc| &fc.theta, t);
        let mut pi_half = state.theta_t.clone();
        for i in lo..hi {
            let accel = w[i] - gamma * state.theta_t[i] - sw.coupling * f.h(state.theta[i]) * ux[i] + ft[i];
            pi_half[i] += 0.5 * dt * accel;
        }
        let mut theta = state.theta.clone();
        for i in lo..hi {
            theta[i] += dt * pi_half[i];
        }

        let flux: Vec<f64> = (0..n)
            .map(|i| {
                let mid = 0.5 * (state.theta[i] + theta[i]);
                sw.coupling * f.h(mid) * pi_half[i]
            })
            .collect();
        let coupling = d0(&grid, &flux);
        let (fu, implicit_weight) = match self.config.scheme {
            Scheme::Imex1 => (src(|fc| &fc.u, t + dt), 1.0),
            Scheme::Imex2 => (src(|fc| &fc.u, t + 0.5 * dt), 0.5),
        };
        let g_new: Vec<f64> = theta.iter().map(|&th| f.g(th)).collect();
        let mut rhs: Vec<f64> = (0..n).map(|i| state.u[i] + dt * (coupling[i] + fu[i])).collect();
        if implicit_weight < 1.0 {
            let g_old: Vec<f64> = state.theta.iter().map(|&th| f.g(th)).collect();
            let diff = flux_diffusion(&grid, &g_old, &state.u);
            for i in 0..n {
                rhs[i] += (1.0 - implicit_weight) * dt * diff[i];
            }
        }
        let u = implicit_diffusion(&grid, &g_new, implicit_weight * dt, &rhs)?;

        let ux_new = d0(&grid, &u);
        let w_new = elastic_force(&grid, &theta, f);
        let ft_new = src(|fc| &fc.theta, t + dt);
        let mut theta_t = pi_half;
        for i in lo..hi {
            let accel = w_new[i] - sw.coupling * f.h(theta[i]) * ux_new[i] + ft_new[i];
            theta_t[i] = (theta_t[i] + 0.5 * dt * accel) / (1.0 + 0.5 * dt * gamma);
        }

        let mut next = state.clone();
        next.t = t + dt;
        next.u = u;
        next.theta = theta;
        next.theta_t = theta_t;
        next.refresh_derived(f);
        Ok(next)
    }

    pub fn run(&self, initial: &PhysicalState) -> Result<Trajectory> {
        let (dt, steps) = choose_dt(
            &initial.grid,
            self.coeffs.c_max(),
            self.config.t_final,
            self.config.dt,
            self.config.cfl,
        )?;
        march(initial, dt, steps, &self.config, |s| self.step(s, dt))
    }
}

fn march(
    initial: &PhysicalState,
    dt: f64,
    steps: usize,
    config: &DirectConfig,
    mut step: impl FnMut(&PhysicalState) -> Result<PhysicalState>,
) -> Result<Trajectory> {
    let save_every = config.save_every.max(1);
    let mut states = vec![initial.clone()];
    let mut current = initial.clone();
    let mut blowup = None;
    let mut taken = 0;
    for k in 1..=steps {
        let next = step(&current)?;
        taken = k;
        if !next.is_finite() {
            blowup = Some(BlowupEvent {
                t: next.t,
                step: k,
                reason: BlowupReason::NonFinite,
            });
            break;
        }
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let theta_t_max = sup(&next.theta_t);
        let ux_max = sup(&d0(&next.grid, &next.u));
        current = next;
        let over = if theta_t_max > config.blowup_ceiling {
            Some(("theta_t", theta_t_max))
        } else if ux_max > config.blowup_ceiling {
            Some(("u_x", ux_max))
        } else {
            None
        };
        if let Some((quantity, value)) = over {
            blowup = Some(BlowupEvent {
                t: current.t,
                step: k,
                reason: BlowupReason::Ceiling { quantity, value },
            });
            states.push(current.clone());
            break;
        }
        if k % save_every == 0 || k == steps {
            states.push(current.clone());
        }
    }
    Ok(Trajectory {
        states,
        dt,
        steps: taken,
        blowup,
    })
}

/// Independent implementation for `g = h = 1`, `gamma1 = 2` with Frank
/// constants `k1`, `k3`. Only meaningful for the coefficient set
/// [`crate::LeslieCoefficients::special`].
pub fn run_special_case(initial: &PhysicalState, k1: f64, k3: f64, config: &DirectConfig) -> Result<Trajectory> {
    let f = crate::LeslieCoefficients::special(k1, k3).functions();
    let (dt, steps) = choose_dt(&initial.grid, f.c_max(), config.t_final, config.dt, config.cfl)?;
    let step = |s: &PhysicalState| -> Result<PhysicalState> {
        let grid = s.grid;
        let n = grid.n;
        let (lo, hi) = interior(&grid);
        let ux = d0(&grid, &s.u);
        let w = elastic_force(&grid, &s.theta, &f);
        let mut pi = s.theta_t.clone();
        let mut theta = s.theta.clone();
        for i in lo..hi {
            pi[i] += 0.5 * dt * (w[i] - 2.0 * s.theta_t[i] - ux[i]);
            theta[i] += dt * pi[i];
        }
        let src = d0(&grid, &pi);
        let ones = vec![1.0; n];
        let u = match config.scheme {
            Scheme::Imex1 => {
                let rhs: Vec<f64> = (0..n).map(|i| s.u[i] + dt * src[i]).collect();
                implicit_diffusion(&grid, &ones, dt, &rhs)?
            }
            Scheme::Imex2 => {
                let lap = flux_diffusion(&grid, &ones, &s.u);
                let rhs: Vec<f64> = (0..n).map(|i| s.u[i] + 0.5 * dt * lap[i] + dt * src[i]).collect();
                implicit_diffusion(&grid, &ones, 0.5 * dt, &rhs)?
            }
        };
        let ux_new = d0(&grid, &u);
        let w_new = elastic_force(&grid, &theta, &f);
        for i in lo..hi {
            pi[i] = (pi[i] + 0.5 * dt * (w_new[i] - ux_new[i])) / (1.0 + dt);
        }
        let mut next = s.clone();
        next.t = s.t + dt;
        next.u = u;
        next.theta = theta;
        next.theta_t = pi;
        next.refresh_derived(&f);
        Ok(next)
    };
    march(initial, dt, steps, config, step)
}

/// Range of nodes that evolve (end nodes are pinned on decay grids).
fn interior(grid: &Grid1D) -> (usize, usize) {
    if grid.is_periodic() {
        (0, grid.n)
    } else {
        (1, grid.n - 1)
    }
}

/// Second-order central difference; zero on decay-grid end nodes.
pub fn d0(grid: &Grid1D, f: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let inv = 0.5 / grid.dx();
    let mut out = vec![0.0; n];
    if grid.is_periodic() {
        for i in 0..n {
            out[i] = (f[(i + 1) % n] - f[(i + n - 1) % n]) * inv;
        }
    } else {
        for i in 1..n - 1 {
            out[i] = (f[i + 1] - f[i - 1]) * inv;
        }
    }
    out
}

/// Discrete `c (c theta_x)_x` as minus the gradient of the discrete elastic energy.
pub fn elastic_force(grid: &Grid1D, theta: &[f64], f: &CoefficientFunctions) -> Vec<f64> {
    let n = grid.n;
    let dx = grid.dx();
    let cells = if grid.is_periodic() { n } else { n - 1 };
    // per cell (i, i+1): c^2 D+theta and (c^2)' (D+theta)^2 at the averaged angle
    let mut flux = vec![0.0; cells];
    let mut curv = vec![0.0; cells];
    for k in 0..cells {
        let (a, b) = (theta[k], theta[(k + 1) % n]);
        let mid = 0.5 * (a + b);
        let slope = (b - a) / dx;
        flux[k] = f.c2(mid) * slope;
        curv[k] = f.c2_prime(mid) * slope * slope;
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (right, left) = if grid.is_periodic() {
            (i, (i + n - 1) % n)
        } else if i == 0 || i == n - 1 {
            continue;
        } else {
            (i, i - 1)
        };
        out[i] = (flux[right] - flux[left]) / dx - 0.25 * (curv[right] + curv[left]);
    }
    out
}

/// `(g u_x)_x` in conservative form with half-node `g` averaged from nodes.
fn flux_diffusion(grid: &Grid1D, g: &[f64], u: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let dx2 = grid.dx() * grid.dx();
    let mut out = vec![0.0; n];
    let (lo, hi) = interior(grid);
    for i in lo..hi {
        let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
        let gp = 0.5 * (g[i] + g[ip]);
        let gm = 0.5 * (g[i] + g[im]);
        out[i] = (gp * (u[ip] - u[i]) - gm * (u[i] - u[im])) / dx2;
    }
    out
}

/// Solves `(I - weight (g u_x)_x) u = rhs` with `u = 0` on decay-grid ends.
fn implicit_diffusion(grid: &Grid1D, g: &[f64], weight: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = grid.n;
    let r = weight / (grid.dx() * grid.dx());
    let half = |i: usize, j: usize| 0.5 * (g[i] + g[j]);
    if grid.is_periodic() {
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
            let (gp, gm) = (half(i, ip), half(i, im));
            lower[i] = -r * gm;
            upper[i] = -r * gp;
            diag[i] = 1.0 + r * (gp + gm);
        }
        return solve_cyclic_tridiagonal(&lower, &diag, &upper, rhs);
    }
    let m = n - 2;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for k in 0..m {
        let i = k + 1;
        let (gp, gm) = (half(i, i + 1), half(i, i - 1));
        lower[k] = -r * gm;
        upper[k] = -r * gp;
        diag[k] = 1.0 + r * (gp + gm);
    }
    let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs[1..n - 1])?;
    let mut u = vec![0.0; n];
    u[1..n - 1].copy_from_slice(&inner);
    Ok(u)
}

/// Director fields of the wave equation with a prescribed flux.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub theta: SpaceTimeField,
    pub theta_t: SpaceTimeField,
    pub theta_x: SpaceTimeField,
    pub substeps: usize,
}

/// Solves `theta_tt + (gamma1 - h^2/g) theta_t = c (c theta_x)_x - h J` with `J`
/// given, reporting the fields at `times` (the first entry is the initial time).
pub fn solve_wave(
    grid: &Grid1D,
    theta0: &[f64],
    theta1: &[f64],
    f: &CoefficientFunctions,
    j: &(dyn Fn(f64, f64) -> f64 + Sync),
    times: &[f64],
    cfl: f64,
) -> Result<WaveSolution> {
    let n = grid.n;
    if theta0.len() != n || theta1.len() != n || times.is_empty() {
        return Err(Error::InvalidInput("wave solve: inconsistent inputs".into()));
    }
    let x = grid.nodes();
    let (lo, hi) = interior(grid);
    let dt_max = cfl * grid.dx() / f.c_max();
    let mut theta = theta0.to_vec();
    let mut pi = theta1.to_vec();
    let mut rows_theta = vec![theta.clone()];
    let mut rows_pi = vec![pi.clone()];
    let mut substeps = 0;
    for w in times.windows(2) {
        let span = w[1] - w[0];
        if !(span > 0.0) {
            return Err(Error::InvalidInput("wave solve: output times must increase".into()));
        }
        let m = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = span / m as f64;
        for s in 0..m {
            let t = w[0] + s as f64 * dt;
            let force = elastic_force(grid, &theta, f);
            let mut half = pi.clone();
            for i in lo..hi {
                let th = theta[i];
                half[i] += 0.5 * dt * (force[i] - f.damping(th) * pi[i] - f.h(th) * j(x[i], t));
            }
            for i in lo..hi {
                theta[i] += dt * half[i];
            }
            let force = elastic_force(grid, &theta, f);
            for i in lo..hi {
                let th = theta[i];
                let accel = force[i] - f.h(th) * j(x[i], t + dt);
                pi[i] = (half[i] + 0.5 * dt * accel) / (1.0 + 0.5 * dt * f.damping(th));
            }
            substeps += 1;
        }
        if !theta.iter().chain(&pi).all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("wave solve produced non-finite values by t={}", w[1])));
        }
        rows_theta.push(theta.clone());
        rows_pi.push(pi.clone());
    }
    let rows_x: Vec<Vec<f64>> = rows_theta.iter().map(|r| grid.ddx(r)).collect();
    let times = times.to_vec();
    Ok(WaveSolution {
        theta: SpaceTimeField::from_rows(*grid, times.clone(), &rows_theta)?,
        theta_t: SpaceTimeField::from_rows(*grid, times.clone(), &rows_pi)?,
        theta_x: SpaceTimeField::from_rows(*grid, times, &rows_x)?,
        substeps,
    })
}
