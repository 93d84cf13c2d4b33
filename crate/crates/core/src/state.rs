//! Physical state of the flow, initial data presets and CSV output.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};
use crate::grid::{BoundaryMode, Grid1D};

/// Fields must match their far-field values to this accuracy at decay-grid ends.
pub const DECAY_TOL: f64 = 1e-8;

/// Fraction of a decay domain that initial data may occupy.
pub const SUPPORT_FRACTION: f64 = 0.8;

pub const CSV_SCHEMA: &str = "# schema=v1";

/// Names accepted by [`InitialData::preset`].
pub const INITIAL_PRESETS: [&str; 5] = ["gaussian-small", "gaussian-flow", "cusp", "zero", "periodic-mode"];

/// Analytic 1-D profile with a closed-form derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Constant { value: f64 },
    /// `offset + amplitude exp(-((x - center)/width)^2)`.
    Gaussian { amplitude: f64, center: f64, width: f64, offset: f64 },
    /// `amplitude sin(wavenumber x + phase)`.
    Sine { amplitude: f64, wavenumber: f64, phase: f64 },
}

impl Profile {
    pub fn zero() -> Self {
        Profile::Constant { value: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Gaussian { amplitude, center, width, offset } => {
                let s = (x - center) / width;
                offset + amplitude * (-s * s).exp()
            }
            Profile::Sine { amplitude, wavenumber, phase } => amplitude * (wavenumber * x + phase).sin(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Profile::Constant { .. } => 0.0,
            Profile::Gaussian { amplitude, center, width, .. } => {
                let s = (x - center) / width;
                -2.0 * s / width * amplitude * (-s * s).exp()
            }
            Profile::Sine { amplitude, wavenumber, phase } => {
                amplitude * wavenumber * (wavenumber * x + phase).cos()
            }
        }
    }
}

/// Initial angular velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AngularVelocity {
    Profile { profile: Profile },
    /// `theta_1 = sign c(theta_0) theta_0'`: with `sign = 1` the right-moving
    /// Riemann variable vanishes and the whole pulse travels left.
    Characteristic { sign: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: Profile,
    pub theta0: Profile,
    pub theta1: AngularVelocity,
}

impl InitialData {
    pub fn preset(name: &str) -> Result<Self> {
        let gauss = |amplitude: f64, width: f64, offset: f64| Profile::Gaussian {
            amplitude,
            center: 0.0,
            width,
            offset,
        };
        match name {
            "gaussian-small" => Ok(Self {
                u0: Profile::zero(),
                theta0: gauss(0.1, 1.0, 0.0),
                theta1: AngularVelocity::Profile { profile: Profile::zero() },
            }),
            "gaussian-flow" => Ok(Self {
                u0: gauss(0.2, 1.0, 0.0),
                theta0: gauss(0.3, 1.0, 0.2),
                theta1: AngularVelocity::Profile { profile: gauss(-0.2, 0.8, 0.0) },
            }),
            "cusp" => Ok(Self {
                u0: gauss(1.5, 1.0, 0.0),
                theta0: gauss(1.2, 0.5, 0.6),
                theta1: AngularVelocity::Characteristic { sign: 0.1 },
            }),
            "zero" => Ok(Self {
                u0: Profile::zero(),
                theta0: Profile::zero(),
                theta1: AngularVelocity::Profile { profile: Profile::zero() },
            }),
            "periodic-mode" => Ok(Self {
                u0: Profile::Sine { amplitude: 1.0, wavenumber: 1.0, phase: 0.0 },
                theta0: Profile::Sine { amplitude: 1.0, wavenumber: 1.0, phase: std::f64::consts::FRAC_PI_2 },
                theta1: AngularVelocity::Profile {
                    profile: Profile::Sine { amplitude: -1.0, wavenumber: 1.0, phase: std::f64::consts::FRAC_PI_2 },
                },
            }),
            other => Err(Error::InvalidInput(format!(
                "unknown initial-data preset '{other}' (known: {})",
                INITIAL_PRESETS.join(", ")
            ))),
        }
    }

    /// Nodal `(u0, theta0, theta1)`.
    pub fn sample(&self, grid: &Grid1D, f: &CoefficientFunctions) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let u0 = grid.sample(|x| self.u0.eval(x));
        let theta0 = grid.sample(|x| self.theta0.eval(x));
        let theta1 = match &self.theta1 {
            AngularVelocity::Profile { profile } => grid.sample(|x| profile.eval(x)),
            AngularVelocity::Characteristic { sign } => grid.sample(|x| {
                sign * f.c(self.theta0.eval(x)) * self.theta0.derivative(x)
            }),
        };
        (u0, theta0, theta1)
    }
}

/// Nodal fields at one time. `v`, `j`, `a_hat` and `a` are derived from the
/// primary fields by [`PhysicalState::refresh_derived`]; `j0` and `a0` are
/// frozen at the initial time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalState {
    pub grid: Grid1D,
    pub t: f64,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub v: Vec<f64>,
    pub j: Vec<f64>,
    pub j0: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub a0: Vec<f64>,
    pub a: Vec<f64>,
}

impl PhysicalState {
    /// Builds a state from nodal fields, treating them as the initial time.
    pub fn from_fields(
        grid: Grid1D,
        t: f64,
        u: Vec<f64>,
        theta: Vec<f64>,
        theta_t: Vec<f64>,
        f: &CoefficientFunctions,
    ) -> Self {
        let n = grid.n;
        let mut s = Self {
            grid,
            t,
            u,
            theta,
            theta_t,
            v: vec![0.0; n],
            j: vec![0.0; n],
            j0: vec![0.0; n],
            a_hat: vec![0.0; n],
            a0: vec![0.0; n],
            a: vec![0.0; n],
        };
        s.refresh_derived(f);
        s.j0 = s.j.clone();
        s.a0 = s.a_hat.clone();
        s.a = vec![0.0; n];
        s
    }

    /// Recomputes `v = int u`, `J = u_x + (h/g) theta_t`, `A_hat = int J`, `A = A_hat - A0`.
    pub fn refresh_derived(&mut self, f: &CoefficientFunctions) {
        let g = &self.grid;
        self.v = g.antider(&self.u);
        let ux = g.ddx(&self.u);
        self.j = ux
            .iter()
            .zip(&self.theta)
            .zip(&self.theta_t)
            .map(|((ux, &th), &tt)| ux + f.h_over_g(th) * tt)
            .collect();
        self.a_hat = g.antider(&self.j);
        self.a = self.a_hat.iter().zip(&self.a0).map(|(a, b)| a - b).collect();
    }

    pub fn theta_x(&self) -> Vec<f64> {
        self.grid.ddx(&self.theta)
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.theta, &self.theta_t]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Writes `x,u,theta,theta_t,v,J,A` with a schema header.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_SCHEMA}")?;
        writeln!(w, "# t={:.17e}", self.t)?;
        writeln!(w, "x,u,theta,theta_t,v,J,A")?;
        for i in 0..self.grid.n {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.grid.x(i),
                self.u[i],
                self.theta[i],
                self.theta_t[i],
                self.v[i],
                self.j[i],
                self.a[i]
            )?;
        }
        Ok(())
    }
}

/// Norms confirming the data lies in the finite-energy class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub u0_l2: f64,
    pub u0_h1: f64,
    pub theta0_x_l2: f64,
    pub theta1_l2: f64,
    pub j0_l1: f64,
    pub j0_l2: f64,
    pub j0_h1: f64,
    /// Largest deviation from the far-field values outside the support window.
    pub tail_deviation: f64,
}

/// Samples initial data, checks decay/integrability and builds the state at t = 0.
pub fn make_state(
    grid: &Grid1D,
    data: &InitialData,
    f: &CoefficientFunctions,
) -> Result<(PhysicalState, IntegrabilityReport)> {
    let (u0, theta0, theta1) = data.sample(grid, f);
    make_state_from_arrays(grid, u0, theta0, theta1, f)
}

pub fn make_state_from_arrays(
    grid: &Grid1D,
    u0: Vec<f64>,
    theta0: Vec<f64>,
    theta1: Vec<f64>,
    f: &CoefficientFunctions,
) -> Result<(PhysicalState, IntegrabilityReport)> {
    let n = grid.n;
    if u0.len() != n || theta0.len() != n || theta1.len() != n {
        return Err(Error::InvalidInput("initial arrays do not match the grid".into()));
    }
    if ![&u0, &theta0, &theta1].iter().all(|v| v.iter().all(|x| x.is_finite())) {
        return Err(Error::Integrability("initial data is not finite".into()));
    }
    let mut tail_deviation = 0.0f64;
    if grid.mode == BoundaryMode::Decay {
        let (left, right) = (theta0[0], theta0[n - 1]);
        let margin = ((1.0 - SUPPORT_FRACTION) / 2.0 * (n - 1) as f64).floor() as usize;
        for i in (0..=margin).chain(n - 1 - margin..n) {
            let far = if i <= margin { left } else { right };
            let dev = u0[i].abs().max(theta1[i].abs()).max((theta0[i] - far).abs());
            tail_deviation = tail_deviation.max(dev);
        }
        if tail_deviation > DECAY_TOL {
            return Err(Error::Integrability(format!(
                "data is not supported in the middle {:.0}% of the domain (tail deviation {tail_deviation:.3e} > {DECAY_TOL:e})",
                SUPPORT_FRACTION * 100.0
            )));
        }
    }
    let state = PhysicalState::from_fields(*grid, 0.0, u0, theta0, theta1, f);
    let report = integrability(&state, tail_deviation);
    let all = [
        report.u0_h1,
        report.theta0_x_l2,
        report.theta1_l2,
        report.j0_l1,
        report.j0_h1,
    ];
    if !all.iter().all(|v| v.is_finite()) {
        return Err(Error::Integrability("initial norms are not finite".into()));
    }
    Ok((state, report))
}

fn integrability(s: &PhysicalState, tail_deviation: f64) -> IntegrabilityReport {
    let g = &s.grid;
    let u0_l2 = g.l2_norm(&s.u);
    let ux = g.ddx(&s.u);
    let j0x = g.ddx(&s.j0);
    let abs: Vec<f64> = s.j0.iter().map(|v| v.abs()).collect();
    let j0_l2 = g.l2_norm(&s.j0);
    IntegrabilityReport {
        u0_l2,
        u0_h1: (u0_l2.powi(2) + g.l2_norm(&ux).powi(2)).sqrt(),
        theta0_x_l2: g.l2_norm(&s.theta_x()),
        theta1_l2: g.l2_norm(&s.theta_t),
        j0_l1: g.integral(&abs),
        j0_l2,
        j0_h1: (j0_l2.powi(2) + g.l2_norm(&j0x).powi(2)).sqrt(),
        tail_deviation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::LeslieCoefficients;

    fn special() -> CoefficientFunctions {
        LeslieCoefficients::special(1.0, 1.0).functions()
    }

    #[test]
    fn gaussian_state_is_admissible() {
        let grid = Grid1D::decay(-8.0, 8.0, 161).unwrap();
        let data = InitialData::preset("gaussian-flow").unwrap();
        let (s, rep) = make_state(&grid, &data, &special()).unwrap();
        assert!(rep.tail_deviation < DECAY_TOL);
        assert!(rep.j0_h1.is_finite() && rep.j0_h1 > 0.0);
        assert!(s.a.iter().all(|&v| v == 0.0));
        // J0 = u0' + theta1 when h = g
        let ux = grid.ddx(&s.u);
        for i in 0..grid.n {
            assert!((s.j0[i] - ux[i] - s.theta_t[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_data_touching_the_boundary() {
        let grid = Grid1D::decay(-2.0, 2.0, 81).unwrap();
        let data = InitialData::preset("gaussian-small").unwrap();
        let err = make_state(&grid, &data, &special()).unwrap_err();
        assert!(matches!(err, Error::Integrability(_)));
    }

    #[test]
    fn rejects_nan() {
        let grid = Grid1D::decay(-8.0, 8.0, 41).unwrap();
        let mut u0 = vec![0.0; 41];
        u0[20] = f64::NAN;
        let r = make_state_from_arrays(&grid, u0, vec![0.0; 41], vec![0.0; 41], &special());
        assert!(matches!(r, Err(Error::Integrability(_))));
    }

    #[test]
    fn zero_data_gives_zero_derived_fields() {
        let grid = Grid1D::decay(-4.0, 4.0, 33).unwrap();
        let (s, _) = make_state(&grid, &InitialData::preset("zero").unwrap(), &special()).unwrap();
        for v in [&s.v, &s.j, &s.j0, &s.a_hat, &s.a] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn characteristic_velocity_kills_right_riemann_variable() {
        let f = LeslieCoefficients::preset("cusp").unwrap().functions();
        let grid = Grid1D::decay(-6.0, 6.0, 241).unwrap();
        let mut data = InitialData::preset("cusp").unwrap();
        data.theta1 = AngularVelocity::Characteristic { sign: 1.0 };
        let (s, _) = make_state(&grid, &data, &f).unwrap();
        let thx = s.theta_x();
        let worst = (0..grid.n)
            .map(|i| (s.theta_t[i] - f.c(s.theta[i]) * thx[i]).abs())
            .fold(0.0, f64::max);
        let scale = s.theta_t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-3 * scale, "S residual {worst} vs {scale}");
    }

    #[test]
    fn csv_has_schema_header() {
        let grid = Grid1D::decay(-4.0, 4.0, 9).unwrap();
        let (s, _) = make_state(&grid, &InitialData::preset("zero").unwrap(), &special()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_SCHEMA);
        assert_eq!(lines[2], "x,u,theta,theta_t,v,J,A");
        assert_eq!(lines.len(), 3 + 9);
    }
}
