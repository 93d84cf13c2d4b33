//! Uniform 1-D grids, discrete calculus and space-time fields.
//!
//! `Decay` grids include both endpoints (`dx = (x_max - x_min)/(n - 1)`) and
//! model data that is constant outside the middle of the domain. `Periodic`
//! grids identify `x_max` with `x_min`, so node `n` would coincide with node 0
//! and `dx = (x_max - x_min)/n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    Decay,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub mode: BoundaryMode,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize, mode: BoundaryMode) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!("grid needs n >= 3, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::InvalidInput(format!(
                "grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self { x_min, x_max, n, mode })
    }

    pub fn decay(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, BoundaryMode::Decay)
    }

    pub fn periodic(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, BoundaryMode::Periodic)
    }

    pub fn dx(&self) -> f64 {
        match self.mode {
            BoundaryMode::Decay => (self.x_max - self.x_min) / (self.n - 1) as f64,
            BoundaryMode::Periodic => (self.x_max - self.x_min) / self.n as f64,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn is_periodic(&self) -> bool {
        self.mode == BoundaryMode::Periodic
    }

    /// Same extent and mode with a different node count.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.x_min, self.x_max, n, self.mode)
    }

    /// Grid with `2(n-1)+1` (decay) or `2n` (periodic) nodes containing this one.
    pub fn refined(&self) -> Self {
        let n = match self.mode {
            BoundaryMode::Decay => 2 * (self.n - 1) + 1,
            BoundaryMode::Periodic => 2 * self.n,
        };
        Self { n, ..*self }
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }

    /// Fourth-order first derivative; one-sided fourth-order closures at the
    /// ends of a decay grid (second order when `n < 5`).
    pub fn ddx(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n, "ddx: length mismatch");
        let n = self.n;
        let dx = self.dx();
        let mut out = vec![0.0; n];
        if self.is_periodic() {
            let w = |i: isize| f[i.rem_euclid(n as isize) as usize];
            for (i, o) in out.iter_mut().enumerate() {
                let i = i as isize;
                *o = (-w(i + 2) + 8.0 * w(i + 1) - 8.0 * w(i - 1) + w(i - 2)) / (12.0 * dx);
            }
            return out;
        }
        if n < 5 {
            out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
            for i in 1..n - 1 {
                out[i] = (f[i + 1] - f[i - 1]) / (2.0 * dx);
            }
            out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dx);
            return out;
        }
        let c = 12.0 * dx;
        out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / c;
        out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / c;
        for i in 2..n - 2 {
            out[i] = (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / c;
        }
        let m = n - 1;
        out[m] = (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4]) / c;
        out[m - 1] = (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]) / c;
        out
    }

    /// Cumulative trapezoid integral from `x_min`.
    pub fn antider(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n, "antider: length mismatch");
        let dx = self.dx();
        let mut out = Vec::with_capacity(self.n);
        let mut acc = 0.0;
        out.push(0.0);
        for w in f.windows(2) {
            acc += 0.5 * dx * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Trapezoid rule over the domain (rectangle rule on a periodic grid).
    pub fn integral(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n, "integral: length mismatch");
        let dx = self.dx();
        let sum: f64 = f.iter().sum();
        match self.mode {
            BoundaryMode::Periodic => dx * sum,
            BoundaryMode::Decay => dx * (sum - 0.5 * (f[0] + f[self.n - 1])),
        }
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
        self.integral(&sq).max(0.0).sqrt()
    }

    /// Interpolates nodal values at `x` with Catmull-Rom cubics. Outside a decay
    /// grid the end values are held constant; periodic grids wrap.
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        let n = self.n;
        let dx = self.dx();
        let mut s = (x - self.x_min) / dx;
        if self.is_periodic() {
            s = s.rem_euclid(n as f64);
        } else if s <= 0.0 {
            return f[0];
        } else if s >= (n - 1) as f64 {
            return f[n - 1];
        }
        let i = (s.floor() as usize).min(n - 1);
        let r = s - i as f64;
        let at = |k: isize| -> f64 {
            if self.is_periodic() {
                f[k.rem_euclid(n as isize) as usize]
            } else {
                f[k.clamp(0, n as isize - 1) as usize]
            }
        };
        let i = i as isize;
        catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), r)
    }
}

#[inline]
pub fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, r: f64) -> f64 {
    let r2 = r * r;
    let r3 = r2 * r;
    0.5 * (2.0 * p1
        + (p2 - p0) * r
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * r2
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * r3)
}

/// Scalar field sampled on `times x grid` (row-major, one row per time).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: Grid1D,
    pub times: Vec<f64>,
    pub data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: Grid1D, times: Vec<f64>) -> Self {
        let data = vec![0.0; grid.n * times.len()];
        Self { grid, times, data }
    }

    pub fn from_fn(grid: Grid1D, times: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.n * times.len());
        for &t in &times {
            for i in 0..grid.n {
                data.push(f(grid.x(i), t));
            }
        }
        Self { grid, times, data }
    }

    pub fn from_rows(grid: Grid1D, times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != times.len() || rows.iter().any(|r| r.len() != grid.n) {
            return Err(Error::InvalidInput("space-time rows do not match the lattice".into()));
        }
        Ok(Self {
            grid,
            times,
            data: rows.concat(),
        })
    }

    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.grid.n;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.n;
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.grid.n + i]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            times: self.times.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.data.len(), other.data.len());
        Self {
            grid: self.grid,
            times: self.times.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Time index bracket and weight for `t` (clamped to the stored range).
    pub fn time_bracket(&self, t: f64) -> (usize, f64) {
        let times = &self.times;
        let nt = times.len();
        if nt == 1 || t <= times[0] {
            return (0, 0.0);
        }
        if t >= times[nt - 1] {
            return (nt - 2, 1.0);
        }
        let k = times.partition_point(|&s| s <= t).saturating_sub(1).min(nt - 2);
        let w = (t - times[k]) / (times[k + 1] - times[k]);
        (k, w)
    }

    /// Catmull-Rom in x, linear in t, clamped extension outside the lattice.
    pub fn sample(&self, x: f64, t: f64) -> f64 {
        if self.n_t() == 1 {
            return self.grid.interpolate(self.row(0), x);
        }
        let (k, w) = self.time_bracket(t);
        let a = self.grid.interpolate(self.row(k), x);
        if w == 0.0 {
            return a;
        }
        let b = self.grid.interpolate(self.row(k + 1), x);
        a + w * (b - a)
    }

    /// Bilinear sample, clamped extension outside the lattice.
    pub fn sample_linear(&self, x: f64, t: f64) -> f64 {
        let g = &self.grid;
        let lin = |row: &[f64]| -> f64 {
            let mut s = (x - g.x_min) / g.dx();
            if g.is_periodic() {
                s = s.rem_euclid(g.n as f64);
                let i = s.floor() as usize % g.n;
                let r = s - s.floor();
                row[i] + r * (row[(i + 1) % g.n] - row[i])
            } else if s <= 0.0 {
                row[0]
            } else if s >= (g.n - 1) as f64 {
                row[g.n - 1]
            } else {
                let i = s.floor() as usize;
                let r = s - i as f64;
                row[i] + r * (row[i + 1] - row[i])
            }
        };
        if self.n_t() == 1 {
            return lin(self.row(0));
        }
        let (k, w) = self.time_bracket(t);
        let a = lin(self.row(k));
        let b = lin(self.row(k + 1));
        a + w * (b - a)
    }
}

/// Solves a tridiagonal system with the Thomas algorithm.
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 || !piv.is_finite() {
        return Err(Error::LinearSolve("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv.abs() < 1e-300 || !piv.is_finite() {
            return Err(Error::LinearSolve(format!("zero pivot at row {i}")));
        }
        c[i] = if i + 1 < n { upper[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Cyclic tridiagonal solve (corner entries `lower[0]` and `upper[n-1]`)
/// through the Sherman-Morrison correction.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        return Err(Error::LinearSolve("cyclic system needs n >= 3".into()));
    }
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] = diag[0] - gamma;
    bb[n - 1] = diag[n - 1] - alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &bb, upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &bb, upper, &u)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spacing_and_nodes() {
        let g = Grid1D::decay(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.nodes(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let p = Grid1D::periodic(0.0, 1.0, 4).unwrap();
        assert_eq!(p.dx(), 0.25);
        assert!(Grid1D::decay(0.0, 1.0, 2).is_err());
        assert!(Grid1D::decay(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn ddx_is_fourth_order_on_decay_grid() {
        let f = |x: f64| (1.3 * x).sin() + 0.2 * x * x;
        let df = |x: f64| 1.3 * (1.3 * x).cos() + 0.4 * x;
        let err = |n: usize| {
            let g = Grid1D::decay(-2.0, 2.0, n).unwrap();
            let d = g.ddx(&g.sample(f));
            (0..n).map(|i| (d[i] - df(g.x(i))).abs()).fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn ddx_periodic_exact_on_low_mode() {
        let g = Grid1D::periodic(0.0, 2.0 * std::f64::consts::PI, 64).unwrap();
        let d = g.ddx(&g.sample(f64::sin));
        for i in 0..g.n {
            assert!((d[i] - g.x(i).cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn antider_and_integral_of_gaussian() {
        let g = Grid1D::decay(-10.0, 10.0, 801).unwrap();
        let f = g.sample(|x| (-x * x).exp());
        let total = std::f64::consts::PI.sqrt();
        assert!((g.integral(&f) - total).abs() < 1e-10);
        let a = g.antider(&f);
        assert_eq!(a[0], 0.0);
        assert!((a[g.n - 1] - g.integral(&f)).abs() < 1e-12);
        assert!((a[400] - total / 2.0).abs() < 1e-10);
    }

    #[test]
    fn interpolation_reproduces_cubics_inside() {
        let g = Grid1D::decay(0.0, 1.0, 21).unwrap();
        let f = g.sample(|x| 2.0 * x * x - x + 0.5);
        for k in 0..50 {
            let x = 0.1 + 0.016 * k as f64;
            assert!((g.interpolate(&f, x) - (2.0 * x * x - x + 0.5)).abs() < 1e-12);
        }
        assert_eq!(g.interpolate(&f, -3.0), f[0]);
        assert_eq!(g.interpolate(&f, 9.0), f[20]);
    }

    #[test]
    fn field_sampling() {
        let g = Grid1D::decay(0.0, 1.0, 11).unwrap();
        let fld = SpaceTimeField::from_fn(g, vec![0.0, 0.5, 1.0], |x, t| x + 2.0 * t);
        assert!((fld.sample(0.33, 0.25) - (0.33 + 0.5)).abs() < 1e-12);
        assert!((fld.sample_linear(0.33, 0.75) - (0.33 + 1.5)).abs() < 1e-12);
        assert!((fld.sample(0.5, 7.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 7;
        let lower: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let diag = vec![4.0; n];
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = diag[i] * x_true[i]
                + lower[i] * x_true[(i + n - 1) % n]
                + upper[i] * x_true[(i + 1) % n];
        }
        let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn antider_is_inverse_of_ddx_for_polynomials(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
            let g = Grid1D::decay(-1.0, 1.0, 33).unwrap();
            let f = g.sample(|x| a + b * x + c * x * x);
            let back = g.antider(&g.ddx(&f));
            for i in 0..g.n {
                // trapezoid on the exact derivative of a quadratic: error c dx^2 (x - x_min)/6
                prop_assert!((back[i] - (f[i] - f[0])).abs() < 1e-3 * (1.0 + c.abs()));
            }
        }

        #[test]
        fn integral_is_linear(s in -3.0f64..3.0) {
            let g = Grid1D::decay(0.0, 2.0, 17).unwrap();
            let f = g.sample(|x| x.cos());
            let h = g.sample(|x| x * x);
            let comb: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a + s * b).collect();
            prop_assert!((g.integral(&comb) - g.integral(&f) - s * g.integral(&h)).abs() < 1e-12);
        }
    }
}
