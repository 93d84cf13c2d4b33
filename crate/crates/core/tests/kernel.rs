use nematic_core::direct::{DirectConfig, DirectSolver, Trajectory};
use nematic_core::kernel::*;
use nematic_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn gaussian(g: f64, r: f64, dt: f64) -> f64 {
    (-r * r / (4.0 * g * dt)).exp() / (4.0 * PI * g * dt).sqrt()
}

#[test]
fn constant_coefficients_reduce_to_the_gaussian() {
    // alpha2 = alpha3 gives gamma1 = 0; alpha3 - alpha2 = 1 gives gamma1 = 1.
    let cases = [
        LeslieCoefficients::new([0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 1.0, 1.0),
        LeslieCoefficients::new([0.0, -0.5, 0.5, 1.0, 0.0, 0.0], 1.0, 1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for coeffs in cases {
        let f = coeffs.functions();
        let gamma1 = f.gamma1();
        let theta = |_: f64, _: f64| 0.4;
        let g = f.g(0.4);
        for _ in 0..5 {
            let (xi, tau) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.0..1.0));
            let table = ParametrixTable::build(&theta, &f, gamma1, xi, tau, 1.0, ParametrixConfig::default()).unwrap();
            for _ in 0..200 {
                let dt = rng.gen_range(1e-3..1.0);
                let x = xi + rng.gen_range(-3.0..3.0) * (2.0 * g * dt).sqrt();
                let exact = (-gamma1 * dt).exp() * gaussian(g, x - xi, dt);
                let got = table.gamma(x, tau + dt).unwrap().gamma;
                assert!((got - exact).abs() <= 1e-6 * exact, "gamma1={gamma1}: {got} vs {exact}");
            }
        }
    }
}

fn run_direct(preset: &str, n: usize, t_final: f64, save_every: usize) -> (CoefficientFunctions, Trajectory) {
    let f = LeslieCoefficients::preset(preset).unwrap().functions();
    let grid = Grid1D::decay(-10.0, 10.0, n).unwrap();
    let (s, _) = make_state(&grid, &InitialData::preset("gaussian-flow").unwrap(), &f).unwrap();
    let cfg = DirectConfig {
        t_final,
        save_every,
        ..Default::default()
    };
    (f, DirectSolver::new(f, cfg).run(&s).unwrap())
}

fn field(tr: &Trajectory, pick: impl Fn(&PhysicalState) -> Vec<f64>) -> SpaceTimeField {
    let rows: Vec<Vec<f64>> = tr.states.iter().map(pick).collect();
    SpaceTimeField::from_rows(tr.states[0].grid, tr.times(), &rows).unwrap()
}

fn v_x_gap(n: usize, save_every: usize) -> f64 {
    let (f, tr) = run_direct("chl20-special", n, 1.0, save_every);
    let theta = field(&tr, |s| s.theta.clone());
    let theta_t = field(&tr, |s| s.theta_t.clone());
    let v = solve_v_kernel(&theta, &theta_t, &tr.states[0].v, &f, LeviConfig::default()).unwrap();
    let grid = theta.grid;
    (0..tr.states.len())
        .map(|k| {
            let diff: Vec<f64> = (0..grid.n).map(|i| v.dx.at(k, i) - tr.states[k].u[i]).collect();
            grid.l2_norm(&diff)
        })
        .fold(0.0, f64::max)
}

#[test]
fn kernel_velocity_matches_the_direct_solver() {
    let coarse = v_x_gap(129, 1);
    let fine = v_x_gap(257, 2);
    assert!(fine < 1e-2, "{fine}");
    assert!(coarse / fine >= 1.5, "{coarse} -> {fine}");
}

fn a_gap(n: usize, save_every: usize) -> (f64, f64) {
    let (f, tr) = run_direct("general", n, 0.5, save_every);
    let theta = field(&tr, |s| s.theta.clone());
    let theta_t = field(&tr, |s| s.theta_t.clone());
    let theta_x = field(&tr, |s| s.theta_x());
    let v_x = field(&tr, |s| s.u.clone());
    let j = field(&tr, |s| s.j.clone());
    let j0 = &tr.states[0].j0;
    let inputs = AInputs {
        theta: &theta,
        theta_t: &theta_t,
        theta_x: &theta_x,
        v_x: &v_x,
        j: &j,
        j0,
    };
    let a = solve_a_kernel(&inputs, &f, LeviConfig::default()).unwrap();
    let (mut a_err, mut j_err) = (0.0f64, 0.0f64);
    for (k, s) in tr.states.iter().enumerate() {
        for i in 0..theta.grid.n {
            a_err = a_err.max((a.value.at(k, i) - s.a[i]).abs());
            j_err = j_err.max((a.dx.at(k, i) + j0[i] - s.j[i]).abs());
        }
    }
    (a_err, j_err)
}

#[test]
fn flux_potential_reproduces_the_direct_flux() {
    let (a_coarse, _) = a_gap(129, 1);
    let (a_fine, j_fine) = a_gap(257, 2);
    assert!(a_coarse / a_fine > 3.0, "{a_coarse} -> {a_fine}");
    assert!(j_fine < 1e-3, "{j_fine}");
}

#[test]
fn potentials_are_linear_in_the_source() {
    let grid = Grid1D::decay(-6.0, 6.0, 61).unwrap();
    let times: Vec<f64> = (0..6).map(|k| 0.1 * k as f64).collect();
    let f = LeslieCoefficients::preset("chl20-perturbed").unwrap().functions();
    let theta = SpaceTimeField::from_fn(grid, times.clone(), |x, t| 0.5 + 0.3 * (-x * x).exp() * (1.0 + t));
    let op = LeviOperator::new(&theta, &f, f.gamma1(), LeviConfig::default()).unwrap();
    let a = SpaceTimeField::from_fn(grid, times.clone(), |x, t| (-(x - 1.0).powi(2)).exp() * (1.0 + t));
    let b = SpaceTimeField::from_fn(grid, times, |x, _| x * (-x * x).exp());
    let mix = a.zip_map(&b, |p, q| 2.0 * p - 3.0 * q);
    let (pa, pb, pm) = (op.potential(&a).unwrap(), op.potential(&b).unwrap(), op.potential(&mix).unwrap());
    for idx in 0..pm.value.data.len() {
        let lin = 2.0 * pa.value.data[idx] - 3.0 * pb.value.data[idx];
        assert!((pm.value.data[idx] - lin).abs() < 1e-12, "{idx}");
        let lin_x = 2.0 * pa.dx.data[idx] - 3.0 * pb.dx.data[idx];
        assert!((pm.dx.data[idx] - lin_x).abs() < 1e-12);
    }
}

#[test]
fn parametrix_solves_the_equation_off_the_diagonal() {
    let f = LeslieCoefficients::preset("chl20-perturbed").unwrap().functions();
    let smooth = |x: f64, t: f64| 0.6 + 0.4 * (-x * x).exp() * (1.0 + t);
    let horizon = 0.25;
    let table = ParametrixTable::build(&smooth, &f, f.gamma1(), 0.3, 0.0, horizon, ParametrixConfig::default()).unwrap();
    let mut points = Vec::new();
    for fraction in [0.5, 0.8] {
        let dt = fraction * horizon;
        for spread in [-1.0, 0.0, 0.7] {
            points.push((0.3 + spread * (2.0 * dt).sqrt(), dt));
        }
    }
    let res = gamma_fd_residual(&table, &points, 0.025, 0.005);
    assert!(res.max_relative < 1e-5, "{res:?}");
    for &(x, t) in &points {
        let p = table.gamma(x, t).unwrap();
        assert!(p.gamma > 0.0 && (p.gamma - p.frozen).abs() < 0.1 * p.frozen);
    }
}

#[test]
fn correction_kernel_follows_the_holder_scaling() {
    let f = LeslieCoefficients::preset("chl20-perturbed").unwrap().functions();
    let rough = |x: f64, _: f64| PI / 8.0 + 0.2 * x.abs().sqrt();
    let horizon = 0.25;
    let table = ParametrixTable::build(&rough, &f, f.gamma1(), 0.0, 0.0, horizon, ParametrixConfig::default()).unwrap();
    let fit = table.phi_exponent(0.1).unwrap();
    assert!((fit.exponent + 1.25).abs() < 0.15, "{fit:?}");
    let times: Vec<f64> = (1..=8).map(|k| horizon * 0.1 * k as f64 / 8.0).collect();
    let corr = table.correction_sup(&times, 3.0, 41);
    let corr_fit = fit_power_law(&times, &corr).unwrap();
    assert!((corr_fit.exponent + 0.25).abs() < 0.15, "{corr_fit:?}");
}
