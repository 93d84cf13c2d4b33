//! Pipelines behind the subcommands and the run summary.

use std::time::Instant;

use nematic_core::characteristic::{integrate_semilinear, jacobian_check, map_back, pq_bounds, to_characteristic};
use nematic_core::diagnostics::{
    cancellation_monitor, compare, dissipation_check, energy, energy_history, holder_quotient, wave_energy_bound,
    Energies, EnergyHistory,
};
use nematic_core::direct::{choose_dt, run_special_case, BlowupEvent, BlowupReason, DirectSolver, Scheme, Trajectory};
use nematic_core::fixed_point::{consistency_j, iterate};
use nematic_core::kernel::{fit_power_law, gamma_fd_residual, ParametrixTable};
use nematic_core::{make_state, CoefficientFunctions, Error, LeslieCoefficients, PhysicalState, SpaceTimeField};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{FluxSource, Resolved, RunConfig, TrajectorySource};
use crate::output::{nearest_states, state_rows, OutputDir, STATE_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ValidateCoeffs,
    RunDirect,
    RunCharacteristic,
    RunFixedPoint,
    KernelTest,
    EnergyReport,
    Compare,
}

/// What a failed verdict means for the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Validation,
    Numerical,
    Invariant,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Validation => 2,
            Category::Numerical => 3,
            Category::Invariant => 4,
        }
    }
}

pub fn error_category(e: &Error) -> Category {
    match e.root() {
        Error::InvalidInput(_) | Error::Integrability(_) => Category::Validation,
        Error::Invariant(_) => Category::Invariant,
        _ => Category::Numerical,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub category: Category,
}

impl Verdict {
    fn at_most(name: &str, value: f64, threshold: f64, category: Category) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            category,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64, category: Category) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            category,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupInfo {
    pub t: f64,
    pub step: usize,
    pub reason: BlowupReason,
}

impl From<&BlowupEvent> for BlowupInfo {
    fn from(e: &BlowupEvent) -> Self {
        Self {
            t: e.t,
            step: e.step,
            reason: e.reason.clone(),
        }
    }
}

/// Written as `summary.json` by every run. Wall time goes to `timing.json`
/// so identical inputs give identical summaries.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: Command,
    pub config_hash: String,
    pub seed: u64,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_energies: Option<Energies>,
    /// `null` when no blow-up was detected.
    pub blowup: Option<BlowupInfo>,
    pub verdicts: Vec<Verdict>,
    pub report: Value,
    pub outputs: Vec<String>,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Default)]
struct Outcome {
    final_energies: Option<Energies>,
    blowup: Option<BlowupInfo>,
    verdicts: Vec<Verdict>,
    report: Value,
}

type Failure = (Category, String);

fn core(e: Error) -> Failure {
    (error_category(&e), e.to_string())
}

fn io(e: std::io::Error) -> Failure {
    (Category::Numerical, format!("writing output: {e}"))
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    run: &'a Resolved,
    f: CoefficientFunctions,
}

/// Runs one pipeline into `run.output` and writes the config copy and summary.
pub fn dispatch(command: Command, cfg: &RunConfig, run: &Resolved) -> std::io::Result<RunSummary> {
    let start = Instant::now();
    let mut out = OutputDir::create(&run.output)?;
    out.write_text("config.toml", &cfg.to_toml())?;
    let ctx = Ctx {
        cfg,
        run,
        f: run.functions,
    };
    let result = match command {
        Command::ValidateCoeffs => validate_coeffs(&ctx, &mut out),
        other => {
            let report = run.coeffs.validate();
            if report.passed() {
                match other {
                    Command::RunDirect => run_direct(&ctx, &mut out),
                    Command::EnergyReport => energy_report(&ctx, &mut out),
                    Command::RunCharacteristic => run_characteristic(&ctx, &mut out),
                    Command::RunFixedPoint => run_fixed_point(&ctx, &mut out),
                    Command::KernelTest => kernel_test(&ctx, &mut out),
                    Command::Compare => run_compare(&ctx, &mut out),
                    Command::ValidateCoeffs => unreachable!(),
                }
            } else {
                Err((
                    Category::Validation,
                    format!("coefficient relations violated: {}", report.failed().join(", ")),
                ))
            }
        }
    };
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(fail) => (Outcome::default(), Some(fail)),
    };
    let exit_code = match &error {
        Some((cat, _)) => cat.exit_code(),
        None => outcome
            .verdicts
            .iter()
            .filter(|v| !v.passed)
            .map(|v| v.category)
            .min()
            .map_or(0, Category::exit_code),
    };
    let wall_time = start.elapsed().as_secs_f64();
    out.write_json("timing.json", &json!({ "wall_time_s": wall_time }))?;
    let mut outputs = out.written().to_vec();
    outputs.push("summary.json".into());
    let summary = RunSummary {
        command,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        exit_code,
        error: error.map(|(_, msg)| msg),
        final_energies: outcome.final_energies,
        blowup: outcome.blowup,
        verdicts: outcome.verdicts,
        report: outcome.report,
        outputs,
        wall_time,
    };
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn validate_coeffs(ctx: &Ctx, out: &mut OutputDir) -> Result<Outcome, Failure> {
    let report = ctx.run.coeffs.validate();
    out.write_json("validation.json", &report).map_err(io)?;
    let verdicts = report
        .checks
        .iter()
        .map(|c| Verdict {
            name: c.name.into(),
            passed: c.holds,
            value: c.slack,
            threshold: 0.0,
            category: Category::Validation,
        })
        .collect();
    Ok(Outcome {
        verdicts,
        report: json!({ "coefficients": ctx.run.coeffs, "validation": report }),
        ..Default::default()
    })
}

fn initial_state(ctx: &Ctx) -> Result<PhysicalState, Failure> {
    make_state(&ctx.run.grid, &ctx.run.initial, &ctx.f).map(|(s, _)| s).map_err(core)
}

fn direct_trajectory(ctx: &Ctx, state: &PhysicalState) -> Result<Trajectory, Failure> {
    let cfg = ctx.cfg.direct_config(ctx.run.t_final);
    DirectSolver::new(ctx.f, cfg).run(state).map_err(core)
}

fn blowup_check(tr: &Trajectory) -> Result<Option<BlowupInfo>, Failure> {
    match &tr.blowup {
        Some(e) if e.reason == BlowupReason::NonFinite => {
            Err((Category::Numerical, format!("direct solver produced non-finite values at t={}", e.t)))
        }
        other => Ok(other.as_ref().map(BlowupInfo::from)),
    }
}

fn write_trajectory(ctx: &Ctx, out: &mut OutputDir, tr: &Trajectory) -> std::io::Result<()> {
    out.write_csv("trajectory.csv", &STATE_COLUMNS, &state_rows(&tr.states))?;
    let times = tr.times();
    let picks = if ctx.cfg.save_times.is_empty() {
        (0..times.len()).collect()
    } else {
        nearest_states(&times, &ctx.cfg.save_times)
    };
    out.write_plot(
        "snapshots.dat",
        "field snapshots",
        &STATE_COLUMNS,
        &state_rows(picks.iter().map(|&k| &tr.states[k])),
    )
}

fn energy_rows(h: &EnergyHistory, bound: Option<&[f64]>) -> Vec<Vec<f64>> {
    (0..h.times.len())
        .map(|k| {
            let mut row = vec![
                h.times[k],
                h.wave[k],
                h.total[k],
                h.dissipation[k],
                h.dissipation_from_v[k],
                h.residual[k],
                h.sharp_defect[k],
            ];
            if let Some(b) = bound {
                row.push(b[k]);
            }
            row
        })
        .collect()
}

const ENERGY_COLUMNS: [&str; 8] = [
    "t",
    "wave",
    "total",
    "dissipation",
    "dissipation_from_v",
    "residual",
    "sharp_defect",
    "wave_bound_slack",
];

/// Energy, Hölder and cancellation diagnostics of a direct trajectory.
fn trajectory_diagnostics(ctx: &Ctx, out: &mut OutputDir, tr: &Trajectory, o: &mut Outcome) -> Result<(), Failure> {
    let d = &ctx.cfg.diagnostics;
    let grid = ctx.run.grid;
    let mut report = serde_json::Map::new();
    if d.energy {
        let h = energy_history(&tr.states, &ctx.f);
        let check = dissipation_check(&h, grid.dx(), tr.dt);
        out.write_plot("energy.dat", "energy vs t", &ENERGY_COLUMNS[..7], &energy_rows(&h, None))
            .map_err(io)?;
        o.verdicts.push(Verdict {
            name: "energy-dissipation".into(),
            passed: check.passed,
            value: check.max_residual.max(check.max_total_increase),
            threshold: check.tolerance,
            category: Category::Invariant,
        });
        report.insert("dissipation".into(), json!(check));
    }
    if d.holder {
        let last = tr.last();
        let quotients: Vec<_> = d
            .holder_alphas
            .iter()
            .map(|&a| holder_quotient(&grid, &last.theta, a, d.holder_pairs, ctx.cfg.seed))
            .collect();
        let worst = quotients.iter().map(|q| q.quotient).fold(0.0, f64::max);
        o.verdicts.push(Verdict {
            name: "holder-finite".into(),
            passed: worst.is_finite(),
            value: worst,
            threshold: f64::MAX,
            category: Category::Numerical,
        });
        report.insert("holder_final_theta".into(), json!(quotients));
    }
    if d.cancellation {
        let c = cancellation_monitor(&tr.states);
        let rows: Vec<Vec<f64>> = (0..c.times.len())
            .map(|k| vec![c.times[k], c.sup_j[k], c.max_theta_t[k], c.ratio[k].unwrap_or(f64::NAN)])
            .collect();
        out.write_plot("singularity.dat", "singularity time series", &["t", "sup_J", "max_theta_t", "ratio"], &rows)
            .map_err(io)?;
        // Only meaningful once a nonzero theta_t has steepened.
        let steep = c.max_theta_t[0] > 1e-12 && c.sup_j[0] > 1e-12 && c.theta_t_growth >= 10.0;
        o.verdicts.push(Verdict {
            name: "flux-cancellation".into(),
            passed: !steep || c.j_growth <= 2.0,
            value: if steep { c.j_growth } else { 0.0 },
            threshold: 2.0,
            category: Category::Invariant,
        });
        report.insert(
            "cancellation".into(),
            json!({
                "theta_t_growth": c.theta_t_growth,
                "j_growth": c.j_growth,
                "min_ratio": c.min_ratio,
                "onset_time": c.onset_time,
            }),
        );
    }
    o.report = Value::Object(report);
    Ok(())
}

fn run_direct(ctx: &Ctx, out: &mut OutputDir) -> Result<Outcome, Failure> {
    let state = initial_state(ctx)?;
    let tr = direct_trajectory(ctx, &state)?;
    let mut o = Outcome {
        blowup: blowup_check(&tr)?,
        final_energies: Some(energy(tr.last(), &ctx.f)),
        ..Default::default()
    };
    write_trajectory(ctx, out, &tr).map_err(io)?;
    trajectory_diagnostics(ctx, out, &tr, &mut o)?;
    if let Value::Object(m) = &mut o.report {
        m.insert("dt".into(), json!(tr.dt));
        m.insert("steps".into(), json!(tr.steps));
        m.insert("final_time".into(), json!(tr.last().t));
    }
    Ok(o)
}

fn energy_report(ctx: &Ctx, out: &mut OutputDir) -> Result<Outcome, Failure> {
    let state = initial_state(ctx)?;
    let tr = direct_trajectory(ctx, &state)?;
    let h = energy_history(&tr.states, &ctx.f);
    let bound = wave_energy_bound(&h, &tr.states, &ctx.f);
    let check = dissipation_check(&h, ctx.run.grid.dx(), tr.dt);
    let rows = energy_rows(&h, Some(&bound));
    out.write_csv("energy.csv", &ENERGY_COLUMNS, &rows).map_err(io)?;
    out.write_plot("energy.dat", "energy vs t", &ENERGY_COLUMNS, &rows).map_err(io)?;
    let min_slack = bound.iter().cloned().fold(f64::INFINITY, f64::min);
    let verdicts = vec![
        Verdict {
            name: "energy-dissipation".into(),
            passed: check.passed,
            value: check.max_residual.max(check.max_total_increase),
            threshold: check.tolerance,
            category: Category::Invariant,
        },
        Verdict::at_least("wave-energy-bound", min_slack, -check.tolerance, Category::Invariant),
    ];
    Ok(Outcome {
        blowup: blowup_check(&tr)?,
        final_energies: Some(energy(tr.last(), &ctx.f)),
        verdicts,
        report: json!({
            "dissipation": check,
            "dissipation_forms_max_gap": h.max_dissipation_mismatch(),
            "wave_bound_min_slack": min_slack,
            "dt": tr.dt,
        }),
    })
}

fn run_characteristic(ctx: &Ctx, out: &mut OutputDir) -> Result<Outcome, Failure> {
    let c = &ctx.cfg.characteristic;
    let t_final = ctx.run.t_final;
    let state = initial_state(ctx)?;
    let driven = match c.flux {
        FluxSource::Zero => None,
        FluxSource::Direct => Some(direct_trajectory(ctx, &state)?.j_field()),
    };
    let flux = |x: f64, t: f64| driven.as_ref().map_or(0.0, |j| j.sample(x, t));
    let (cg, curve) = to_characteristic(&state.grid, &state.theta, &state.theta_t, &ctx.f, t_final).map_err(core)?;
    let sol = integrate_semilinear(&cg, &curve, &ctx.f, &flux, &c.sweep()).map_err(core)?;
    let times: Vec<f64> = if ctx.cfg.save_times.is_empty() {
        (0..c.snapshots).map(|k| t_final * k as f64 / (c.snapshots - 1) as f64).collect()
    } else {
        ctx.cfg.save_times.clone()
    };
    let mapped = map_back(&sol, &ctx.f, &times, c.delta).map_err(core)?;
    let jac = jacobian_check(&sol, &ctx.f, c.jacobian_angle_limit, t_final);
    let pq = pq_bounds(&sol, &state.grid, t_final);

    let g = &sol.grid;
    let mut plane = Vec::new();
    for a in 0..g.n() {
        for d in 0..=g.band.min(a) {
            let k = g.idx(a, d);
            let b = a - d;
            plane.push(vec![
                a as f64,
                b as f64,
                g.x_char[a],
                g.y_char[b],
                sol.x[k],
                sol.t[k],
                sol.theta[k],
                sol.w[k],
                sol.z[k],
                sol.p[k],
                sol.q[k],
            ]);
        }
    }
    out.write_csv(
        "characteristic_plane.csv",
        &["a", "b", "X", "Y", "x", "t", "theta", "w", "z", "p", "q"],
        &plane,
    )
    .map_err(io)?;
    let grid = state.grid;
    let mut physical = Vec::new();
    let mut peaks = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let mut peak = 0.0f64;
        for i in 0..grid.n {
            let flat = k * grid.n + i;
            let tt = mapped.theta_t.at(k, i);
            if mapped.derivatives_covered[flat] {
                peak = peak.max(tt.abs());
            }
            physical.push(vec![
                t,
                grid.x(i),
                mapped.theta.at(k, i),
                tt,
                mapped.theta_x.at(k, i),
                f64::from(u8::from(mapped.covered[flat])),
                f64::from(u8::from(mapped.derivatives_covered[flat])),
            ]);
        }
        peaks.push(vec![t, peak]);
    }
    out.write_csv(
        "mapped.csv",
        &["t", "x", "theta", "theta_t", "theta_x", "covered", "derivatives_covered"],
        &physical,
    )
    .map_err(io)?;
    out.write_plot("singularity.dat", "theta_t peak growth", &["t", "max_theta_t"], &peaks)
        .map_err(io)?;
    let verdicts = vec![
        Verdict::at_least("p-q-positive", pq.p_min.min(pq.q_min), f64::MIN_POSITIVE, Category::Invariant),
        Verdict::at_most("jacobian-identity", jac.max_rel_error, c.jacobian_tol, Category::Numerical),
        Verdict::at_most("strip-overlap", sol.report.max_overlap_mismatch, 1e-8, Category::Numerical),
    ];
    Ok(Outcome {
        verdicts,
        report: json!({
            "sweep": sol.report,
            "pq_bounds": pq,
            "jacobian": jac,
            "coverage": mapped.coverage(),
            "max_tie_discrepancy": mapped.max_tie_discrepancy,
            "lattice_points": g.len(),
        }),
        ..Default::default()
    })
}

fn run_fixed_point(ctx: &Ctx, out: &mut OutputDir) -> Result<Outcome, Failure> {
    let state = initial_state(ctx)?;
    let config = ctx.cfg.fixed_point_config(ctx.run.t_final);
    let rep = iterate(&state, &ctx.f, &config).map_err(core)?;
    out.write_json("fixed_point.json", &rep).map_err(io)?;
    let rows: Vec<Vec<f64>> = (0..rep.iterations())
        .map(|k| {
            vec![
                k as f64,
                rep.residual_sup[k],
                rep.residual_l2[k],
                rep.residual_weighted[k],
                rep.iterate_norms[k],
            ]
        })
        .collect();
    out.write_plot(
        "residuals.dat",
        "fixed-point residual history",
        &["iteration", "sup", "l2", "weighted_sup", "iterate_norm"],
        &rows,
    )
    .map_err(io)?;
    let mut consistency = Value::Null;
    if let Some(fields) = &rep.fields {
        let grid = fields.j.grid;
        let mut table = Vec::new();
        for (k, &t) in fields.j.times.iter().enumerate() {
            for i in 0..grid.n {
                table.push(vec![t, grid.x(i), fields.j.at(k, i), fields.theta.at(k, i), fields.v_x.at(k, i)]);
            }
        }
        out.write_csv("fixed_point_fields.csv", &["t", "x", "J", "theta", "u"], &table)
            .map_err(io)?;
        if let Ok(c) = consistency_j(&fields.j, &fields.v, &fields.theta, &fields.theta_t, &ctx.f) {
            consistency = json!({ "max_from_v_t": c.max_from_v_t(), "max_from_u": c.max_from_u() });
        }
    }
    let max_norm = rep.iterate_norms.iter().cloned().fold(0.0, f64::max);
    let last = rep.residual_sup.last().copied().unwrap_or(f64::NAN);
    let mut converged = Verdict::at_most("converged", last, config.tol, Category::Numerical);
    converged.passed = rep.converged;
    let mut ball = Verdict::at_most("iterates-in-ball", max_norm, rep.k_t, Category::Invariant);
    ball.passed = rep.all_in_ball();
    Ok(Outcome {
        verdicts: vec![converged, ball],
        report: json!({
            "iterations": rep.iterations(),
            "converged": rep.converged,
            "diverged": rep.diverged,
            "k_t": rep.k_t,
            "lambda": rep.lambda,
            "wave": rep.wave,
            "consistency": consistency,
        }),
        ..Default::default()
    })
}

fn kernel_test(ctx: &Ctx, out: &mut OutputDir) -> Result<Outcome, Failure> {
    use rand::{Rng, SeedableRng};
    let k = &ctx.cfg.kernel_test;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut verdicts = Vec::new();
    let mut report = serde_json::Map::new();
    // Constant g with gamma1 = 0 and gamma1 = 1.
    let reductions = [
        ("reduction-gamma1-0", LeslieCoefficients::new([0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 1.0, 1.0)),
        ("reduction-gamma1-1", LeslieCoefficients::new([0.0, -0.5, 0.5, 1.0, 0.0, 0.0], 1.0, 1.0)),
    ];
    for (name, coeffs) in reductions {
        let f = coeffs.functions();
        let (gamma1, theta) = (f.gamma1(), 0.4);
        let g = f.g(theta);
        let field = |_: f64, _: f64| theta;
        let sources = 5;
        let per = k.random_points.div_ceil(sources);
        let mut worst = 0.0f64;
        for _ in 0..sources {
            let (xi, tau) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.0..1.0));
            let table = ParametrixTable::build(&field, &f, gamma1, xi, tau, 1.0, k.parametrix).map_err(core)?;
            for _ in 0..per {
                let dt = rng.gen_range(1e-3..1.0);
                let x = xi + rng.gen_range(-3.0..3.0) * (2.0 * g * dt).sqrt();
                let r = x - xi;
                let exact = (-gamma1 * dt).exp() * (-r * r / (4.0 * g * dt)).exp() / (4.0 * std::f64::consts::PI * g * dt).sqrt();
                let got = table.gamma(x, tau + dt).map_err(core)?.gamma;
                worst = worst.max((got - exact).abs() / exact);
            }
        }
        verdicts.push(Verdict::at_most(name, worst, 1e-6, Category::Numerical));
    }
    // The residual and exponent suites need a varying g.
    let (g_lo, g_hi) = ctx.f.sampled_range(|f, th| f.g(th));
    let f = if g_hi - g_lo > 1e-12 {
        ctx.f
    } else {
        LeslieCoefficients::preset("chl20-perturbed").expect("shipped").functions()
    };
    report.insert("varying_g_coefficients".into(), json!(f.coeffs));
    if k.residual {
        let smooth = |x: f64, t: f64| 0.6 + 0.4 * (-x * x).exp() * (1.0 + t);
        let h = k.horizon;
        let mut points = Vec::new();
        for fraction in [0.5, 0.8] {
            let dt = fraction * h;
            for spread in [-1.0, 0.0, 0.7] {
                points.push((0.3 + spread * (2.0 * dt).sqrt(), dt));
            }
        }
        let coarse = ParametrixTable::build(&smooth, &f, f.gamma1(), 0.3, 0.0, h, k.parametrix).map_err(core)?;
        let fine = ParametrixTable::build(&smooth, &f, f.gamma1(), 0.3, 0.0, h, k.parametrix.refined()).map_err(core)?;
        let (rc, rf) = (
            gamma_fd_residual(&coarse, &points, 0.025, 0.005),
            gamma_fd_residual(&fine, &points, 0.025, 0.005),
        );
        verdicts.push(Verdict::at_least(
            "residual-refinement-ratio",
            rc.max_abs / rf.max_abs.max(f64::MIN_POSITIVE),
            2.0,
            Category::Numerical,
        ));
        report.insert("residual".into(), json!({ "coarse": rc, "refined": rf }));
    }
    if k.exponent {
        let rough = |x: f64, _: f64| std::f64::consts::PI / 8.0 + 0.2 * x.abs().sqrt();
        let table = ParametrixTable::build(&rough, &f, f.gamma1(), 0.0, 0.0, k.horizon, k.parametrix).map_err(core)?;
        let fit = table
            .phi_exponent(0.1)
            .ok_or((Category::Numerical, "correction kernel exponent fit failed".to_string()))?;
        verdicts.push(Verdict::at_most("phi-exponent", (fit.exponent + 1.25).abs(), 0.15, Category::Numerical));
        let times: Vec<f64> = (1..=8).map(|m| k.horizon * 0.1 * m as f64 / 8.0).collect();
        let corr = table.correction_sup(&times, 3.0, 41);
        if let Some(cf) = fit_power_law(&times, &corr) {
            report.insert("correction_exponent".into(), json!(cf));
        }
        report.insert("phi_exponent".into(), json!(fit));
    }
    let verdict = json!({ "passed": verdicts.iter().all(|v| v.passed), "verdicts": verdicts });
    out.write_json("kernel_test.json", &verdict).map_err(io)?;
    Ok(Outcome {
        verdicts,
        report: Value::Object(report),
        ..Default::default()
    })
}

fn trajectory_of(
    ctx: &Ctx,
    source: TrajectorySource,
    state: &PhysicalState,
    reference: Option<&[f64]>,
) -> Result<Vec<PhysicalState>, Failure> {
    let t_final = ctx.run.t_final;
    let base = ctx.cfg.direct_config(t_final);
    let (dt, _) = choose_dt(&state.grid, ctx.f.c_max(), t_final, base.dt, base.cfl).map_err(core)?;
    let pinned = nematic_core::direct::DirectConfig { dt: Some(dt), ..base.clone() };
    let tr = match source {
        TrajectorySource::Direct => DirectSolver::new(ctx.f, pinned).run(state),
        TrajectorySource::DirectImex1 => DirectSolver::new(
            ctx.f,
            nematic_core::direct::DirectConfig {
                scheme: Scheme::Imex1,
                ..pinned
            },
        )
        .run(state),
        TrajectorySource::SpecialCase => {
            let c = ctx.run.coeffs;
            if c.alphas() != LeslieCoefficients::special(c.k1, c.k3).alphas() {
                return Err((
                    Category::Validation,
                    "special-case trajectories need the special coefficients".into(),
                ));
            }
            run_special_case(state, c.k1, c.k3, &pinned)
        }
        TrajectorySource::Refined => {
            let grid = state.grid.refined();
            let (fine, _) = make_state(&grid, &ctx.run.initial, &ctx.f).map_err(core)?;
            let cfg = nematic_core::direct::DirectConfig {
                dt: Some(dt / 2.0),
                save_every: 2 * pinned.save_every,
                ..pinned
            };
            DirectSolver::new(ctx.f, cfg).run(&fine)
        }
        TrajectorySource::FixedPoint => {
            let rep = iterate(state, &ctx.f, &ctx.cfg.fixed_point_config(t_final)).map_err(core)?;
            let fields = rep
                .fields
                .ok_or((Category::Numerical, "fixed point produced no fields".to_string()))?;
            let times = reference.map_or_else(|| fields.j.times.clone(), <[f64]>::to_vec);
            return Ok(times
                .iter()
                .map(|&t| sample_state(state, &fields.v_x, &fields.theta, &fields.theta_t, &fields.j, t, &ctx.f))
                .collect());
        }
    }
    .map_err(core)?;
    blowup_check(&tr)?;
    Ok(tr.states)
}

fn sample_state(
    initial: &PhysicalState,
    u: &SpaceTimeField,
    theta: &SpaceTimeField,
    theta_t: &SpaceTimeField,
    j: &SpaceTimeField,
    t: f64,
    f: &CoefficientFunctions,
) -> PhysicalState {
    let grid = initial.grid;
    let at = |field: &SpaceTimeField| grid.nodes().iter().map(|&x| field.sample(x, t)).collect::<Vec<_>>();
    let mut s = PhysicalState::from_fields(grid, t, at(u), at(theta), at(theta_t), f);
    s.j = at(j);
    s
}

fn run_compare(ctx: &Ctx, out: &mut OutputDir) -> Result<Outcome, Failure> {
    let c = &ctx.cfg.compare;
    let state = initial_state(ctx)?;
    let (first, second) = if c.first == TrajectorySource::FixedPoint && c.second != TrajectorySource::FixedPoint {
        let b = trajectory_of(ctx, c.second, &state, None)?;
        let times: Vec<f64> = b.iter().map(|s| s.t).collect();
        (trajectory_of(ctx, c.first, &state, Some(&times))?, b)
    } else {
        let a = trajectory_of(ctx, c.first, &state, None)?;
        let times: Vec<f64> = a.iter().map(|s| s.t).collect();
        let b = trajectory_of(ctx, c.second, &state, Some(&times))?;
        (a, b)
    };
    let rows = compare(&first, &second);
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.t,
                r.u_l2,
                r.u_linf,
                r.theta_l2,
                r.theta_linf,
                r.theta_t_l2,
                r.theta_t_linf,
                r.j_l2,
                r.j_linf,
            ]
        })
        .collect();
    let header = [
        "t",
        "u_l2",
        "u_linf",
        "theta_l2",
        "theta_linf",
        "theta_t_l2",
        "theta_t_linf",
        "J_l2",
        "J_linf",
    ];
    out.write_csv("compare.csv", &header, &table).map_err(io)?;
    out.write_plot("compare.dat", "difference norms", &header, &table).map_err(io)?;
    let worst = |pick: fn(&nematic_core::diagnostics::ComparisonRow) -> f64| rows.iter().map(pick).fold(0.0, f64::max);
    Ok(Outcome {
        report: json!({
            "first": c.first,
            "second": c.second,
            "matched_times": rows.len(),
            "max_u_linf": worst(|r| r.u_linf),
            "max_theta_linf": worst(|r| r.theta_linf),
            "max_theta_t_linf": worst(|r| r.theta_t_linf),
            "max_j_linf": worst(|r| r.j_linf),
        }),
        ..Default::default()
    })
}
