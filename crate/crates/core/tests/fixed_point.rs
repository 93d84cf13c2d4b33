use nematic_core::direct::{DirectConfig, DirectSolver};
use nematic_core::fixed_point::*;
use nematic_core::state::{AngularVelocity, Profile};
use nematic_core::*;

fn setup(preset: &str, data: &InitialData, n: usize) -> (CoefficientFunctions, PhysicalState) {
    let f = LeslieCoefficients::preset(preset).unwrap().functions();
    let grid = Grid1D::decay(-8.0, 8.0, n).unwrap();
    let (s, _) = make_state(&grid, data, &f).unwrap();
    (f, s)
}

/// Sup gap between the fixed point and the direct flux on the direct solver's levels.
fn direct_gap(f: &CoefficientFunctions, s: &PhysicalState, j: &SpaceTimeField, t_final: f64) -> f64 {
    let tr = DirectSolver::new(*f, DirectConfig { t_final, ..Default::default() }).run(s).unwrap();
    let mut gap = 0.0f64;
    for st in &tr.states {
        for i in 0..s.grid.n {
            gap = gap.max((j.sample(s.grid.x(i), st.t) - st.j[i]).abs());
        }
    }
    gap
}

#[test]
fn fixed_point_converges_to_the_direct_flux() {
    let data = InitialData::preset("gaussian-flow").unwrap();
    for preset in ["chl20-special", "general"] {
        let mut gaps = Vec::new();
        for n in [161, 321] {
            let (f, s) = setup(preset, &data, n);
            let cfg = FixedPointConfig::default();
            let rep = iterate(&s, &f, &cfg).unwrap();
            assert!(rep.converged && !rep.diverged, "{preset}: {:?}", rep.residual_sup);
            assert!(rep.all_in_ball(), "{preset}: {:?} vs {}", rep.iterate_norms, rep.k_t);
            let out = rep.fields.as_ref().unwrap();
            gaps.push(direct_gap(&f, &s, &out.j, cfg.t_final));
        }
        assert!(gaps[1] < 1e-3, "{preset}: {gaps:?}");
        assert!(gaps[0] / gaps[1] > 3.0, "{preset}: {gaps:?}");
    }
}

#[test]
fn both_flux_expressions_agree_at_the_fixed_point() {
    let data = InitialData::preset("gaussian-flow").unwrap();
    let residual = |n: usize| {
        let (f, s) = setup("general", &data, n);
        let rep = iterate(&s, &f, &FixedPointConfig::default()).unwrap();
        let out = rep.fields.unwrap();
        let r = consistency_j(&out.j, &out.v, &out.theta, &out.theta_t, &f).unwrap();
        (r.max_from_v_t(), r.max_from_u())
    };
    let (coarse, fine) = (residual(161), residual(321));
    assert!(coarse.0 / fine.0 > 2.5, "{coarse:?} -> {fine:?}");
    assert!(coarse.1 / fine.1 > 2.5, "{coarse:?} -> {fine:?}");
}

#[test]
fn kernel_sub_solvers_land_on_the_same_fixed_point() {
    let data = InitialData::preset("gaussian-small").unwrap();
    let (f, s) = setup("chl20-special", &data, 81);
    let base = FixedPointConfig { t_final: 0.25, ..Default::default() };
    let fd = iterate(&s, &f, &base).unwrap();
    let kernel = iterate(&s, &f, &FixedPointConfig { parabolic: ParabolicSolver::Kernel, ..base }).unwrap();
    assert!(fd.converged && kernel.converged);
    let (a, b) = (fd.fields.unwrap().j, kernel.fields.unwrap().j);
    let gap = a.zip_map(&b, |p, q| p - q).sup_norm();
    assert!(gap < 0.05 * a.sup_norm(), "{gap} vs {}", a.sup_norm());
}

#[test]
fn large_angles_switch_to_the_characteristic_wave() {
    let data = InitialData {
        u0: Profile::Gaussian { amplitude: 2.0, center: 0.0, width: 1.0, offset: 0.0 },
        theta0: Profile::Gaussian { amplitude: 1.0, center: 0.0, width: 0.5, offset: 0.0 },
        theta1: AngularVelocity::Profile { profile: Profile::zero() },
    };
    let (f, s) = setup("general", &data, 161);
    let rep = iterate(&s, &f, &FixedPointConfig { t_final: 1.0, relaxation: 1.0, ..Default::default() }).unwrap();
    assert_eq!(rep.wave, WaveUsed::Characteristic);
    assert!(rep.converged, "{:?}", rep.residual_sup);
}
