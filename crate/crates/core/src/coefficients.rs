//! Leslie viscosities, Frank constants and the derived coefficient functions.
//!
//! With `s = sin(theta)` and `k = cos(theta)` the flow model uses
//!
//! ```text
//! g(theta)   = a1 s^2 k^2 + (a5 - a2)/2 s^2 + (a3 + a6)/2 k^2 + a4/2
//! h(theta)   = a3 k^2 - a2 s^2                 = (gamma1 + gamma2 cos 2theta)/2
//! c(theta)^2 = K1 k^2 + K3 s^2
//! ```
//!
//! with `gamma1 = a3 - a2` and `gamma2 = a6 - a5`. The rotational damping that
//! survives after eliminating the flow is `gamma1 - h^2/g`; its negation is the
//! coefficient that appears in the semilinear characteristic system.
//!
//! Every function is pi-periodic, so extrema are sampled on `[0, pi)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of equispaced samples on `[0, pi)` used for the global minima.
pub const EXTREMUM_SAMPLES: usize = 10_000;

/// Relative tolerance for the Parodi relation.
pub const PARODI_TOL: f64 = 1e-12;

/// Names of the shipped coefficient presets.
pub const PRESET_NAMES: [&str; 4] = ["chl20-special", "chl20-perturbed", "general", "cusp"];

/// Six Leslie viscosities and the two Frank constants entering the wave speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeslieCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub alpha6: f64,
    pub k1: f64,
    pub k3: f64,
}

impl LeslieCoefficients {
    pub fn new(alpha: [f64; 6], k1: f64, k3: f64) -> Self {
        Self {
            alpha1: alpha[0],
            alpha2: alpha[1],
            alpha3: alpha[2],
            alpha4: alpha[3],
            alpha5: alpha[4],
            alpha6: alpha[5],
            k1,
            k3,
        }
    }

    /// Coefficients reducing the model to `u_t = (u_x + theta_t)_x`,
    /// `theta_tt + 2 theta_t = c (c theta_x)_x - u_x` (g = h = 1, gamma1 = 2).
    pub fn special(k1: f64, k3: f64) -> Self {
        Self::new([0.0, -1.0, 1.0, 1.0, 0.0, 0.0], k1, k3)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "chl20-special" => Ok(Self::special(1.0, 1.0)),
            // g = 1 + 0.4 sin^2 cos^2 varies while h stays 1.
            "chl20-perturbed" => Ok(Self::new([0.4, -1.0, 1.0, 1.0, 0.0, 0.0], 1.0, 1.0)),
            // gamma2 != 0 and K1 != K3; g >= 1/2 and gamma1 - h^2/g >= 1/2.
            "general" => Ok(Self::new([-0.25, -1.5, 0.25, 2.0, 1.0, -0.25], 1.0, 1.5)),
            // Strongly anisotropic elasticity for cusp formation.
            "cusp" => Ok(Self::special(1.0, 9.0)),
            other => Err(Error::InvalidInput(format!(
                "unknown coefficient preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn alphas(&self) -> [f64; 6] {
        [
            self.alpha1,
            self.alpha2,
            self.alpha3,
            self.alpha4,
            self.alpha5,
            self.alpha6,
        ]
    }

    pub fn gamma1(&self) -> f64 {
        self.alpha3 - self.alpha2
    }

    pub fn gamma2(&self) -> f64 {
        self.alpha6 - self.alpha5
    }

    pub fn functions(&self) -> CoefficientFunctions {
        CoefficientFunctions { coeffs: *self }
    }

    /// Checks every admissibility relation and the two positive lower bounds.
    pub fn validate(&self) -> ValidationReport {
        let a = self;
        let mut checks = Vec::new();
        let finite = a.alphas().iter().all(|v| v.is_finite()) && a.k1.is_finite() && a.k3.is_finite();
        checks.push(RelationCheck::new("finite", if finite { 1.0 } else { -1.0 }));

        let parodi_gap = (a.alpha2 + a.alpha3) - (a.alpha6 - a.alpha5);
        let scale = 1.0 + a.alpha2.abs() + a.alpha3.abs() + a.alpha5.abs() + a.alpha6.abs();
        checks.push(RelationCheck::new("parodi", PARODI_TOL * scale - parodi_gap.abs()));
        checks.push(RelationCheck::new("alpha4_positive", a.alpha4));
        checks.push(RelationCheck::new(
            "isotropic_dissipation",
            2.0 * a.alpha1 + 3.0 * a.alpha4 + 2.0 * a.alpha5 + 2.0 * a.alpha6,
        ));
        checks.push(RelationCheck::new("gamma1_positive", a.gamma1()));
        let shear = 2.0 * a.alpha4 + a.alpha5 + a.alpha6;
        checks.push(RelationCheck::new("shear_positive", shear));
        checks.push(RelationCheck::new(
            "gamma_product",
            a.gamma1() * shear - a.gamma2() * a.gamma2(),
        ));
        checks.push(RelationCheck::new("frank_positive", a.k1.min(a.k3)));

        let f = self.functions();
        let (min_g, c_bar, c_star) = if finite {
            f.sampled_minima()
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        checks.push(RelationCheck::new("g_positive", min_g));
        checks.push(RelationCheck::new("c_bar_positive", c_bar));
        checks.push(RelationCheck::new("c_star_positive", c_star));

        ValidationReport {
            checks,
            c_bar,
            c_star,
        }
    }
}

/// One admissibility relation; `slack > 0` means it holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationCheck {
    pub name: &'static str,
    pub slack: f64,
    pub holds: bool,
}

impl RelationCheck {
    fn new(name: &'static str, slack: f64) -> Self {
        Self {
            name,
            slack,
            holds: slack > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<RelationCheck>,
    /// `min (g - h^2/gamma1)` over theta.
    pub c_bar: f64,
    /// `min (gamma1 - h^2/g)` over theta.
    pub c_star: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.holds).map(|c| c.name).collect()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::InvalidInput(format!(
                "coefficient relations violated: {}",
                self.failed().join(", ")
            )))
        }
    }
}

/// Closed-form evaluators bound to one coefficient set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientFunctions {
    pub coeffs: LeslieCoefficients,
}

impl CoefficientFunctions {
    pub fn gamma1(&self) -> f64 {
        self.coeffs.gamma1()
    }

    pub fn g(&self, theta: f64) -> f64 {
        let a = &self.coeffs;
        let (s, k) = theta.sin_cos();
        let (s2, k2) = (s * s, k * k);
        a.alpha1 * s2 * k2 + 0.5 * (a.alpha5 - a.alpha2) * s2 + 0.5 * (a.alpha3 + a.alpha6) * k2
            + 0.5 * a.alpha4
    }

    pub fn g_prime(&self, theta: f64) -> f64 {
        let a = &self.coeffs;
        0.5 * a.alpha1 * (4.0 * theta).sin()
            + 0.5 * ((a.alpha5 - a.alpha2) - (a.alpha3 + a.alpha6)) * (2.0 * theta).sin()
    }

    pub fn h(&self, theta: f64) -> f64 {
        let a = &self.coeffs;
        let (s, k) = theta.sin_cos();
        a.alpha3 * k * k - a.alpha2 * s * s
    }

    pub fn h_prime(&self, theta: f64) -> f64 {
        -(self.coeffs.alpha2 + self.coeffs.alpha3) * (2.0 * theta).sin()
    }

    pub fn c2(&self, theta: f64) -> f64 {
        let (s, k) = theta.sin_cos();
        self.coeffs.k1 * k * k + self.coeffs.k3 * s * s
    }

    pub fn c2_prime(&self, theta: f64) -> f64 {
        (self.coeffs.k3 - self.coeffs.k1) * (2.0 * theta).sin()
    }

    pub fn c(&self, theta: f64) -> f64 {
        self.c2(theta).sqrt()
    }

    pub fn c_prime(&self, theta: f64) -> f64 {
        self.c2_prime(theta) / (2.0 * self.c(theta))
    }

    /// Rotational damping `gamma1 - h^2/g`.
    pub fn damping(&self, theta: f64) -> f64 {
        let h = self.h(theta);
        self.gamma1() - h * h / self.g(theta)
    }

    pub fn damping_prime(&self, theta: f64) -> f64 {
        let (g, h) = (self.g(theta), self.h(theta));
        -(2.0 * h * self.h_prime(theta) * g - h * h * self.g_prime(theta)) / (g * g)
    }

    /// `h^2/g - gamma1`, the sign convention of the characteristic system.
    pub fn wave_b(&self, theta: f64) -> f64 {
        -self.damping(theta)
    }

    pub fn h_over_g(&self, theta: f64) -> f64 {
        self.h(theta) / self.g(theta)
    }

    pub fn h_over_g_prime(&self, theta: f64) -> f64 {
        let g = self.g(theta);
        self.h_prime(theta) / g - self.h(theta) * self.g_prime(theta) / (g * g)
    }

    /// Derivative of `h c / g`.
    pub fn hc_over_g_prime(&self, theta: f64) -> f64 {
        let (g, h, c) = (self.g(theta), self.h(theta), self.c(theta));
        self.h_prime(theta) * c / g + h * self.c_prime(theta) / g
            - h * c * self.g_prime(theta) / (g * g)
    }

    /// `(min g, min (g - h^2/gamma1), min (gamma1 - h^2/g))` over the sample set.
    pub fn sampled_minima(&self) -> (f64, f64, f64) {
        let gamma1 = self.gamma1();
        let mut out = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for k in 0..EXTREMUM_SAMPLES {
            let theta = PI * k as f64 / EXTREMUM_SAMPLES as f64;
            let (g, h) = (self.g(theta), self.h(theta));
            out.0 = out.0.min(g);
            out.1 = out.1.min(g - h * h / gamma1);
            out.2 = out.2.min(gamma1 - h * h / g);
        }
        out
    }

    /// Sampled `(min, max)` of a coefficient function.
    pub fn sampled_range(&self, f: impl Fn(&Self, f64) -> f64) -> (f64, f64) {
        (0..EXTREMUM_SAMPLES)
            .map(|k| f(self, PI * k as f64 / EXTREMUM_SAMPLES as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn c_max(&self) -> f64 {
        self.coeffs.k1.max(self.coeffs.k3).sqrt()
    }

    pub fn c_min(&self) -> f64 {
        self.coeffs.k1.min(self.coeffs.k3).sqrt()
    }

    pub fn g_max(&self) -> f64 {
        self.sampled_range(Self::g).1
    }

    pub fn h_sup(&self) -> f64 {
        let (lo, hi) = self.sampled_range(Self::h);
        lo.abs().max(hi.abs())
    }

    pub fn g_prime_sup(&self) -> f64 {
        let (lo, hi) = self.sampled_range(Self::g_prime);
        lo.abs().max(hi.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let e = 1e-5;
        (f(x + e) - f(x - e)) / (2.0 * e)
    }

    #[test]
    fn special_preset_values() {
        let c = LeslieCoefficients::preset("chl20-special").unwrap();
        let f = c.functions();
        assert_eq!(c.gamma1(), 2.0);
        assert_eq!(c.gamma2(), 0.0);
        for k in 0..50 {
            let th = 0.13 * k as f64;
            assert!((f.g(th) - 1.0).abs() < 1e-15);
            assert!((f.h(th) - 1.0).abs() < 1e-15);
            assert!((f.damping(th) - 1.0).abs() < 1e-15);
        }
        let report = c.validate();
        assert!(report.passed(), "{:?}", report.failed());
        assert!((report.c_bar - 0.5).abs() < 1e-12);
        assert!((report.c_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parodi_violation_is_isolated() {
        let mut c = LeslieCoefficients::preset("chl20-special").unwrap();
        c.alpha6 += 0.1;
        assert_eq!(c.validate().failed(), vec!["parodi"]);
    }

    #[test]
    fn zero_viscosity_rejected() {
        let c = LeslieCoefficients::new([0.0; 6], 1.0, 1.0);
        let failed = c.validate().failed();
        assert!(failed.contains(&"alpha4_positive"));
        assert!(failed.contains(&"gamma1_positive"));
    }

    #[test]
    fn non_finite_rejected() {
        let mut c = LeslieCoefficients::special(1.0, 1.0);
        c.alpha3 = f64::NAN;
        assert!(!c.validate().passed());
    }

    #[test]
    fn all_presets_are_admissible() {
        for name in PRESET_NAMES {
            let c = LeslieCoefficients::preset(name).unwrap();
            let r = c.validate();
            assert!(r.passed(), "{name}: {:?}", r.failed());
        }
        assert!(LeslieCoefficients::preset("nope").is_err());
    }

    #[test]
    fn energy_presets_have_half_bounds() {
        // The unit-weight energy residual needs g >= 1/2 and gamma1 - h^2/g >= 1/2.
        for name in ["chl20-special", "chl20-perturbed", "general"] {
            let f = LeslieCoefficients::preset(name).unwrap().functions();
            let (min_g, _, c_star) = f.sampled_minima();
            assert!(min_g >= 0.5 && c_star >= 0.5, "{name}: {min_g} {c_star}");
        }
    }

    #[test]
    fn h_matches_gamma_form() {
        let c = LeslieCoefficients::preset("general").unwrap();
        let f = c.functions();
        for k in 0..40 {
            let th = 0.2 * k as f64 - 3.0;
            let alt = 0.5 * (c.gamma1() + c.gamma2() * (2.0 * th).cos());
            assert!((f.h(th) - alt).abs() < 1e-13);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for name in PRESET_NAMES {
            let f = LeslieCoefficients::preset(name).unwrap().functions();
            for k in 0..60 {
                let th = -3.0 + 0.1 * k as f64;
                let checks = [
                    (f.g_prime(th), central(|t| f.g(t), th)),
                    (f.h_prime(th), central(|t| f.h(t), th)),
                    (f.c2_prime(th), central(|t| f.c2(t), th)),
                    (f.c_prime(th), central(|t| f.c(t), th)),
                    (f.damping_prime(th), central(|t| f.damping(t), th)),
                    (f.h_over_g_prime(th), central(|t| f.h_over_g(t), th)),
                    (
                        f.hc_over_g_prime(th),
                        central(|t| f.h(t) * f.c(t) / f.g(t), th),
                    ),
                ];
                for (i, (exact, fd)) in checks.iter().enumerate() {
                    assert!((exact - fd).abs() < 1e-8, "{name} #{i} at {th}: {exact} vs {fd}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn pi_periodic(th in -10.0f64..10.0) {
            let f = LeslieCoefficients::preset("general").unwrap().functions();
            let sh = th + PI;
            prop_assert!((f.g(th) - f.g(sh)).abs() < 1e-12);
            prop_assert!((f.h(th) - f.h(sh)).abs() < 1e-12);
            prop_assert!((f.c2(th) - f.c2(sh)).abs() < 1e-12);
        }

        #[test]
        fn admissible_sets_bound_g_and_damping(th in -10.0f64..10.0, a1 in 0.0f64..1.0, k3 in 0.5f64..4.0) {
            let c = LeslieCoefficients::new([a1, -1.0, 1.0, 1.0, 0.0, 0.0], 1.0, k3);
            let r = c.validate();
            prop_assert!(r.passed());
            let f = c.functions();
            let h = f.h(th);
            prop_assert!(f.g(th) - h * h / c.gamma1() >= r.c_bar - 1e-6);
            prop_assert!(f.damping(th) >= r.c_star - 1e-6);
            prop_assert!((f.damping(th) + f.wave_b(th)).abs() < 1e-15);
        }
    }
}
