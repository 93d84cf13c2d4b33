//! Heat kernels and the Levi parametrix for the operator
//!
//! ```text
//! L w = w_t - g(x, t) w_xx + decay * w,      g(x, t) = g(theta(x, t))
//! ```
//!
//! where `theta` is only Holder continuous. `Z(x,t; xi,tau)` is the normalised
//! heat kernel with `g` frozen at the source point and the decay folded in, so
//! `L Z = -K` with the defect `K = (g(x,t) - g(xi,tau)) Z_xx`. Writing
//! `Phi = K + K*Phi` (space-time convolution over `tau < s < t`):
//!
//! * the fundamental solution is `Gamma = Z + Z*Phi`;
//! * a potential is `M_F = Gamma*F = Z*(F + psi)` with `psi = sum_m K^{*m} F`.
//!
//! [`LeviOperator`] evaluates potentials on a space-time lattice; the
//! [`ParametrixTable`] resolves `Phi` and `Gamma` for one source point.

mod levi;
mod parametrix;
pub mod quadrature;
mod solve;

pub use levi::{InitialLayer, LeviConfig, LeviOperator, Potential, SeriesReport};
pub use parametrix::{
    fit_power_law, gamma_fd_residual, GammaProbe, ParametrixConfig, ParametrixTable, PowerFit, ResidualReport,
};
pub use solve::{
    assemble_forcing, derive_a_equation_check, solve_a_kernel, solve_v_kernel, AForcing, AInputs, DerivationCheck,
    KernelFields,
};

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// A scalar field that can be evaluated anywhere in the slab.
pub trait ScalarField: Sync {
    fn value(&self, x: f64, t: f64) -> f64;
}

impl ScalarField for SpaceTimeField {
    fn value(&self, x: f64, t: f64) -> f64 {
        self.sample(x, t)
    }
}

impl<F: Fn(f64, f64) -> f64 + Sync> ScalarField for F {
    fn value(&self, x: f64, t: f64) -> f64 {
        self(x, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelVariant {
    /// `exp(-r^2 / 4 g dt) / (2 sqrt(g) sqrt(dt))`, the form without the
    /// `1/sqrt(pi)` normalisation.
    PaperLiteral,
    /// `exp(-r^2 / 4 g dt) / sqrt(4 pi g dt)`, unit mass in `r`.
    Normalized,
}

/// Normalised heat kernel `exp(-decay dt) exp(-r^2/4 g dt) / sqrt(4 pi g dt)`.
#[inline]
pub fn heat(g: f64, decay: f64, r: f64, dt: f64) -> f64 {
    let a = g * dt;
    (-r * r / (4.0 * a) - decay * dt).exp() / (FOUR_PI * a).sqrt()
}

/// `d/dr` of [`heat`].
#[inline]
pub fn heat_x(g: f64, decay: f64, r: f64, dt: f64) -> f64 {
    -r / (2.0 * g * dt) * heat(g, decay, r, dt)
}

/// `d^2/dr^2` of [`heat`].
#[inline]
pub fn heat_xx(g: f64, decay: f64, r: f64, dt: f64) -> f64 {
    let a = g * dt;
    (r * r / (4.0 * a * a) - 0.5 / a) * heat(g, decay, r, dt)
}

/// The frozen kernel `H^{xi,tau}(x - xi, t - tau)` with `g` taken at the source.
pub fn frozen_kernel(
    x: f64,
    t: f64,
    xi: f64,
    tau: f64,
    theta: &dyn ScalarField,
    f: &CoefficientFunctions,
    variant: KernelVariant,
) -> Result<f64> {
    let dt = t - tau;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("frozen kernel needs t > tau (t - tau = {dt})")));
    }
    let g = f.g(theta.value(xi, tau));
    let r = x - xi;
    let gauss = (-r * r / (4.0 * g * dt)).exp();
    Ok(match variant {
        KernelVariant::PaperLiteral => gauss / (2.0 * g.sqrt() * dt.sqrt()),
        KernelVariant::Normalized => gauss / (FOUR_PI * g * dt).sqrt(),
    })
}

/// Which kernel a convolution integrates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum KernelKind {
    Value,
    Derivative,
    Defect,
}

#[inline]
pub(crate) fn kernel_eval(kind: KernelKind, g_source: f64, g_target: f64, decay: f64, r: f64, dt: f64) -> f64 {
    match kind {
        KernelKind::Value => heat(g_source, decay, r, dt),
        KernelKind::Derivative => heat_x(g_source, decay, r, dt),
        KernelKind::Defect => (g_target - g_source) * heat_xx(g_source, decay, r, dt),
    }
}
