use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::CoefficientFunctions;
use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;

/// Norms of `exp(-lambda t) S(x, t)` over the slab.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNorms {
    pub lambda: f64,
    pub sup: f64,
    /// `||exp(-lambda t) S||_{L^2}` over the slab (trapezoid in time).
    pub l2: f64,
    /// Space-time Hölder quotient of the weighted field, Euclidean distance.
    pub holder: f64,
    pub alpha: f64,
}

/// Weighted norms with the Hölder quotient taken over every pair of
/// neighbouring lattice points and `pairs` seeded random pairs.
pub fn weighted_norms(field: &SpaceTimeField, lambda: f64, alpha: f64, pairs: usize, seed: u64) -> WeightedNorms {
    let grid = field.grid;
    let (n, nt) = (grid.n, field.n_t());
    let weight: Vec<f64> = field.times.iter().map(|&t| (-lambda * t).exp()).collect();
    let at = |k: usize, i: usize| weight[k] * field.at(k, i);
    let mut sup = 0.0f64;
    let mut slices = Vec::with_capacity(nt);
    for k in 0..nt {
        let row: Vec<f64> = (0..n).map(|i| at(k, i)).collect();
        sup = row.iter().fold(sup, |m, v| m.max(v.abs()));
        slices.push(grid.l2_norm(&row).powi(2));
    }
    let l2 = (1..nt)
        .map(|k| 0.5 * (field.times[k] - field.times[k - 1]) * (slices[k] + slices[k - 1]))
        .sum::<f64>()
        .sqrt();
    let quotient = |(k1, i1): (usize, usize), (k2, i2): (usize, usize)| -> f64 {
        let dx = grid.x(i1) - grid.x(i2);
        let dt = field.times[k1] - field.times[k2];
        let d = (dx * dx + dt * dt).sqrt();
        if d == 0.0 {
            0.0
        } else {
            (at(k1, i1) - at(k2, i2)).abs() / d.powf(alpha)
        }
    };
    let mut holder = 0.0f64;
    for k in 0..nt {
        for i in 0..n {
            if i + 1 < n {
                holder = holder.max(quotient((k, i), (k, i + 1)));
            }
            if k + 1 < nt {
                holder = holder.max(quotient((k, i), (k + 1, i)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let p = (rng.gen_range(0..nt), rng.gen_range(0..n));
        let q = (rng.gen_range(0..nt), rng.gen_range(0..n));
        holder = holder.max(quotient(p, q));
    }
    WeightedNorms {
        lambda,
        sup,
        l2,
        holder,
        alpha,
    }
}

/// Per-slice `L^2` residuals of the two expressions for the flux.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub times: Vec<f64>,
    /// `||J - v_t / g||`, `v_t` by second-order time differences.
    pub from_v_t: Vec<f64>,
    /// `||J - u_x - (h/g) theta_t||` with `u = v_x`.
    pub from_u: Vec<f64>,
}

impl ConsistencyReport {
    pub fn max_from_v_t(&self) -> f64 {
        self.from_v_t.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_from_u(&self) -> f64 {
        self.from_u.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn consistency_j(
    j: &SpaceTimeField,
    v: &SpaceTimeField,
    theta: &SpaceTimeField,
    theta_t: &SpaceTimeField,
    f: &CoefficientFunctions,
) -> Result<ConsistencyReport> {
    let grid = j.grid;
    for other in [v, theta, theta_t] {
        if other.grid != grid || other.times != j.times {
            return Err(Error::InvalidInput("consistency check: fields live on different lattices".into()));
        }
    }
    let nt = j.n_t();
    if nt < 3 {
        return Err(Error::InvalidInput("consistency check needs three time levels".into()));
    }
    let t = &j.times;
    let n = grid.n;
    let mut report = ConsistencyReport {
        times: t.clone(),
        from_v_t: Vec::with_capacity(nt),
        from_u: Vec::with_capacity(nt),
    };
    for k in 0..nt {
        // Three-point derivative on the (possibly uneven) time levels.
        let (a, b, c) = match k {
            0 => (0, 1, 2),
            _ if k == nt - 1 => (nt - 3, nt - 2, nt - 1),
            _ => (k - 1, k, k + 1),
        };
        let (ta, tb, tc, tk) = (t[a], t[b], t[c], t[k]);
        let wa = ((tk - tb) + (tk - tc)) / ((ta - tb) * (ta - tc));
        let wb = ((tk - ta) + (tk - tc)) / ((tb - ta) * (tb - tc));
        let wc = ((tk - ta) + (tk - tb)) / ((tc - ta) * (tc - tb));
        let u = grid.ddx(v.row(k));
        let ux = grid.ddx(&u);
        let mut r1 = vec![0.0; n];
        let mut r2 = vec![0.0; n];
        for i in 0..n {
            let th = theta.at(k, i);
            let v_t = wa * v.at(a, i) + wb * v.at(b, i) + wc * v.at(c, i);
            r1[i] = j.at(k, i) - v_t / f.g(th);
            r2[i] = j.at(k, i) - ux[i] - f.h_over_g(th) * theta_t.at(k, i);
        }
        report.from_v_t.push(grid.l2_norm(&r1));
        report.from_u.push(grid.l2_norm(&r2));
    }
    Ok(report)
}
