//! Gauss-Legendre rules and the graded time rules used by the kernel integrals.

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Chebyshev-like starting guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Nodes `tau` and weights for `int_a^b q(tau) d tau` when `q` is smooth.
pub fn plain_rule(a: f64, b: f64, gl: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    gl.0.iter().zip(&gl.1).map(|(&x, &w)| (a + (b - a) * x, (b - a) * w)).collect()
}

/// Nodes for `int_a^b q(tau) d tau` when `q` is singular like `(b - tau)^(-p)`,
/// `p < 1`, via `b - tau = (b - a) v^4`.
pub fn graded_rule_upper(a: f64, b: f64, gl: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let d = b - a;
    gl.0.iter()
        .zip(&gl.1)
        .map(|(&v, &w)| (b - d * v.powi(4), 4.0 * d * v.powi(3) * w))
        .collect()
}

/// Mirror of [`graded_rule_upper`] for a singularity at `a`.
pub fn graded_rule_lower(a: f64, b: f64, gl: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let d = b - a;
    gl.0.iter()
        .zip(&gl.1)
        .map(|(&v, &w)| (a + d * v.powi(4), 4.0 * d * v.powi(3) * w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let gl = gauss_legendre(n);
            for p in 0..2 * n {
                let s: f64 = gl.0.iter().zip(&gl.1).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "n={n} p={p}: {s}");
            }
            assert!(gl.0.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn graded_rules_integrate_weak_singularities() {
        let gl = gauss_legendre(8);
        // int_0^1 (1 - t)^(-3/4) dt = 4
        let s: f64 = graded_rule_upper(0.0, 1.0, &gl).iter().map(|(t, w)| w * (1.0 - t).powf(-0.75)).sum();
        assert!((s - 4.0).abs() < 1e-9, "{s}");
        let s: f64 = graded_rule_lower(2.0, 3.0, &gl).iter().map(|(t, w)| w * (t - 2.0).powf(-0.5)).sum();
        assert!((s - 2.0).abs() < 1e-9, "{s}");
        let s: f64 = plain_rule(1.0, 3.0, &gl).iter().map(|(t, w)| w * t.exp()).sum();
        assert!((s - (3f64.exp() - 1f64.exp())).abs() < 1e-12);
    }
}
