use crate::error::{Error, Result};
use crate::grid::{solve_cyclic_tridiagonal, solve_tridiagonal, SpaceTimeField};

/// Crank-Nicolson on the lattice of `g` for
///
/// ```text
/// w_t = g(x, t) w_xx - decay w + source,   w(t0) = w0
/// ```
///
/// On a decay grid the end nodes keep only `w_t = -decay w + source`, so a
/// far-field constant is carried instead of being pinned to zero.
pub fn crank_nicolson(g: &SpaceTimeField, decay: f64, source: &SpaceTimeField, w0: &[f64]) -> Result<SpaceTimeField> {
    let grid = g.grid;
    let n = grid.n;
    if source.grid != grid || source.times != g.times || w0.len() != n {
        return Err(Error::InvalidInput("parabolic solve: inputs live on different lattices".into()));
    }
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let periodic = grid.is_periodic();
    let mut out = SpaceTimeField::zeros(grid, g.times.clone());
    out.row_mut(0).copy_from_slice(w0);
    let mut w = w0.to_vec();
    for k in 0..g.n_t() - 1 {
        let dt = g.times[k + 1] - g.times[k];
        let (g_old, g_new) = (g.row(k), g.row(k + 1));
        let (s_old, s_new) = (source.row(k), source.row(k + 1));
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let edge = !periodic && (i == 0 || i == n - 1);
            let lap = if edge {
                0.0
            } else {
                let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
                (w[ip] - 2.0 * w[i] + w[im]) * inv_dx2
            };
            rhs[i] = w[i] + 0.5 * dt * (g_old[i] * lap - decay * w[i] + s_old[i] + s_new[i]);
            diag[i] = 1.0 + 0.5 * dt * decay;
            if !edge {
                let r = 0.5 * dt * g_new[i] * inv_dx2;
                lower[i] = -r;
                upper[i] = -r;
                diag[i] += 2.0 * r;
            }
        }
        w = if periodic {
            solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs)?
        } else {
            solve_tridiagonal(&lower, &diag, &upper, &rhs)?
        };
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("parabolic solve diverged by t={}", g.times[k + 1])));
        }
        out.row_mut(k + 1).copy_from_slice(&w);
    }
    Ok(out)
}
