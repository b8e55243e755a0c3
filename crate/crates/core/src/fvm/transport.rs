//! Implicit upwind transport step `A_dt(mu) mu' = mu` with `A = I + dt D(mu)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::density::Density;
use super::grid::Grid2D;

/// Cell-centre velocities, frozen for one transport solve.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftField {
    /// `F(v_i) - w_j + I + J psi`
    pub v: Vec<f64>,
    /// `(b v_i - w_j) / tau_w`
    pub w: Vec<f64>,
    /// `sum lambda(v_i) mu_ij dv dw`
    pub psi: f64,
}

/// Population firing rate of a density.
pub fn firing_rate(p: &ModelParams, g: &Grid2D, d: &Density) -> f64 {
    let rates: Vec<f64> = (0..g.n_v).map(|i| p.eval_rate(g.v(i))).collect();
    let mut total = 0.0;
    for row in d.mu.chunks_exact(g.n_v) {
        total += row.iter().zip(&rates).map(|(m, r)| m * r).sum::<f64>();
    }
    total * g.cell_area()
}

pub fn compute_drift_field(p: &ModelParams, g: &Grid2D, d: &Density) -> DriftField {
    let psi = firing_rate(p, g, d);
    // drift(v, w, psi) = (F(v) + I + J psi - w, (b v - w) / tau_w): evaluate the
    // v-dependent parts once per column
    let col: Vec<(f64, f64)> = (0..g.n_v).map(|i| p.drift(g.v(i), 0.0, psi)).collect();
    let mut v = vec![0.0; g.len()];
    let mut w = vec![0.0; g.len()];
    for j in 0..g.n_w {
        let wj = g.w(j);
        let row = j * g.n_v..(j + 1) * g.n_v;
        for ((a, b), (cv, cw)) in v[row.clone()].iter_mut().zip(&mut w[row]).zip(&col) {
            *a = cv - wj;
            *b = cw - wj / p.tau_w;
        }
    }
    DriftField { v, w, psi }
}

/// `A = I + dt D` as five diagonals. Entry `k` of each band is the coefficient
/// multiplying the neighbour of cell `k` in row `k`; bands are zero where the
/// neighbour does not exist.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportOperator {
    pub n_v: usize,
    pub n_w: usize,
    pub diag: Vec<f64>,
    /// neighbour `k - 1`
    pub west: Vec<f64>,
    /// neighbour `k + 1`
    pub east: Vec<f64>,
    /// neighbour `k - n_v`
    pub south: Vec<f64>,
    /// neighbour `k + n_v`
    pub north: Vec<f64>,
}

/// Upwind assembly with arithmetic-mean face velocities and zero flux through
/// the boundary.
pub fn assemble_transport(g: &Grid2D, f: &DriftField, dt: f64) -> TransportOperator {
    let n = g.len();
    let (nv, nw) = (g.n_v, g.n_w);
    let cv = dt / g.dv;
    let cw = dt / g.dw;
    let mut a = TransportOperator {
        n_v: nv,
        n_w: nw,
        diag: vec![1.0; n],
        west: vec![0.0; n],
        east: vec![0.0; n],
        south: vec![0.0; n],
        north: vec![0.0; n],
    };
    for j in 0..nw {
        for i in 0..nv {
            let k = j * nv + i;
            // face (i + 1/2, j)
            if i + 1 < nv {
                let s = 0.5 * (f.v[k] + f.v[k + 1]);
                let (pos, neg) = (s.max(0.0), s.min(0.0));
                a.diag[k] += cv * pos;
                a.east[k] += cv * neg;
                a.diag[k + 1] -= cv * neg;
                a.west[k + 1] -= cv * pos;
            }
            // face (i, j + 1/2)
            if j + 1 < nw {
                let s = 0.5 * (f.w[k] + f.w[k + nv]);
                let (pos, neg) = (s.max(0.0), s.min(0.0));
                a.diag[k] += cw * pos;
                a.north[k] += cw * neg;
                a.diag[k + nv] -= cw * neg;
                a.south[k + nv] -= cw * pos;
            }
        }
    }
    a
}

impl TransportOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nv = self.n_v;
        let n = self.len();
        for k in 0..n {
            let mut s = self.diag[k] * x[k];
            if k >= 1 {
                s += self.west[k] * x[k - 1];
            }
            if k + 1 < n {
                s += self.east[k] * x[k + 1];
            }
            if k >= nv {
                s += self.south[k] * x[k - nv];
            }
            if k + nv < n {
                s += self.north[k] * x[k + nv];
            }
            y[k] = s;
        }
    }

    /// Column sums and column dominance margins `a_kk - sum_{l != k} |a_lk|`.
    pub fn column_sums_and_margins(&self) -> (Vec<f64>, Vec<f64>) {
        let nv = self.n_v;
        let n = self.len();
        let mut sums = self.diag.clone();
        let mut off = vec![0.0; n];
        for k in 0..n {
            if k >= 1 {
                sums[k - 1] += self.west[k];
                off[k - 1] += self.west[k].abs();
            }
            if k + 1 < n {
                sums[k + 1] += self.east[k];
                off[k + 1] += self.east[k].abs();
            }
            if k >= nv {
                sums[k - nv] += self.south[k];
                off[k - nv] += self.south[k].abs();
            }
            if k + nv < n {
                sums[k + nv] += self.north[k];
                off[k + nv] += self.north[k].abs();
            }
        }
        let margins = self.diag.iter().zip(&off).map(|(d, o)| d - o).collect();
        (sums, margins)
    }

    /// Whether every column is strictly diagonally dominant.
    pub fn is_column_dominant(&self) -> bool {
        let (_, margins) = self.column_sums_and_margins();
        margins.iter().all(|&m| m > 0.0)
    }

    /// Dense copy, for small grids.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let nv = self.n_v;
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = self.diag[k];
            if k >= 1 && self.west[k] != 0.0 {
                m[(k, k - 1)] = self.west[k];
            }
            if k + 1 < n && self.east[k] != 0.0 {
                m[(k, k + 1)] = self.east[k];
            }
            if k >= nv && self.south[k] != 0.0 {
                m[(k, k - nv)] = self.south[k];
            }
            if k + nv < n && self.north[k] != 0.0 {
                m[(k, k + nv)] = self.north[k];
            }
        }
        m
    }
}

/// Largest grid (in cells) accepted by [`solve_dense`].
pub const DENSE_MAX_CELLS: usize = 64 * 64;

/// Direct LU solve, the reference for [`transport_solve`] on small grids.
pub fn solve_dense(a: &TransportOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    if a.len() > DENSE_MAX_CELLS {
        return Err(Error::param("grid", "dense solve limited to 64 x 64 cells"));
    }
    let b = DVector::from_column_slice(rhs);
    let x = a
        .to_dense()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::param("A", "singular transport operator"))?;
    Ok(x.iter().copied().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Target `||A x - b||_1 / ||b||_1`.
    pub rel_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    pub sweeps: usize,
    pub residual: f64,
}

/// Gauss-Seidel for `A x = b`, starting from `x = b` and cycling through the
/// four lexicographic sweep directions so that upwind chains in any direction
/// are resolved in few sweeps. `A` is an M-matrix, so every iterate of a
/// nonnegative right-hand side stays nonnegative.
pub fn gauss_seidel(a: &TransportOperator, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.len();
    let (nv, nw) = (a.n_v, a.n_w);
    let norm_b: f64 = b.iter().map(|v| v.abs()).sum();
    if norm_b == 0.0 {
        return Ok((b.to_vec(), SolveStats { sweeps: 0, residual: 0.0 }));
    }
    // x lives at offset nv inside a zero-padded buffer, so the neighbour reads
    // need no boundary tests (the matching coefficients are zero anyway)
    let mut xp = vec![0.0; n + 2 * nv];
    xp[nv..nv + n].copy_from_slice(b);
    let residual = |xp: &[f64]| -> f64 {
        let mut total = 0.0;
        for k in 0..n {
            let c = nv + k;
            let ax = a.diag[k] * xp[c]
                + a.west[k] * xp[c - 1]
                + a.east[k] * xp[c + 1]
                + a.south[k] * xp[c - nv]
                + a.north[k] * xp[c + nv];
            total += (ax - b[k]).abs();
        }
        total / norm_b
    };
    let inv_diag: Vec<f64> = a.diag.iter().map(|d| 1.0 / d).collect();
    let relax = |xp: &mut [f64], k: usize| {
        let c = nv + k;
        let s = b[k]
            - a.west[k] * xp[c - 1]
            - a.east[k] * xp[c + 1]
            - a.south[k] * xp[c - nv]
            - a.north[k] * xp[c + nv];
        xp[c] = s * inv_diag[k];
    };
    let mut history = Vec::new();
    let mut res = residual(&xp);
    history.push(res);
    let mut sweeps = 0;
    while res > opts.rel_tol {
        if sweeps >= opts.max_sweeps {
            let keep = history.len().saturating_sub(10);
            return Err(Error::SolverDiverged {
                iterations: sweeps,
                history: history.split_off(keep),
            });
        }
        match sweeps % 4 {
            0 => (0..n).for_each(|k| relax(&mut xp, k)),
            1 => (0..n).rev().for_each(|k| relax(&mut xp, k)),
            2 => {
                for j in 0..nw {
                    (j * nv..(j + 1) * nv).rev().for_each(|k| relax(&mut xp, k));
                }
            }
            _ => {
                for j in (0..nw).rev() {
                    (j * nv..(j + 1) * nv).for_each(|k| relax(&mut xp, k));
                }
            }
        }
        sweeps += 1;
        res = residual(&xp);
        history.push(res);
        if !res.is_finite() {
            return Err(Error::SolverDiverged {
                iterations: sweeps,
                history,
            });
        }
    }
    xp.truncate(nv + n);
    xp.drain(..nv);
    Ok((xp, SolveStats { sweeps, residual: res }))
}

/// Values below this are a scheme violation; values in `[CLAMP_TOL, 0)` are
/// set to zero.
pub const CLAMP_TOL: f64 = -1e-12;

/// Clamps tiny negative values, rescaling to keep the mass. Returns the number
/// of clamped cells and the pre-clamp minimum.
pub fn clamp_negative(mu: &mut [f64]) -> Result<(usize, f64)> {
    let min = mu.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return Ok((0, min));
    }
    if min < CLAMP_TOL {
        return Err(Error::NegativeDensity { min });
    }
    let before: f64 = mu.iter().sum();
    let mut count = 0;
    for x in mu.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
            count += 1;
        }
    }
    let after: f64 = mu.iter().sum();
    if after > 0.0 {
        let s = before / after;
        mu.iter_mut().for_each(|x| *x *= s);
    }
    log::warn!("clamped {count} slightly negative cells (min {min:e})");
    Ok((count, min))
}

/// Outcome of [`transport_solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct TransportOutcome {
    pub density: Density,
    pub stats: SolveStats,
    pub clamped: usize,
    pub min_before_clamp: f64,
}

/// Solves `A mu' = mu`; time is not advanced (the caller owns the clock).
pub fn transport_solve(a: &TransportOperator, d: &Density, opts: &SolverOptions) -> Result<TransportOutcome> {
    let (mut mu, stats) = gauss_seidel(a, &d.mu, opts)?;
    let (clamped, min_before_clamp) = clamp_negative(&mut mu)?;
    Ok(TransportOutcome {
        density: Density { mu, t: d.t },
        stats,
        clamped,
        min_before_clamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvm::grid::{build_grid, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_grid(n_v: usize, n_w: usize) -> (ModelParams, Grid2D) {
        let p = ModelParams::preset("hopf").unwrap();
        let s = GridSpec {
            v_min: -4.0,
            v_max: 3.0,
            w_min: -1.0,
            w_max: -1.0 + (n_w - 1) as f64 * 0.5,
            n_v,
            n_w,
        };
        let g = build_grid(&p, &s).unwrap().0;
        (p, g)
    }

    fn random_field(g: &Grid2D, rng: &mut ChaCha8Rng, scale: f64) -> DriftField {
        DriftField {
            v: (0..g.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
            w: (0..g.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
            psi: 0.0,
        }
    }

    #[test]
    fn drift_field_matches_pointwise_formula() {
        let (p, g) = small_grid(9, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = Density {
            mu: (0..g.len()).map(|_| rng.random_range(0.0..1.0)).collect(),
            t: 0.0,
        };
        let f = compute_drift_field(&p, &g, &d);
        let psi: f64 = (0..g.n_w)
            .flat_map(|j| (0..g.n_v).map(move |i| (i, j)))
            .map(|(i, j)| p.eval_rate(g.v(i)) * d.at(&g, i, j) * g.dv * g.dw)
            .sum();
        assert!((f.psi - psi).abs() < 1e-12 * psi);
        for j in 0..g.n_w {
            for i in 0..g.n_v {
                let (a, b) = p.drift(g.v(i), g.w(j), f.psi);
                let k = g.index(i, j);
                assert!((f.v[k] - a).abs() < 1e-12 * (1.0 + a.abs()));
                assert!((f.w[k] - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn coupling_off_makes_drift_density_free() {
        let (mut p, g) = small_grid(9, 7);
        p.coupling = 0.0;
        let a = compute_drift_field(&p, &g, &Density::zeros(&g));
        let mut d = Density::zeros(&g);
        d.mu[10] = 3.0;
        let b = compute_drift_field(&p, &g, &d);
        assert_eq!(a.v, b.v);
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn point_mass_rate_and_uniform_density_rate() {
        let (mut p, g) = small_grid(9, 7);
        p.rate = crate::model::RateFunction::Exp;
        let mut d = Density::zeros(&g);
        d.mu[g.index(4, 3)] = 1.0 / (g.dv * g.dw);
        assert!((firing_rate(&p, &g, &d) - g.v(4).exp()).abs() < 1e-12);
        // uniform unit-mass density: psi = sum_i e^{v_i} / n_v, a geometric sum
        let u = 1.0 / (g.len() as f64 * g.dv * g.dw);
        let d = Density {
            mu: vec![u; g.len()],
            t: 0.0,
        };
        let r = g.dv.exp();
        let geometric = g.v_min.exp() * (r.powi(g.n_v as i32) - 1.0) / (r - 1.0) / g.n_v as f64;
        assert!((firing_rate(&p, &g, &d) - geometric).abs() < 1e-12 * geometric);
    }

    #[test]
    fn uniform_positive_velocity_stencil() {
        let (_, g) = small_grid(6, 5);
        let f = DriftField {
            v: vec![2.0; g.len()],
            w: vec![0.0; g.len()],
            psi: 0.0,
        };
        let dt = 0.01;
        let a = assemble_transport(&g, &f, dt);
        let k = g.index(3, 2);
        assert!((a.diag[k] - (1.0 + dt * 2.0 / g.dv)).abs() < 1e-14);
        assert!((a.west[k] + dt * 2.0 / g.dv).abs() < 1e-14);
        assert_eq!(a.east[k], 0.0);
        assert_eq!(a.south[k], 0.0);
        assert_eq!(a.north[k], 0.0);
    }

    #[test]
    fn zero_velocity_gives_identity() {
        let (_, g) = small_grid(5, 5);
        let f = DriftField {
            v: vec![0.0; g.len()],
            w: vec![0.0; g.len()],
            psi: 0.0,
        };
        let a = assemble_transport(&g, &f, 0.3);
        assert_eq!(a.to_dense(), DMatrix::identity(25, 25));
    }

    /// Reference assembly straight from the flux definitions.
    fn dense_reference(g: &Grid2D, f: &DriftField, dt: f64) -> DMatrix<f64> {
        let n = g.len();
        let mut d = DMatrix::<f64>::zeros(n, n);
        for j in 0..g.n_w {
            for i in 0..g.n_v {
                let k = g.index(i, j);
                // F_{i+1/2} - F_{i-1/2} as a linear form in mu'
                for (face, sign) in [(i as isize, 1.0), (i as isize - 1, -1.0)] {
                    if face < 0 || face as usize + 1 >= g.n_v {
                        continue;
                    }
                    let (l, r) = (g.index(face as usize, j), g.index(face as usize + 1, j));
                    let s = 0.5 * (f.v[l] + f.v[r]);
                    let up = if s > 0.0 { l } else { r };
                    d[(k, up)] += sign * s / g.dv;
                }
                for (face, sign) in [(j as isize, 1.0), (j as isize - 1, -1.0)] {
                    if face < 0 || face as usize + 1 >= g.n_w {
                        continue;
                    }
                    let (lo, hi) = (g.index(i, face as usize), g.index(i, face as usize + 1));
                    let s = 0.5 * (f.w[lo] + f.w[hi]);
                    let up = if s > 0.0 { lo } else { hi };
                    d[(k, up)] += sign * s / g.dw;
                }
            }
        }
        DMatrix::identity(n, n) + d * dt
    }

    #[test]
    fn matches_dense_reference_and_columns_sum_to_one() {
        let (_, g) = small_grid(5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = random_field(&g, &mut rng, 3.0);
            let dt = rng.random_range(0.01..2.0);
            let a = assemble_transport(&g, &f, dt);
            let reference = dense_reference(&g, &f, dt);
            assert!((a.to_dense() - &reference).abs().max() < 1e-13);
            let (sums, margins) = a.column_sums_and_margins();
            for (c, col) in reference.column_iter().enumerate() {
                assert!((col.sum() - 1.0).abs() < 1e-12);
                assert!((sums[c] - 1.0).abs() < 1e-12);
            }
            assert!(margins.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn band_structure() {
        let (_, g) = small_grid(7, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = assemble_transport(&g, &random_field(&g, &mut rng, 1.0), 0.5).to_dense();
        let n = g.len() as isize;
        for r in 0..n {
            for c in 0..n {
                let off = c - r;
                if ![-(g.n_v as isize), -1, 0, 1, g.n_v as isize].contains(&off) {
                    assert_eq!(a[(r as usize, c as usize)], 0.0);
                }
            }
        }
    }

    #[test]
    fn gauss_seidel_matches_lu() {
        let (_, g) = small_grid(12, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let f = random_field(&g, &mut rng, 5.0);
            let a = assemble_transport(&g, &f, rng.random_range(0.01..1.0));
            let b: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let (x, stats) = gauss_seidel(&a, &b, &SolverOptions::default()).unwrap();
            let y = solve_dense(&a, &b).unwrap();
            assert!(stats.residual <= 1e-11);
            let err: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum();
            assert!(err < 1e-9, "{err}");
            assert!(x.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn one_dimensional_advection_moves_mass_downwind() {
        // 10 cells in v, uniform V > 0
        let (_, g) = small_grid(10, 5);
        let f = DriftField {
            v: vec![1.0; g.len()],
            w: vec![0.0; g.len()],
            psi: 0.0,
        };
        let a = assemble_transport(&g, &f, 0.5);
        let mut d = Density::zeros(&g);
        d.mu[g.index(3, 0)] = 1.0;
        let out = transport_solve(&a, &d, &SolverOptions::default()).unwrap();
        let reference = solve_dense(&a, &d.mu).unwrap();
        for (x, y) in out.density.mu.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-13);
        }
        // nothing upstream, nothing in the other row
        assert!(out.density.mu[..3].iter().all(|&x| x == 0.0));
        assert!(out.density.mu[10..].iter().all(|&x| x == 0.0));
        assert!(out.density.mu[4] > 0.0);
        let total: f64 = out.density.mu.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_policy() {
        let mut mu = vec![1.0, -1e-13, 2.0];
        let (count, min) = clamp_negative(&mut mu).unwrap();
        assert_eq!((count, min), (1, -1e-13));
        assert!((mu.iter().sum::<f64>() - (3.0 - 1e-13)).abs() < 1e-15);
        let mut bad = vec![1.0, -1e-6];
        assert!(matches!(clamp_negative(&mut bad), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn cap_reports_history() {
        let (_, g) = small_grid(12, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = assemble_transport(&g, &random_field(&g, &mut rng, 50.0), 1.0);
        let b = vec![1.0; g.len()];
        let opts = SolverOptions {
            rel_tol: 1e-14,
            max_sweeps: 1,
        };
        match gauss_seidel(&a, &b, &opts) {
            Err(Error::SolverDiverged { iterations, history }) => {
                assert_eq!(iterations, 1);
                assert!(!history.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }
}
