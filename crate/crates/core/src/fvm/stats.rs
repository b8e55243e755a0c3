use crate::model::ModelParams;

use super::density::Density;
use super::grid::Grid2D;

/// Moments and marginals of a density, all with the `dv dw` quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityStats {
    pub mean_v: f64,
    pub firing_rate: f64,
    pub mass: f64,
    /// `w_marginal[j] = sum_i mu_ij dv`.
    pub w_marginal: Vec<f64>,
}

pub fn statistics(p: &ModelParams, g: &Grid2D, d: &Density) -> DensityStats {
    let area = g.cell_area();
    let mut col = vec![0.0; g.n_v];
    let mut w_marginal = Vec::with_capacity(g.n_w);
    for row in d.mu.chunks_exact(g.n_v) {
        let mut s = 0.0;
        for (c, m) in col.iter_mut().zip(row) {
            *c += m;
            s += m;
        }
        w_marginal.push(s * g.dv);
    }
    let mut mean_v = 0.0;
    let mut firing_rate = 0.0;
    let mut mass = 0.0;
    for (i, c) in col.iter().enumerate() {
        mean_v += g.v(i) * c;
        firing_rate += p.eval_rate(g.v(i)) * c;
        mass += c;
    }
    DensityStats {
        mean_v: mean_v * area,
        firing_rate: firing_rate * area,
        mass: mass * area,
        w_marginal,
    }
}

/// Mean potential alone (cheaper than [`statistics`]).
pub fn mean_v(g: &Grid2D, d: &Density) -> f64 {
    let mut col = vec![0.0; g.n_v];
    for row in d.mu.chunks_exact(g.n_v) {
        for (c, m) in col.iter_mut().zip(row) {
            *c += m;
        }
    }
    col.iter()
        .enumerate()
        .map(|(i, c)| g.v(i) * c)
        .sum::<f64>()
        * g.cell_area()
}

/// Law of the adaptation variable just after a jump, as probabilities per
/// row: row `j'` collects `lambda(v_i) mu_ij` from every `j` with
/// `min(j + j_shift, n_w - 1) = j'`. Sums to one (all zeros if nothing fires).
pub fn jump_chain_marginal(p: &ModelParams, g: &Grid2D, d: &Density) -> Vec<f64> {
    let rates: Vec<f64> = (0..g.n_v).map(|i| p.eval_rate(g.v(i))).collect();
    let mut out = vec![0.0; g.n_w];
    for (j, row) in d.mu.chunks_exact(g.n_v).enumerate() {
        let flux: f64 = row.iter().zip(&rates).map(|(m, r)| m * r).sum();
        out[(j + g.j_shift).min(g.n_w - 1)] += flux;
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvm::density::discretize_initial;
    use crate::fvm::grid::{build_grid, GridSpec};
    use crate::particle::InitialCondition;

    fn grid(p: &ModelParams, v_min: f64, v_max: f64, n_v: usize) -> Grid2D {
        let s = GridSpec {
            v_min,
            v_max,
            w_min: -1.0,
            w_max: 14.0,
            n_v,
            n_w: 101,
        };
        build_grid(p, &s).unwrap().0
    }

    #[test]
    fn point_mass_moments() {
        let p = ModelParams::preset("hopf").unwrap();
        let g = grid(&p, -4.0, 3.0, 71);
        let d = discretize_initial(&InitialCondition::PointMass { v0: g.v(12), w0: g.w(40) }, &g).unwrap();
        let s = statistics(&p, &g, &d);
        assert!((s.mean_v - g.v(12)).abs() < 1e-12);
        assert!((s.firing_rate - p.eval_rate(g.v(12))).abs() < 1e-12);
        assert!((s.mass - 1.0).abs() < 1e-14);
        assert!((s.w_marginal[40] * g.dw - 1.0).abs() < 1e-14);
        let chain = jump_chain_marginal(&p, &g, &d);
        assert_eq!(chain[40 + g.j_shift], 1.0);
    }

    #[test]
    fn symmetric_density_has_zero_mean() {
        let p = ModelParams::preset("hopf").unwrap();
        // odd number of columns, symmetric about v = 0
        let g = grid(&p, -3.0, 3.0, 61);
        let ic = InitialCondition::Gaussian {
            mu1: 0.0,
            mu2: 5.0,
            sigma1: 0.8,
            sigma2: 1.0,
        };
        let d = discretize_initial(&ic, &g).unwrap();
        assert!(statistics(&p, &g, &d).mean_v.abs() < 1e-14);
        assert!(mean_v(&g, &d).abs() < 1e-14);
    }

    #[test]
    fn gaussian_mass_is_one() {
        let p = ModelParams::preset("cv_test").unwrap();
        let g = grid(&p, -6.0, 4.0, 101);
        let d = discretize_initial(&InitialCondition::STANDARD, &g).unwrap();
        assert!((statistics(&p, &g, &d).mass - 1.0).abs() < 1e-13);
    }
}
