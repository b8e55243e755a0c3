//! Jump operator `B_dt`: each cell keeps `e^{-lambda(v_i) dt}` of its mass and
//! sends the rest to the reset column, `j_shift` rows up, the top row
//! absorbing whatever would leave the box.

use crate::model::ModelParams;

use super::density::Density;
use super::grid::Grid2D;

/// Surviving fraction `e^{-lambda(v_i) dt}` per column.
pub fn survival(p: &ModelParams, g: &Grid2D, dt: f64) -> Vec<f64> {
    (0..g.n_v).map(|i| (-p.eval_rate(g.v(i)) * dt).exp()).collect()
}

/// Applies `B_dt`; time is not advanced.
pub fn jump_apply(p: &ModelParams, g: &Grid2D, d: &Density, dt: f64) -> Density {
    jump_apply_with(&survival(p, g, dt), g, d)
}

/// [`jump_apply`] with precomputed survival fractions.
pub fn jump_apply_with(keep: &[f64], g: &Grid2D, d: &Density) -> Density {
    let nv = g.n_v;
    let top = g.n_w - 1;
    let mut out = vec![0.0; g.len()];
    let mut deposit = vec![0.0; g.n_w];
    for (j, (src, dst)) in d.mu.chunks_exact(nv).zip(out.chunks_exact_mut(nv)).enumerate() {
        let mut lost = 0.0;
        for i in 0..nv {
            let kept = keep[i] * src[i];
            dst[i] = kept;
            lost += src[i] - kept;
        }
        deposit[(j + g.j_shift).min(top)] += lost;
    }
    for (j, add) in deposit.into_iter().enumerate() {
        out[g.index(g.i_reset, j)] += add;
    }
    Density { mu: out, t: d.t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvm::grid::{build_grid, GridSpec};
    use crate::model::RateFunction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ModelParams, Grid2D) {
        let p = ModelParams::preset("hopf").unwrap();
        let s = GridSpec {
            v_min: -4.0,
            v_max: 3.0,
            w_min: -1.0,
            w_max: 8.0,
            n_v: 15,
            n_w: 19,
        };
        (p, build_grid(&p, &s).unwrap().0)
    }

    #[test]
    fn zero_rate_is_identity() {
        let (mut p, g) = setup();
        p.rate = RateFunction::Constant { c: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Density {
            mu: (0..g.len()).map(|_| rng.random()).collect(),
            t: 0.0,
        };
        assert_eq!(jump_apply(&p, &g, &d, 0.7), d);
    }

    #[test]
    fn single_cell_two_cell_balance() {
        let (p, g) = setup();
        assert_eq!(g.j_shift, 3);
        let mut d = Density::zeros(&g);
        let (i, j) = (10, 4);
        d.mu[g.index(i, j)] = 2.0;
        let dt = 0.1;
        let out = jump_apply(&p, &g, &d, dt);
        let e = (-p.eval_rate(g.v(i)) * dt).exp();
        assert_eq!(out.at(&g, i, j), e * 2.0);
        assert!((out.at(&g, g.i_reset, j + 3) - (1.0 - e) * 2.0).abs() < 1e-15);
        assert!((out.mu.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert_eq!(out.mu.iter().filter(|&&x| x != 0.0).count(), 2);
    }

    #[test]
    fn overflow_accumulates_at_top() {
        let (p, g) = setup();
        let mut d = Density::zeros(&g);
        d.mu[g.index(2, g.n_w - 2)] = 1.0;
        d.mu[g.index(g.i_reset, g.n_w - 1)] = 1.0;
        let out = jump_apply(&p, &g, &d, 0.5);
        let e = (-p.eval_rate(g.v(2)) * 0.5).exp();
        let top = out.at(&g, g.i_reset, g.n_w - 1);
        // the top reset cell loses mass to itself
        assert!((top - (1.0 + 1.0 - e)).abs() < 1e-15);
        // nothing lands in the reset column's lower rows
        for j in 0..g.j_shift {
            assert_eq!(out.at(&g, g.i_reset, j), 0.0);
        }
    }

    #[test]
    fn decay_rows_are_exact_and_mass_is_kept() {
        let (p, g) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Density {
            mu: (0..g.len()).map(|_| rng.random()).collect(),
            t: 0.0,
        };
        let dt = 0.37;
        let out = jump_apply(&p, &g, &d, dt);
        for j in 0..g.n_w {
            for i in (0..g.n_v).filter(|&i| i != g.i_reset) {
                let exact = (-p.eval_rate(g.v(i)) * dt).exp() * d.at(&g, i, j);
                assert_eq!(out.at(&g, i, j), exact);
            }
        }
        let m0: f64 = d.mu.iter().sum();
        let m1: f64 = out.mu.iter().sum();
        assert!((m1 - m0).abs() <= 1e-14 * m0);
    }

    #[test]
    fn semigroup_on_non_reset_columns() {
        let (p, g) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = Density {
            mu: (0..g.len()).map(|_| rng.random()).collect(),
            t: 0.0,
        };
        let twice = jump_apply(&p, &g, &jump_apply(&p, &g, &d, 0.05), 0.05);
        let once = jump_apply(&p, &g, &d, 0.1);
        for j in 0..g.n_w {
            for i in (0..g.n_v).filter(|&i| i != g.i_reset) {
                let (a, b) = (twice.at(&g, i, j), once.at(&g, i, j));
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-300));
            }
        }
    }
}
