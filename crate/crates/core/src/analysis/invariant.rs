use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvm::{adaptive_advance, discretize_initial, jump_chain_marginal, statistics, AdaptiveOptions, Density, Grid2D};
use crate::model::ModelParams;
use crate::particle::{simulate_isolated_exact, InitialCondition, ThinningOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantOptions {
    pub stepping: AdaptiveOptions,
    /// Length of the window over which the density change is measured.
    pub macro_interval: f64,
    /// Stop once `dv dw sum |mu(t + macro_interval) - mu(t)|` falls below this.
    pub tol: f64,
    /// Give up (returning the last iterate, flagged) at this time.
    pub t_long: f64,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self {
            stepping: AdaptiveOptions {
                eps: 1e-2,
                dt_max: Some(0.05),
                ..AdaptiveOptions::default()
            },
            macro_interval: 10.0,
            tol: 1e-8,
            t_long: 2000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantResult {
    pub density: Density,
    pub w_marginal: Vec<f64>,
    /// Law of `w` just after a spike, per grid row.
    pub jump_chain: Vec<f64>,
    pub converged: bool,
    /// `(t, l1 change over the preceding macro interval)`.
    pub changes: Vec<(f64, f64)>,
}

/// Long-time mean-field run of the isolated neuron (`J` must be 0).
pub fn invariant_distribution(
    p: &ModelParams,
    g: &Grid2D,
    ic: &InitialCondition,
    opts: &InvariantOptions,
) -> Result<InvariantResult> {
    if p.coupling != 0.0 {
        return Err(Error::param("J", "invariant distributions are computed for J = 0"));
    }
    if !(opts.macro_interval > 0.0 && opts.tol > 0.0 && opts.t_long > 0.0) {
        return Err(Error::param("invariant", "macro_interval, tol and t_long must be > 0"));
    }
    let d = discretize_initial(ic, g)?;
    let mut checkpoint = d.clone();
    let mut changes = Vec::new();
    let mut converged = false;
    let run = adaptive_advance(p, g, d, opts.t_long, &opts.stepping, |r, mu| {
        if r.accepted && mu.t >= checkpoint.t + opts.macro_interval {
            let change = mu.l1_distance(&checkpoint, g);
            changes.push((mu.t, change));
            log::debug!("t = {:.1}: change {change:e}", mu.t);
            checkpoint = mu.clone();
            if change < opts.tol {
                converged = true;
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    let density = run.density;
    if !converged {
        log::warn!("no stationarity by t = {} (last change {:?})", opts.t_long, changes.last());
    }
    Ok(InvariantResult {
        w_marginal: statistics(p, g, &density).w_marginal,
        jump_chain: jump_chain_marginal(p, g, &density),
        density,
        converged,
        changes,
    })
}

/// Post-jump `w` of the exact isolated neuron, binned on the grid rows and
/// normalised to probabilities. Values beyond the box go to the end rows,
/// matching the accumulation cell of the grid.
pub fn oracle_jump_histogram(
    p: &ModelParams,
    g: &Grid2D,
    n_jumps: usize,
    burn_in: usize,
    seed: u64,
    opts: &ThinningOptions,
) -> Result<Vec<f64>> {
    let jumps = simulate_isolated_exact(p, p.v_reset, 0.0, n_jumps + burn_in, seed, opts)?;
    let mut hist = vec![0.0; g.n_w];
    for j in &jumps[burn_in..] {
        hist[g.row_of(j.w)] += 1.0;
    }
    hist.iter_mut().for_each(|h| *h /= n_jumps as f64);
    Ok(hist)
}

/// `sum |p - q|` of two probability vectors.
pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvm::{build_grid, GridSpec};

    #[test]
    fn coupling_must_be_off() {
        let p = ModelParams::preset("hopf").unwrap();
        let g = build_grid(&p, &GridSpec::for_preset("hopf", 20, 20).unwrap()).unwrap().0;
        let r = invariant_distribution(&p, &g, &InitialCondition::STANDARD, &InvariantOptions::default());
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn l1_of_probabilities() {
        assert_eq!(l1_distance(&[0.5, 0.5], &[1.0, 0.0]), 1.0);
        assert_eq!(l1_distance(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
    }
}
