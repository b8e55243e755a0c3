//! Experiment drivers: convergence of the network to the mean field,
//! propagation of chaos, invariant distributions of the isolated neuron and the
//! bifurcation sweep in the coupling `J`.

mod compare;
mod convergence;
mod hopf;
mod invariant;

pub use compare::{compare_particle_meanfield, compare_traces, meanfield_trace, Series, TraceComparison};
pub use convergence::{convergence_experiment, fit_loglog, ConvergenceResult, ErrorMetric, Reference};
pub use hopf::{
    autocorrelation_period, bisect_threshold, cycle_periods, hopf_sweep, period_variation, run_at_coupling,
    sign_changes, summarize_trace, Bisection, SweepOptions, SweepResult, TraceSummary,
};
pub use invariant::{invariant_distribution, l1_distance, oracle_jump_histogram, InvariantOptions, InvariantResult};

use crate::error::Result;
use crate::model::ModelParams;
use crate::particle::{pair_correlation_experiment, InitialCondition, PairCorrelation, RunSpec};

/// Pair-correlation experiment repeated for several network sizes.
pub fn chaos_experiment(
    p: &ModelParams,
    ic: &InitialCondition,
    n_values: &[usize],
    m: usize,
    spec: &RunSpec,
    seed: u64,
    bins: usize,
) -> Result<Vec<(usize, PairCorrelation)>> {
    n_values
        .iter()
        .map(|&n| {
            let seed_n = crate::particle::derive_seed(seed, n as u64);
            pair_correlation_experiment(p, ic, n, m, spec, seed_n, bins).map(|r| (n, r))
        })
        .collect()
}
