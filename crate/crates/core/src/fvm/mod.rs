//! Finite-volume solver for the mean-field equation on a truncated box.
//!
//! One step is the symmetric splitting `B_{dt/2} A_dt(mu) B_{dt/2}`: an
//! implicit upwind transport solve with the nonlocal drift frozen from the
//! step's input, between two half steps of the exponential jump operator.
//! Both pieces conserve mass and map nonnegative densities to nonnegative
//! densities. [`adaptive_advance`] drives the step size.

mod density;
mod grid;
pub mod io;
mod jump;
mod stats;
mod stepper;
mod transport;

pub use density::{discretize_initial, Density, MIN_INITIAL_MASS};
pub use grid::{build_grid, BoundaryWarning, Grid2D, GridSpec};
pub use jump::{jump_apply, jump_apply_with, survival};
pub use stats::{jump_chain_marginal, mean_v, statistics, DensityStats};
pub use stepper::{
    adaptive_advance, fixed_step_advance, next_dt, strang_step, write_step_log_row, AdaptiveOptions,
    AdaptiveRun, StepRecord, StrangOutcome, STEP_LOG_HEADER,
};
pub use transport::{
    assemble_transport, clamp_negative, compute_drift_field, firing_rate, gauss_seidel, solve_dense,
    transport_solve, DriftField, SolveStats, SolverOptions, TransportOperator, TransportOutcome,
    CLAMP_TOL, DENSE_MAX_CELLS,
};
