//! Simulation toolkit for a network of stochastic two-dimensional spiking
//! neurons with all-to-all excitatory coupling.
//!
//! * [`model`]: nonlinearities, spike rates, parameter presets;
//! * [`particle`]: Monte Carlo simulation of the finite network and an exact
//!   thinning simulator for one isolated neuron;
//! * [`fvm`]: conservative, positivity-preserving finite-volume solver for the
//!   mean-field equation;
//! * [`analysis`]: experiment drivers (convergence in `N`, propagation of chaos,
//!   invariant distributions, bifurcation sweeps);
//! * [`cli`]: configuration files and the command-line front end.

pub mod error;
pub mod model;
pub mod particle;
pub mod fvm;
pub mod analysis;
pub mod cli;

pub use error::{Error, Result};
pub use model::{ModelParams, Nonlinearity, RateFunction};
pub use particle::{InitialCondition, ParticleState};
