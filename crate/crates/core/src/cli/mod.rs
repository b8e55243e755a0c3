//! Command-line front end: a TOML run configuration, flag overrides and one
//! results directory per invocation.

mod config;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{
    parse_config, parse_j_values, parse_sizes, Experiment, MeanfieldConfig, ParticleConfig, ReferenceKind,
    RunConfig,
};
pub use run::{dispatch, output_dir, MANIFEST, OUT_ROOT_ENV};

use crate::error::{Error, Result};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. } | Error::Config(_) | Error::MassOutsideDomain { .. } => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        Error::SpikeProbabilityOverflow { .. }
        | Error::NonFiniteState { .. }
        | Error::RateBoundFailure { .. }
        | Error::SolverDiverged { .. }
        | Error::NegativeDensity { .. }
        | Error::StepUnderflow { .. }
        | Error::DegenerateFit(_) => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "spikefield", version, about = "Stochastic spiking network: particle and mean-field simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulator.
    Simulate {
        #[command(subcommand)]
        target: SimTarget,
    },
    /// Error of finite networks against a reference, fitted against N.
    Convergence(Common),
    /// Correlation of two neurons over independent network realisations.
    Chaos(Common),
    /// Long-time density of the isolated neuron (J = 0).
    Invariant(Common),
    /// Mean-field amplitude and period over a range of couplings.
    #[command(name = "sweep-j")]
    SweepJ(Common),
    /// Network and mean-field mean potential side by side.
    Compare(Common),
}

#[derive(Debug, Subcommand)]
pub enum SimTarget {
    /// Monte Carlo network of N neurons.
    Particle(Common),
    /// Finite-volume solver of the mean-field equation.
    Meanfield(Common),
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration (a previous manifest works too).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter preset: cv_test, invariant_a, invariant_b or hopf.
    #[arg(long)]
    pub preset: Option<String>,
    /// Network size, or comma list of sizes for convergence and chaos.
    #[arg(long = "N")]
    pub n: Option<String>,
    /// Final time (T_long for invariant).
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Particle time step.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coupling; for sweep-j a range `a:step:b` or comma list.
    #[arg(long = "J")]
    pub j: Option<String>,
    /// Pair samples per network size (chaos).
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Mean-field grid cells along v.
    #[arg(long)]
    pub nv: Option<usize>,
    /// Mean-field grid cells along w.
    #[arg(long)]
    pub nw: Option<usize>,
    /// Mean-field error tolerance per step.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Results directory (default: under $SPIKEFIELD_OUT or ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validate and print the resolved configuration without running.
    #[arg(long)]
    pub dry_run: bool,
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::Simulate {
                target: SimTarget::Particle(c),
            } => ("simulate-particle", c),
            Command::Simulate {
                target: SimTarget::Meanfield(c),
            } => ("simulate-meanfield", c),
            Command::Convergence(c) => ("convergence", c),
            Command::Chaos(c) => ("chaos", c),
            Command::Invariant(c) => ("invariant", c),
            Command::SweepJ(c) => ("sweep-j", c),
            Command::Compare(c) => ("compare", c),
        }
    }
}

/// Builds the validated configuration for a subcommand: config file (or
/// defaults for the subcommand), then flag overrides.
pub fn resolve(kind: &str, flags: &Common) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            if cfg.experiment.name() != kind {
                return Err(Error::Config(format!(
                    "{} describes a `{}` run, not `{kind}`",
                    path.display(),
                    cfg.experiment.name()
                )));
            }
            if let Some(v) = &cfg.code_version {
                if v != env!("CARGO_PKG_VERSION") {
                    log::warn!("config written by version {v}, running {}", env!("CARGO_PKG_VERSION"));
                }
            }
            cfg
        }
        None => {
            let preset = flags.preset.as_deref().unwrap_or(match kind {
                "invariant" => "invariant_b",
                "sweep-j" => "hopf",
                _ => "cv_test",
            });
            RunConfig::new(preset, Experiment::default_for(kind)?)
        }
    };
    cfg.code_version = None;
    if let Some(name) = &flags.preset {
        cfg.preset = Some(name.clone());
        cfg.model = None;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = flags.dt {
        cfg.particle.dt = dt;
    }
    if let Some(out) = &flags.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(nv) = flags.nv {
        cfg.meanfield.n_v = nv;
    }
    if let Some(nw) = flags.nw {
        cfg.meanfield.n_w = nw;
    }
    if let Some(eps) = flags.eps {
        cfg.meanfield.eps = Some(eps);
    }
    let sizes = flags.n.as_deref().map(parse_sizes).transpose()?;
    let couplings = flags.j.as_deref().map(parse_j_values).transpose()?;
    match &mut cfg.experiment {
        Experiment::Convergence { n_values, .. } | Experiment::Chaos { n_values, .. } => {
            if let Some(s) = sizes {
                *n_values = s;
            }
        }
        _ => {
            if let Some(s) = sizes {
                match s.as_slice() {
                    [n] => cfg.particle.n = *n,
                    _ => return Err(Error::param("N", "this subcommand takes a single size")),
                }
            }
        }
    }
    match &mut cfg.experiment {
        Experiment::SweepJ { j_values, .. } => {
            if let Some(j) = couplings {
                *j_values = j;
            }
        }
        _ => {
            if let Some(j) = couplings {
                match j.as_slice() {
                    [j] => cfg.coupling = Some(*j),
                    _ => return Err(Error::param("J", "this subcommand takes a single coupling")),
                }
            }
        }
    }
    if let Experiment::Chaos { m, .. } = &mut cfg.experiment {
        if let Some(v) = flags.m {
            *m = v;
        }
    } else if flags.m.is_some() {
        return Err(Error::param("M", "only used by chaos"));
    }
    if let Some(t) = flags.t {
        match &mut cfg.experiment {
            Experiment::SimulateParticle { t_end }
            | Experiment::SimulateMeanfield { t_end }
            | Experiment::Convergence { t_end, .. }
            | Experiment::Chaos { t_end, .. }
            | Experiment::SweepJ { t_end, .. }
            | Experiment::Compare { t_end } => *t_end = t,
            Experiment::Invariant { t_long, .. } => *t_long = t,
        }
    }
    cfg.fill_stepping_defaults();
    cfg.validate()?;
    Ok(cfg)
}

/// Entry point of the binary; returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let (kind, flags) = cli.command.split();
    let result = resolve(kind, flags).and_then(|cfg| {
        if flags.dry_run {
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        let dir = output_dir(&cfg);
        dispatch(&cfg, &dir)?;
        println!("{}", dir.display());
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let flags = Common {
            n: Some("1e3,1e4,1e5,1e6".into()),
            t: Some(3.0),
            seed: Some(9),
            ..Common::default()
        };
        let cfg = resolve("convergence", &flags).unwrap();
        assert_eq!(cfg.seed, 9);
        match cfg.experiment {
            Experiment::Convergence { n_values, t_end, .. } => {
                assert_eq!(n_values, vec![1000, 10_000, 100_000, 1_000_000]);
                assert_eq!(t_end, 3.0);
            }
            _ => panic!(),
        }
        let flags = Common {
            j: Some("5:0.25:7".into()),
            ..Common::default()
        };
        match resolve("sweep-j", &flags).unwrap().experiment {
            Experiment::SweepJ { j_values, .. } => assert_eq!(j_values.len(), 9),
            _ => panic!(),
        }
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NegativeDensity { min: -1.0 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_IO);
    }

    #[test]
    fn mismatched_config_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        let cfg = RunConfig::new("cv_test", Experiment::default_for("compare").unwrap());
        std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
        let flags = Common {
            config: Some(path),
            ..Common::default()
        };
        assert!(resolve("compare", &flags).is_ok());
        assert!(matches!(resolve("chaos", &flags), Err(Error::Config(_))));
    }
}
