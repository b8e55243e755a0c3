use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{ErrorMetric, InvariantOptions, SweepOptions};
use crate::error::{Error, Result};
use crate::fvm::{build_grid, discretize_initial, AdaptiveOptions, Grid2D, GridSpec, SolverOptions};
use crate::model::{ModelParams, PRESET_NAMES};
use crate::particle::{InitialCondition, OverflowPolicy, RunSpec, StepOptions};

/// Everything needed to reproduce one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Crate version that wrote the config (set on output, informational on input).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_version: Option<String>,
    /// Named parameter set. Exactly one of `preset` and `model` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    /// Replaces the coupling of the model.
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Times at which full states are written.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "standard_ic")]
    pub initial: InitialCondition,
    #[serde(default)]
    pub particle: ParticleConfig,
    #[serde(default)]
    pub meanfield: MeanfieldConfig,
    pub experiment: Experiment,
}

fn standard_ic() -> InitialCondition {
    InitialCondition::STANDARD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
    pub sample_every: f64,
    pub exclude_self_coupling: bool,
    pub overflow: OverflowPolicy,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            dt: 1e-3,
            sample_every: 1e-2,
            exclude_self_coupling: false,
            overflow: OverflowPolicy::Error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanfieldConfig {
    #[serde(rename = "N_v")]
    pub n_v: usize,
    #[serde(rename = "N_w")]
    pub n_w: usize,
    /// Box requested for the grid; the preset box is used when absent. The
    /// grid is shifted so that `v_reset` is a node and `w_jump` a whole number
    /// of rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_max: Option<f64>,
    /// Controller tolerance; the experiment's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub dt_init: f64,
    pub dt_min: f64,
    /// Step cap; the experiment's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for MeanfieldConfig {
    fn default() -> Self {
        let a = AdaptiveOptions::default();
        Self {
            n_v: 200,
            n_w: 200,
            v_min: None,
            v_max: None,
            w_min: None,
            w_max: None,
            eps: None,
            dt_init: a.dt_init,
            dt_min: a.dt_min,
            dt_max: a.dt_max,
            solver: a.solver,
        }
    }
}

impl MeanfieldConfig {
    /// Controller settings, filling `eps` and `dt_max` from `defaults` where
    /// absent.
    pub fn adaptive(&self, defaults: (f64, Option<f64>)) -> AdaptiveOptions {
        AdaptiveOptions {
            dt_init: self.dt_init,
            eps: self.eps.unwrap_or(defaults.0),
            dt_min: self.dt_min,
            dt_max: self.dt_max.or(defaults.1),
            solver: self.solver,
            ..AdaptiveOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    LargestN,
    MeanField,
}

/// The single driver run by an invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    SimulateParticle {
        #[serde(rename = "T")]
        t_end: f64,
    },
    SimulateMeanfield {
        #[serde(rename = "T")]
        t_end: f64,
    },
    Convergence {
        #[serde(rename = "N_values")]
        n_values: Vec<usize>,
        #[serde(rename = "T")]
        t_end: f64,
        #[serde(default)]
        reference: ReferenceKind,
        #[serde(default)]
        metric: ErrorMetric,
    },
    Chaos {
        #[serde(rename = "N_values")]
        n_values: Vec<usize>,
        #[serde(rename = "M")]
        m: usize,
        #[serde(rename = "T")]
        t_end: f64,
        #[serde(default = "default_bins")]
        bins: usize,
        /// Also run the uncoupled network at the largest `N`.
        #[serde(default)]
        independence_check: bool,
    },
    Invariant {
        #[serde(rename = "T_long")]
        t_long: f64,
        #[serde(default = "default_macro_interval")]
        macro_interval: f64,
        #[serde(default = "default_stationarity_tol")]
        tol: f64,
        /// Jumps of the exact oracle to histogram for comparison (0 skips it).
        #[serde(default)]
        oracle_jumps: usize,
        #[serde(default = "default_burn_in")]
        burn_in: usize,
    },
    SweepJ {
        #[serde(rename = "J_values")]
        j_values: Vec<f64>,
        #[serde(rename = "T")]
        t_end: f64,
        #[serde(default = "default_transient")]
        transient_fraction: f64,
        #[serde(default = "default_floor")]
        amplitude_floor: f64,
        /// `[lo, hi, tol]`: bisect the classifier threshold after the sweep.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bisect: Option<[f64; 3]>,
    },
    Compare {
        #[serde(rename = "T")]
        t_end: f64,
    },
}

fn default_bins() -> usize {
    40
}
fn default_macro_interval() -> f64 {
    InvariantOptions::default().macro_interval
}
fn default_stationarity_tol() -> f64 {
    InvariantOptions::default().tol
}
fn default_burn_in() -> usize {
    1000
}
fn default_transient() -> f64 {
    SweepOptions::default().transient_fraction
}
fn default_floor() -> f64 {
    SweepOptions::default().amplitude_floor
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::SimulateParticle { .. } => "simulate-particle",
            Experiment::SimulateMeanfield { .. } => "simulate-meanfield",
            Experiment::Convergence { .. } => "convergence",
            Experiment::Chaos { .. } => "chaos",
            Experiment::Invariant { .. } => "invariant",
            Experiment::SweepJ { .. } => "sweep-j",
            Experiment::Compare { .. } => "compare",
        }
    }

    /// Default experiment of the given kind (as named by [`Experiment::name`]).
    /// Default `(eps, dt_max)` of the mean-field controller.
    pub fn stepping_defaults(&self) -> (f64, Option<f64>) {
        match self {
            Experiment::SweepJ { .. } => {
                let s = SweepOptions::default().stepping;
                (s.eps, s.dt_max)
            }
            Experiment::Invariant { .. } => {
                let s = InvariantOptions::default().stepping;
                (s.eps, s.dt_max)
            }
            _ => (1e-2, None),
        }
    }

    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "simulate-particle" => Experiment::SimulateParticle { t_end: 20.0 },
            "simulate-meanfield" => Experiment::SimulateMeanfield { t_end: 20.0 },
            "convergence" => Experiment::Convergence {
                n_values: vec![1_000, 10_000, 100_000, 1_000_000],
                t_end: 20.0,
                reference: ReferenceKind::LargestN,
                metric: ErrorMetric::MeanAbs,
            },
            "chaos" => Experiment::Chaos {
                n_values: vec![1_000, 100_000],
                m: 400,
                t_end: 5.0,
                bins: default_bins(),
                independence_check: true,
            },
            "invariant" => Experiment::Invariant {
                t_long: InvariantOptions::default().t_long,
                macro_interval: default_macro_interval(),
                tol: default_stationarity_tol(),
                oracle_jumps: 0,
                burn_in: default_burn_in(),
            },
            "sweep-j" => Experiment::SweepJ {
                j_values: vec![5.5, 6.0, 6.2, 6.5, 7.0],
                t_end: SweepOptions::default().t_end,
                transient_fraction: default_transient(),
                amplitude_floor: default_floor(),
                bisect: None,
            },
            "compare" => Experiment::Compare { t_end: 20.0 },
            other => return Err(Error::Config(format!("unknown experiment `{other}`"))),
        })
    }

    fn uses_particles(&self) -> bool {
        matches!(
            self,
            Experiment::SimulateParticle { .. }
                | Experiment::Convergence { .. }
                | Experiment::Chaos { .. }
                | Experiment::Compare { .. }
        )
    }

    fn uses_grid(&self) -> bool {
        match self {
            Experiment::Convergence { reference, .. } => *reference == ReferenceKind::MeanField,
            Experiment::SimulateParticle { .. } | Experiment::Chaos { .. } => false,
            _ => true,
        }
    }
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn new(preset: &str, experiment: Experiment) -> Self {
        Self {
            code_version: None,
            preset: Some(preset.to_string()),
            model: None,
            coupling: None,
            seed: 1,
            out_dir: None,
            snapshot_times: Vec::new(),
            initial: InitialCondition::STANDARD,
            particle: ParticleConfig::default(),
            meanfield: MeanfieldConfig::default(),
            experiment,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Model parameters after the preset lookup and the `J` override.
    pub fn params(&self) -> Result<ModelParams> {
        let p = match (&self.preset, &self.model) {
            (Some(name), None) => ModelParams::preset(name)?,
            (None, Some(m)) => *m,
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either `preset` or `[model]`, not both".into()))
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "missing `preset` (one of {PRESET_NAMES:?}) or `[model]` table"
                )))
            }
        };
        Ok(match self.coupling {
            Some(j) => p.with_coupling(j),
            None => p,
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let m = &self.meanfield;
        let p = self.params()?;
        match (m.v_min, m.v_max, m.w_min, m.w_max) {
            (Some(a), Some(b), Some(c), Some(d)) => GridSpec::aligned(&p, a, b, c, d, m.n_v, m.n_w),
            (None, None, None, None) => match &self.preset {
                Some(name) => GridSpec::for_preset(name, m.n_v, m.n_w),
                None => Err(Error::Config(
                    "meanfield.v_min, v_max, w_min and w_max are required with an explicit model".into(),
                )),
            },
            _ => Err(Error::Config(
                "meanfield.v_min, v_max, w_min and w_max must be given together".into(),
            )),
        }
    }

    pub fn grid(&self) -> Result<Grid2D> {
        let (g, warnings) = build_grid(&self.params()?, &self.grid_spec()?)?;
        for w in warnings {
            log::warn!("grid: {w:?}");
        }
        Ok(g)
    }

    pub fn run_spec(&self, t_end: f64) -> RunSpec {
        let pc = &self.particle;
        RunSpec {
            dt: pc.dt,
            t_end,
            sample_every: pc.sample_every,
            snapshot_times: self.snapshot_times.clone(),
            step: StepOptions {
                exclude_self_coupling: pc.exclude_self_coupling,
                overflow: pc.overflow,
            },
        }
    }

    /// Mean-field controller settings for this run.
    pub fn stepping(&self) -> AdaptiveOptions {
        self.meanfield.adaptive(self.experiment.stepping_defaults())
    }

    /// Writes the experiment's controller defaults into the config, so the
    /// manifest records the values actually used.
    pub fn fill_stepping_defaults(&mut self) {
        if !self.experiment.uses_grid() {
            return;
        }
        let (eps, dt_max) = self.experiment.stepping_defaults();
        self.meanfield.eps.get_or_insert(eps);
        if self.meanfield.dt_max.is_none() {
            self.meanfield.dt_max = dt_max;
        }
    }

    pub fn sweep_options(&self) -> Option<SweepOptions> {
        match &self.experiment {
            Experiment::SweepJ {
                t_end,
                transient_fraction,
                amplitude_floor,
                ..
            } => Some(SweepOptions {
                stepping: self.stepping(),
                t_end: *t_end,
                transient_fraction: *transient_fraction,
                amplitude_floor: *amplitude_floor,
            }),
            _ => None,
        }
    }

    /// Checks everything that can be checked without running: parameters,
    /// grid, initial mass inside the box, sizes and experiment arguments.
    pub fn validate(&self) -> Result<()> {
        let p = self.params()?;
        p.validate()?;
        self.initial.validate()?;
        if self.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::param("snapshot_times", "must be finite and >= 0"));
        }
        let exp = &self.experiment;
        if exp.uses_particles() {
            let pc = &self.particle;
            if pc.n == 0 {
                return Err(Error::param("particle.N", "must be >= 1"));
            }
            self.run_spec(1.0).validate()?;
        }
        if exp.uses_grid() {
            let g = self.grid()?;
            self.stepping().validate()?;
            discretize_initial(&self.initial, &g)?;
        }
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be > 0"))
            }
        };
        match exp {
            Experiment::SimulateParticle { t_end }
            | Experiment::SimulateMeanfield { t_end }
            | Experiment::Compare { t_end } => positive("experiment.T", *t_end)?,
            Experiment::Convergence {
                n_values,
                t_end,
                reference,
                ..
            } => {
                positive("experiment.T", *t_end)?;
                check_sizes("experiment.N_values", n_values)?;
                let needed = if *reference == ReferenceKind::LargestN { 4 } else { 3 };
                if n_values.len() < needed {
                    return Err(Error::param(
                        "experiment.N_values",
                        format!("need at least {needed} sizes for a slope fit"),
                    ));
                }
            }
            Experiment::Chaos {
                n_values, m, t_end, bins, ..
            } => {
                positive("experiment.T", *t_end)?;
                check_sizes("experiment.N_values", n_values)?;
                if n_values[0] < 2 {
                    return Err(Error::param("experiment.N_values", "need two neurons per network"));
                }
                if *m < 3 {
                    return Err(Error::param("experiment.M", "must be >= 3"));
                }
                if *bins == 0 {
                    return Err(Error::param("experiment.bins", "must be >= 1"));
                }
            }
            Experiment::Invariant {
                t_long,
                macro_interval,
                tol,
                ..
            } => {
                positive("experiment.T_long", *t_long)?;
                positive("experiment.macro_interval", *macro_interval)?;
                positive("experiment.tol", *tol)?;
                if p.coupling != 0.0 {
                    return Err(Error::param("J", "invariant runs need J = 0"));
                }
            }
            Experiment::SweepJ { j_values, bisect, .. } => {
                if j_values.is_empty() {
                    return Err(Error::param("experiment.J_values", "empty"));
                }
                if j_values.iter().any(|j| !(j.is_finite() && *j >= 0.0)) {
                    return Err(Error::param("experiment.J_values", "must be finite and >= 0"));
                }
                if let Some([lo, hi, tol]) = bisect {
                    if !(lo < hi && *tol > 0.0) {
                        return Err(Error::param("experiment.bisect", "need lo < hi and tol > 0"));
                    }
                }
                self.sweep_options().expect("sweep").validate()?;
            }
        }
        Ok(())
    }
}

fn check_sizes(field: &str, n: &[usize]) -> Result<()> {
    if n.is_empty() || n[0] == 0 {
        return Err(Error::param(field, "need positive sizes"));
    }
    if n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(field, "must be strictly increasing"));
    }
    Ok(())
}

/// Parses `a:step:b` (inclusive), a comma list, or a single number.
pub fn parse_j_values(s: &str) -> Result<Vec<f64>> {
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| Error::param("J", format!("`{x}` is not a number")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(num).collect(),
        3 => {
            let (a, step, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0 && a <= b) {
                return Err(Error::param("J", "range needs a <= b and step > 0"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| a + k as f64 * step).collect())
        }
        _ => Err(Error::param("J", "expected `a:step:b`, a comma list or a number")),
    }
}

/// Parses a comma list of network sizes (`1e5` style accepted).
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            let v: f64 = x
                .trim()
                .parse()
                .map_err(|_| Error::param("N", format!("`{x}` is not a number")))?;
            if v < 1.0 || v.fract() != 0.0 || v > usize::MAX as f64 {
                return Err(Error::param("N", format!("`{x}` is not a positive integer")));
            }
            Ok(v as usize)
        })
        .collect()
}
