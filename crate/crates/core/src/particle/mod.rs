//! Monte Carlo simulation of the finite all-to-all network.
//!
//! Each time step applies, in order:
//! 1. a forward Euler step of the single-neuron flow,
//! 2. an independent Bernoulli spike per neuron with probability
//!    `lambda(v*) dt`, resetting `v` to `v_reset` and adding `w_jump` to `w`,
//! 3. a uniform kick `J/N * (number of spikes)` to every neuron.
//!
//! The [`oracle`] submodule holds an exact thinning simulator for one isolated
//! neuron, used to validate the discretisation.

mod chaos;
mod ode;
pub mod oracle;
mod streams;

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub use chaos::{pair_correlation_experiment, pearson, Histogram2D, PairCorrelation};
pub use ode::Dopri5;
pub use oracle::{inter_jump_intervals, simulate_isolated_exact, JumpRecord, ThinningOptions};
pub use streams::{derive_seed, StreamSet};

/// Neurons handled per work unit inside a step.
const STEP_CHUNK: usize = 4096;

/// Law of the initial state `(v, w)` of each neuron.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Independent normals in `v` and `w` (`sigma*` are standard deviations).
    Gaussian {
        mu1: f64,
        mu2: f64,
        sigma1: f64,
        sigma2: f64,
    },
    PointMass { v0: f64, w0: f64 },
}

impl InitialCondition {
    /// Gaussian used by the convergence and bifurcation experiments.
    pub const STANDARD: InitialCondition = InitialCondition::Gaussian {
        mu1: -1.3,
        mu2: 2.28,
        sigma1: 1.0,
        sigma2: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialCondition::Gaussian {
                mu1,
                mu2,
                sigma1,
                sigma2,
            } => {
                if !(mu1.is_finite() && mu2.is_finite()) {
                    return Err(Error::param("initial.mu", "must be finite"));
                }
                if !(sigma1 > 0.0 && sigma2 > 0.0 && sigma1.is_finite() && sigma2.is_finite()) {
                    return Err(Error::param("initial.sigma", "must be > 0"));
                }
            }
            InitialCondition::PointMass { v0, w0 } => {
                if !(v0.is_finite() && w0.is_finite()) {
                    return Err(Error::param("initial.v0/w0", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Probability density at `(v, w)`; `None` for the point mass.
    pub fn density(&self, v: f64, w: f64) -> Option<f64> {
        match *self {
            InitialCondition::Gaussian {
                mu1,
                mu2,
                sigma1,
                sigma2,
            } => {
                let zv = (v - mu1) / sigma1;
                let zw = (w - mu2) / sigma2;
                let norm = 2.0 * std::f64::consts::PI * sigma1 * sigma2;
                Some((-0.5 * (zv * zv + zw * zw)).exp() / norm)
            }
            InitialCondition::PointMass { .. } => None,
        }
    }
}

/// What to do when `lambda(v*) dt > 1` for some neuron.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    /// Abort the step with [`Error::SpikeProbabilityOverflow`].
    #[default]
    Error,
    /// Keep the Bernoulli test `u < lambda dt` as written (the neuron fires
    /// with probability one) and count the event in
    /// [`ParticleState::saturated`].
    Saturate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepOptions {
    /// Do not add a neuron's own kick `J/N` to it when it spikes.
    pub exclude_self_coupling: bool,
    pub overflow: OverflowPolicy,
}

/// State of the `N`-neuron network.
#[derive(Clone, Debug)]
pub struct ParticleState {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
    /// Number of steps taken; selects the random stream of the next step.
    pub steps: u64,
    pub n_spikes_last_step: usize,
    /// Which neurons fired in the last step.
    pub spiked: Vec<bool>,
    /// Neuron-steps where `lambda dt` exceeded one (only under
    /// [`OverflowPolicy::Saturate`]).
    pub saturated: u64,
    streams: StreamSet,
    scratch_v: Vec<f64>,
    scratch_w: Vec<f64>,
    scratch_spiked: Vec<bool>,
}

impl ParticleState {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.streams.seed()
    }

    /// Empirical mean potential `V_N`, summed in a fixed order.
    pub fn mean_v(&self) -> f64 {
        ordered_mean(&self.v)
    }

    /// Builds a state from explicit coordinates.
    pub fn from_parts(v: Vec<f64>, w: Vec<f64>, seed: u64) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::param("N", "need at least one neuron"));
        }
        if v.len() != w.len() {
            return Err(Error::param("w", "v and w must have the same length"));
        }
        if let Some(i) = v.iter().chain(&w).position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState {
                t: 0.0,
                index: i % v.len(),
            });
        }
        let n = v.len();
        Ok(Self {
            v,
            w,
            t: 0.0,
            steps: 0,
            n_spikes_last_step: 0,
            spiked: vec![false; n],
            saturated: 0,
            streams: StreamSet::new(seed),
            scratch_v: vec![0.0; n],
            scratch_w: vec![0.0; n],
            scratch_spiked: vec![false; n],
        })
    }

    /// Advances the network by one step of length `dt`.
    ///
    /// On error the state is left unchanged.
    pub fn step(&mut self, p: &ModelParams, dt: f64, opts: &StepOptions) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be > 0"));
        }
        let n = self.v.len();
        let step = self.steps;
        let streams = &self.streams;
        let v_reset = p.v_reset;
        let w_jump = p.w_jump;

        // Flow and spike draws into the scratch buffers.
        let chunk_stats: Vec<(usize, usize, f64)> = self
            .scratch_v
            .par_chunks_mut(STEP_CHUNK)
            .zip(self.scratch_w.par_chunks_mut(STEP_CHUNK))
            .zip(self.scratch_spiked.par_chunks_mut(STEP_CHUNK))
            .zip(self.v.par_chunks(STEP_CHUNK).zip(self.w.par_chunks(STEP_CHUNK)))
            .enumerate()
            .map(|(c, (((nv, nw), sp), (v, w)))| {
                let mut rng = streams.spike_uniforms(step, c * STEP_CHUNK);
                let mut count = 0usize;
                let mut over = 0usize;
                let mut max_prob = 0.0f64;
                for k in 0..v.len() {
                    let (dv, dw) = p.drift(v[k], w[k], 0.0);
                    let v_star = v[k] + dt * dv;
                    let w_star = w[k] + dt * dw;
                    let prob = p.eval_rate(v_star) * dt;
                    let u: f64 = rng.random();
                    // a NaN rate never fires and is caught by the finiteness check
                    if prob > max_prob {
                        max_prob = prob;
                    }
                    over += (prob > 1.0) as usize;
                    let fire = u < prob;
                    sp[k] = fire;
                    if fire {
                        count += 1;
                        nv[k] = v_reset;
                        nw[k] = w_star + w_jump;
                    } else {
                        nv[k] = v_star;
                        nw[k] = w_star;
                    }
                }
                (count, over, max_prob)
            })
            .collect();

        let count: usize = chunk_stats.iter().map(|c| c.0).sum();
        let max_prob = chunk_stats.iter().fold(0.0f64, |m, c| m.max(c.2));
        let t_next = self.t + dt;
        if max_prob > 1.0 {
            match opts.overflow {
                OverflowPolicy::Error => {
                    return Err(Error::SpikeProbabilityOverflow {
                        t: self.t,
                        max_prob,
                    });
                }
                OverflowPolicy::Saturate => {
                    self.saturated += chunk_stats.iter().map(|c| c.1 as u64).sum::<u64>();
                }
            }
        }

        let kick = p.coupling * count as f64 / n as f64;
        let self_kick = if opts.exclude_self_coupling {
            p.coupling / n as f64
        } else {
            0.0
        };
        let bad = self
            .scratch_v
            .par_chunks_mut(STEP_CHUNK)
            .zip(self.scratch_w.par_chunks(STEP_CHUNK))
            .zip(self.scratch_spiked.par_chunks(STEP_CHUNK))
            .enumerate()
            .filter_map(|(c, ((v, w), sp))| {
                let mut first = None;
                for k in 0..v.len() {
                    v[k] += if sp[k] { kick - self_kick } else { kick };
                    if first.is_none() && !(v[k].is_finite() && w[k].is_finite()) {
                        first = Some(c * STEP_CHUNK + k);
                    }
                }
                first
            })
            .min();
        if let Some(index) = bad {
            return Err(Error::NonFiniteState { t: t_next, index });
        }

        std::mem::swap(&mut self.v, &mut self.scratch_v);
        std::mem::swap(&mut self.w, &mut self.scratch_w);
        std::mem::swap(&mut self.spiked, &mut self.scratch_spiked);
        self.t = t_next;
        self.steps += 1;
        self.n_spikes_last_step = count;
        Ok(())
    }
}

fn ordered_mean(xs: &[f64]) -> f64 {
    let partial: Vec<f64> = xs.par_chunks(STEP_CHUNK).map(|c| c.iter().sum()).collect();
    partial.iter().sum::<f64>() / xs.len() as f64
}

/// Draws `n` i.i.d. neurons from `ic`; the result only depends on `(ic, n, seed)`.
pub fn init_particles(
    p: &ModelParams,
    ic: &InitialCondition,
    n: usize,
    seed: u64,
) -> Result<ParticleState> {
    p.validate()?;
    ic.validate()?;
    if n == 0 {
        return Err(Error::param("N", "need at least one neuron"));
    }
    let streams = StreamSet::new(seed);
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    match *ic {
        InitialCondition::PointMass { v0, w0 } => {
            v.fill(v0);
            w.fill(w0);
        }
        InitialCondition::Gaussian {
            mu1,
            mu2,
            sigma1,
            sigma2,
        } => {
            v.par_chunks_mut(streams::INIT_CHUNK)
                .zip(w.par_chunks_mut(streams::INIT_CHUNK))
                .enumerate()
                .for_each(|(c, (vc, wc))| {
                    let mut rng = streams.init_chunk(c);
                    for (x, y) in vc.iter_mut().zip(wc.iter_mut()) {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        *x = mu1 + sigma1 * a;
                        *y = mu2 + sigma2 * b;
                    }
                });
        }
    }
    ParticleState::from_parts(v, w, seed)
}

/// Sampling and stepping controls for [`run`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: f64,
    /// Times at which full `(v, w)` snapshots are kept (rounded to the step grid).
    pub snapshot_times: Vec<f64>,
    pub step: StepOptions,
}

impl RunSpec {
    pub fn new(dt: f64, t_end: f64, sample_every: f64) -> Self {
        Self {
            dt,
            t_end,
            sample_every,
            snapshot_times: Vec::new(),
            step: StepOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be > 0"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("T", "must be > 0"));
        }
        if !(self.sample_every > 0.0 && self.sample_every.is_finite()) {
            return Err(Error::param("sample_every", "must be > 0"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        ((self.t_end / self.dt).round() as u64).max(1)
    }

    pub fn steps_per_sample(&self) -> u64 {
        ((self.sample_every / self.dt).round() as u64).max(1)
    }
}

/// One sampled row of a [`ParticleTrace`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub mean_v: f64,
    /// Spikes per neuron per unit time since the previous sample.
    pub firing_rate: f64,
    /// Spikes since the previous sample.
    pub n_spikes: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleTrace {
    pub times: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub firing_rate: Vec<f64>,
    pub n_spikes: Vec<u64>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl ParticleTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, row: TraceRow) {
        self.times.push(row.t);
        self.mean_v.push(row.mean_v);
        self.firing_rate.push(row.firing_rate);
        self.n_spikes.push(row.n_spikes);
    }

    pub fn rows(&self) -> impl Iterator<Item = TraceRow> + '_ {
        (0..self.len()).map(|k| TraceRow {
            t: self.times[k],
            mean_v: self.mean_v[k],
            firing_rate: self.firing_rate[k],
            n_spikes: self.n_spikes[k],
        })
    }

    /// Writes `t,mean_v,firing_rate,n_spikes`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for row in self.rows() {
            write_trace_row(&mut out, &row)?;
        }
        Ok(())
    }
}

pub const TRACE_HEADER: &str = "t,mean_v,firing_rate,n_spikes";

pub fn write_trace_row<W: Write>(out: &mut W, row: &TraceRow) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{}",
        row.t, row.mean_v, row.firing_rate, row.n_spikes
    )
}

/// Writes one `v,w` row per neuron.
pub fn write_snapshot_csv<W: Write>(mut out: W, v: &[f64], w: &[f64]) -> std::io::Result<()> {
    writeln!(out, "v,w")?;
    for (a, b) in v.iter().zip(w) {
        writeln!(out, "{a},{b}")?;
    }
    Ok(())
}

/// Runs the network to `spec.t_end`, sampling at `t = 0` and at every multiple
/// of `spec.sample_every`.
pub fn run(p: &ModelParams, state: &mut ParticleState, spec: &RunSpec) -> Result<ParticleTrace> {
    run_with(p, state, spec, |_| Ok(()))
}

/// Like [`run`], calling `on_sample` as each row is produced.
pub fn run_with(
    p: &ModelParams,
    state: &mut ParticleState,
    spec: &RunSpec,
    mut on_sample: impl FnMut(&TraceRow) -> Result<()>,
) -> Result<ParticleTrace> {
    p.validate()?;
    spec.validate()?;
    let n_steps = spec.n_steps();
    let every = spec.steps_per_sample();
    let snap_steps: Vec<u64> = spec
        .snapshot_times
        .iter()
        .map(|t| (t / spec.dt).round() as u64)
        .collect();
    let t0 = state.t;
    let mut trace = ParticleTrace::default();

    let first = TraceRow {
        t: t0,
        mean_v: state.mean_v(),
        firing_rate: 0.0,
        n_spikes: 0,
    };
    on_sample(&first)?;
    trace.push(first);
    if snap_steps.contains(&0) {
        trace.snapshots.push(Snapshot {
            t: t0,
            v: state.v.clone(),
            w: state.w.clone(),
        });
    }

    let mut spikes = 0u64;
    let mut since = 0u64;
    for k in 1..=n_steps {
        state.step(p, spec.dt, &spec.step)?;
        spikes += state.n_spikes_last_step as u64;
        since += 1;
        if k % every == 0 || k == n_steps {
            let row = TraceRow {
                t: t0 + k as f64 * spec.dt,
                mean_v: state.mean_v(),
                firing_rate: spikes as f64 / (state.len() as f64 * since as f64 * spec.dt),
                n_spikes: spikes,
            };
            on_sample(&row)?;
            trace.push(row);
            spikes = 0;
            since = 0;
        }
        if snap_steps.contains(&k) {
            trace.snapshots.push(Snapshot {
                t: t0 + k as f64 * spec.dt,
                v: state.v.clone(),
                w: state.w.clone(),
            });
        }
    }
    Ok(trace)
}

/// Inter-spike interval statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalStats {
    pub count: usize,
    pub mean: f64,
    pub std_err: f64,
}

impl IntervalStats {
    pub fn from_intervals(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            count: xs.len(),
            mean,
            std_err: (var / n).sqrt(),
        }
    }
}

/// Inter-spike intervals of the Euler scheme for an isolated neuron.
///
/// `replicas` independent copies started at `(v0, w0)` are stepped together
/// with the coupling switched off; each copy's intervals are measured from its
/// first spike onwards, until `n_intervals` have been collected.
pub fn euler_isolated_intervals(
    p: &ModelParams,
    v0: f64,
    w0: f64,
    dt: f64,
    n_intervals: usize,
    replicas: usize,
    seed: u64,
    overflow: OverflowPolicy,
) -> Result<Vec<f64>> {
    let p = p.with_coupling(0.0);
    let ic = InitialCondition::PointMass { v0, w0 };
    let mut state = init_particles(&p, &ic, replicas.max(1), seed)?;
    let opts = StepOptions {
        exclude_self_coupling: true,
        overflow,
    };
    let mut last: Vec<Option<u64>> = vec![None; state.len()];
    let mut out = Vec::with_capacity(n_intervals);
    while out.len() < n_intervals {
        state.step(&p, dt, &opts)?;
        if state.n_spikes_last_step == 0 {
            continue;
        }
        let k = state.steps;
        for (i, &fired) in state.spiked.iter().enumerate() {
            if fired {
                if let Some(prev) = last[i] {
                    out.push((k - prev) as f64 * dt);
                }
                last[i] = Some(k);
            }
        }
    }
    out.truncate(n_intervals);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateFunction;

    fn quiet_params() -> ModelParams {
        let mut p = ModelParams::preset("hopf").unwrap();
        p.rate = RateFunction::Constant { c: 0.0 };
        p
    }

    #[test]
    fn point_mass_init() {
        let p = ModelParams::preset("cv_test").unwrap();
        let s = init_particles(&p, &InitialCondition::PointMass { v0: 1.0, w0: 2.0 }, 3, 0).unwrap();
        assert_eq!(s.v, vec![1.0; 3]);
        assert_eq!(s.w, vec![2.0; 3]);
        assert!(init_particles(&p, &InitialCondition::STANDARD, 0, 0).is_err());
    }

    #[test]
    fn gaussian_init_is_deterministic_and_centered() {
        let p = ModelParams::preset("cv_test").unwrap();
        let a = init_particles(&p, &InitialCondition::STANDARD, 50_000, 11).unwrap();
        let b = init_particles(&p, &InitialCondition::STANDARD, 50_000, 11).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.w, b.w);
        let tol = 5.0 / (50_000f64).sqrt();
        assert!((a.mean_v() + 1.3).abs() < tol);
        let mw = a.w.iter().sum::<f64>() / a.len() as f64;
        assert!((mw - 2.28).abs() < tol);
        // prefix property: a smaller population is the first neurons of a larger one
        let c = init_particles(&p, &InitialCondition::STANDARD, 3000, 11).unwrap();
        assert_eq!(&a.v[..3000], &c.v[..]);
    }

    #[test]
    fn zero_rate_step_is_forward_euler() {
        let p = quiet_params();
        let mut s = ParticleState::from_parts(vec![-2.0, 0.5], vec![1.0, -0.3], 1).unwrap();
        let dt = 1e-3;
        let expect: Vec<(f64, f64)> = s
            .v
            .iter()
            .zip(&s.w)
            .map(|(&v, &w)| {
                let (dv, dw) = p.drift(v, w, 0.0);
                (v + dt * dv, w + dt * dw)
            })
            .collect();
        s.step(&p, dt, &StepOptions::default()).unwrap();
        for (k, (v, w)) in expect.into_iter().enumerate() {
            assert_eq!(s.v[k], v);
            assert_eq!(s.w[k], w);
        }
        assert_eq!(s.n_spikes_last_step, 0);
    }

    #[test]
    fn forced_spike_single_neuron() {
        let mut p = ModelParams::preset("cv_test").unwrap();
        p.rate = RateFunction::Constant { c: 1000.0 };
        let dt = 1e-3; // lambda dt = 1: every uniform in [0,1) fires
        let mut s = ParticleState::from_parts(vec![0.3], vec![0.7], 5).unwrap();
        let (_, dw) = p.drift(0.3, 0.7, 0.0);
        s.step(&p, dt, &StepOptions::default()).unwrap();
        assert_eq!(s.n_spikes_last_step, 1);
        assert_eq!(s.v[0], p.v_reset + p.coupling);
        assert_eq!(s.w[0], 0.7 + dt * dw + p.w_jump);

        let mut s = ParticleState::from_parts(vec![0.3], vec![0.7], 5).unwrap();
        let opts = StepOptions {
            exclude_self_coupling: true,
            ..Default::default()
        };
        s.step(&p, dt, &opts).unwrap();
        assert_eq!(s.v[0], p.v_reset);
    }

    #[test]
    fn overflow_policies() {
        let mut p = ModelParams::preset("cv_test").unwrap();
        p.rate = RateFunction::Constant { c: 2000.0 };
        let mut s = ParticleState::from_parts(vec![0.0; 4], vec![0.0; 4], 5).unwrap();
        let before = s.clone();
        let err = s.step(&p, 1e-3, &StepOptions::default()).unwrap_err();
        match err {
            Error::SpikeProbabilityOverflow { max_prob, .. } => assert!((max_prob - 2.0).abs() < 1e-12),
            other => panic!("{other}"),
        }
        assert_eq!(s.v, before.v);
        assert_eq!(s.t, 0.0);
        let opts = StepOptions {
            overflow: OverflowPolicy::Saturate,
            ..Default::default()
        };
        s.step(&p, 1e-3, &opts).unwrap();
        assert_eq!(s.n_spikes_last_step, 4);
        assert_eq!(s.saturated, 4);
    }

    #[test]
    fn spike_bookkeeping() {
        let p = ModelParams::preset("cv_test").unwrap();
        let mut s = init_particles(&p, &InitialCondition::STANDARD, 5000, 3).unwrap();
        let opts = StepOptions {
            overflow: OverflowPolicy::Saturate,
            ..Default::default()
        };
        for _ in 0..200 {
            let w_prev = s.w.clone();
            let v_prev = s.v.clone();
            s.step(&p, 1e-3, &opts).unwrap();
            let fired = s.spiked.iter().filter(|&&b| b).count();
            assert_eq!(fired, s.n_spikes_last_step);
            let kick = p.coupling * fired as f64 / s.len() as f64;
            for i in 0..s.len() {
                let (_, dw) = p.drift(v_prev[i], w_prev[i], 0.0);
                let w_star = w_prev[i] + 1e-3 * dw;
                if s.spiked[i] {
                    assert_eq!(s.v[i], p.v_reset + kick);
                    assert_eq!(s.w[i], w_star + p.w_jump);
                } else {
                    assert_eq!(s.w[i], w_star);
                }
            }
        }
    }

    #[test]
    fn run_samples_on_contract() {
        let p = quiet_params();
        let mut s = ParticleState::from_parts(vec![1.0, 3.0], vec![0.0, 0.0], 0).unwrap();
        assert_eq!(s.mean_v(), 2.0);
        let spec = RunSpec::new(0.001, 0.001, 0.001);
        let tr = run(&p, &mut s, &spec).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.times, vec![0.0, 0.001]);
        assert_eq!(tr.mean_v[0], 2.0);

        let mut s = ParticleState::from_parts(vec![-1.0, -3.0], vec![0.0, 0.0], 0).unwrap();
        let mut spec = RunSpec::new(0.01, 1.0, 0.1);
        spec.snapshot_times = vec![0.5];
        let tr = run(&p, &mut s, &spec).unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.snapshots.len(), 1);
        assert!((tr.snapshots[0].t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn runs_are_bit_identical() {
        let p = ModelParams::preset("hopf").unwrap();
        let spec = RunSpec {
            step: StepOptions {
                overflow: OverflowPolicy::Saturate,
                ..Default::default()
            },
            ..RunSpec::new(1e-3, 0.5, 0.05)
        };
        let mut a = init_particles(&p, &InitialCondition::STANDARD, 10_000, 9).unwrap();
        let mut b = init_particles(&p, &InitialCondition::STANDARD, 10_000, 9).unwrap();
        let ta = run(&p, &mut a, &spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let tb = pool.install(|| run(&p, &mut b, &spec)).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a.v, b.v);
    }

    #[test]
    fn trace_csv_header() {
        let mut tr = ParticleTrace::default();
        tr.push(TraceRow {
            t: 0.0,
            mean_v: 1.5,
            firing_rate: 0.0,
            n_spikes: 0,
        });
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,mean_v,firing_rate,n_spikes\n0,1.5,0,0\n");
    }
}
