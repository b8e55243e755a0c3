use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::{meanfield_trace, Series};
use crate::error::{Error, Result};
use crate::fvm::{AdaptiveOptions, Grid2D};
use crate::model::ModelParams;
use crate::particle::InitialCondition;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub stepping: AdaptiveOptions,
    pub t_end: f64,
    /// Leading fraction of each run ignored by the classifier.
    pub transient_fraction: f64,
    /// Peak-to-trough amplitude above which a run counts as oscillating.
    pub amplitude_floor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            // the indicator weights by |v| and bursts reach v ~ -40
            stepping: AdaptiveOptions {
                eps: 0.3,
                dt_max: Some(0.1),
                ..AdaptiveOptions::default()
            },
            t_end: 400.0,
            transient_fraction: 0.5,
            amplitude_floor: 1e-3,
        }
    }
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        self.stepping.validate()?;
        if !(self.t_end > 0.0) {
            return Err(Error::param("T", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(Error::param("transient_fraction", "must be in [0, 1)"));
        }
        if !(self.amplitude_floor > 0.0) {
            return Err(Error::param("amplitude_floor", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSummary {
    /// `max - min` over the retained window.
    pub amplitude: f64,
    pub oscillatory: bool,
    /// Autocorrelation period, for oscillating runs.
    pub period: Option<f64>,
    /// Lengths of the complete cycles in the retained window (upward
    /// crossings of the window mean).
    pub cycle_periods: Vec<f64>,
}

impl TraceSummary {
    /// `(max - min) / mean` of the cycle lengths, if there are at least two.
    pub fn period_variation(&self) -> Option<f64> {
        period_variation(&self.cycle_periods)
    }
}

pub fn period_variation(periods: &[f64]) -> Option<f64> {
    if periods.len() < 2 {
        return None;
    }
    let mean = periods.iter().sum::<f64>() / periods.len() as f64;
    let max = periods.iter().copied().fold(f64::MIN, f64::max);
    let min = periods.iter().copied().fold(f64::MAX, f64::min);
    Some((max - min) / mean)
}

/// Samples used for the autocorrelation.
const AUTOCORR_POINTS: usize = 4096;

/// Period of the strongest autocorrelation peak after the first zero crossing.
pub fn autocorrelation_period(s: &Series) -> Option<f64> {
    let (t0, t1) = (*s.t.first()?, *s.t.last()?);
    if t1 <= t0 {
        return None;
    }
    let h = (t1 - t0) / (AUTOCORR_POINTS - 1) as f64;
    let x: Vec<f64> = (0..AUTOCORR_POINTS).map(|k| s.at(t0 + k as f64 * h)).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var: f64 = x.iter().map(|v| v * v).sum();
    if var == 0.0 {
        return None;
    }
    let max_lag = AUTOCORR_POINTS / 2;
    let r: Vec<f64> = (0..=max_lag)
        .map(|k| x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / var)
        .collect();
    let first_negative = r.iter().position(|&c| c < 0.0)?;
    let (mut best, mut best_r) = (None, f64::MIN);
    for k in first_negative.max(1)..max_lag {
        if r[k] > r[k - 1] && r[k] >= r[k + 1] && r[k] > best_r {
            best = Some(k);
            best_r = r[k];
        }
    }
    let k = best?;
    // refine the peak with a parabola through the three samples
    let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Some((k as f64 + shift) * h)
}

/// Lengths of the complete cycles: times between successive upward crossings of
/// the mean (linearly interpolated).
pub fn cycle_periods(s: &Series) -> Vec<f64> {
    if s.len() < 3 {
        return Vec::new();
    }
    let mean = s.v.iter().sum::<f64>() / s.len() as f64;
    let mut ups = Vec::new();
    for k in 1..s.len() {
        let (a, b) = (s.v[k - 1] - mean, s.v[k] - mean);
        if a < 0.0 && b >= 0.0 {
            let f = -a / (b - a);
            ups.push(s.t[k - 1] + f * (s.t[k] - s.t[k - 1]));
        }
    }
    ups.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Drops the transient, then measures amplitude and period.
pub fn summarize_trace(s: &Series, transient_fraction: f64, amplitude_floor: f64) -> TraceSummary {
    let (t0, t1) = (s.t[0], s.t[s.len() - 1]);
    let cut = t0 + transient_fraction * (t1 - t0);
    let start = s.t.partition_point(|&t| t < cut);
    let window = Series::new(s.t[start..].to_vec(), s.v[start..].to_vec());
    let max = window.v.iter().copied().fold(f64::MIN, f64::max);
    let min = window.v.iter().copied().fold(f64::MAX, f64::min);
    let amplitude = if window.is_empty() { 0.0 } else { max - min };
    let oscillatory = amplitude > amplitude_floor;
    let (period, cycles) = if oscillatory {
        (autocorrelation_period(&window), cycle_periods(&window))
    } else {
        (None, Vec::new())
    };
    TraceSummary {
        amplitude,
        oscillatory,
        period,
        cycle_periods: cycles,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub j_values: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub periods: Vec<Option<f64>>,
    pub summaries: Vec<TraceSummary>,
    pub traces: Vec<Series>,
}

impl SweepResult {
    pub fn oscillatory(&self) -> Vec<bool> {
        self.summaries.iter().map(|s| s.oscillatory).collect()
    }
}

/// Mean-field run at coupling `j`, summarised.
pub fn run_at_coupling(
    p: &ModelParams,
    g: &Grid2D,
    ic: &InitialCondition,
    j: f64,
    opts: &SweepOptions,
) -> Result<(Series, TraceSummary)> {
    let pj = p.with_coupling(j);
    pj.validate()?;
    let s = meanfield_trace(&pj, g, ic, opts.t_end, &opts.stepping)?;
    let summary = summarize_trace(&s, opts.transient_fraction, opts.amplitude_floor);
    log::info!("J = {j}: amplitude {:.3e}", summary.amplitude);
    Ok((s, summary))
}

/// Runs the mean-field equation for every coupling in `j_values` (concurrently)
/// and classifies each run.
pub fn hopf_sweep(
    p: &ModelParams,
    g: &Grid2D,
    ic: &InitialCondition,
    j_values: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    opts.validate()?;
    let mut order: Vec<usize> = (0..j_values.len()).collect();
    order.sort_by(|&a, &b| j_values[a].total_cmp(&j_values[b]));
    let runs: Vec<(Series, TraceSummary)> = order
        .par_iter()
        .map(|&k| run_at_coupling(p, g, ic, j_values[k], opts))
        .collect::<Result<Vec<_>>>()?;
    let j_sorted: Vec<f64> = order.iter().map(|&k| j_values[k]).collect();
    let (traces, summaries): (Vec<Series>, Vec<TraceSummary>) = runs.into_iter().unzip();
    Ok(SweepResult {
        amplitudes: summaries.iter().map(|s| s.amplitude).collect(),
        periods: summaries.iter().map(|s| s.period).collect(),
        j_values: j_sorted,
        summaries,
        traces,
    })
}

/// Number of classifier changes along a sweep sorted by `J`.
pub fn sign_changes(oscillatory: &[bool]) -> usize {
    oscillatory.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bisection {
    /// Largest coupling seen classified as relaxing.
    pub lo: f64,
    /// Smallest coupling seen classified as oscillating.
    pub hi: f64,
    /// `(J, amplitude, oscillatory)` for each run made by the bisection.
    pub evaluations: Vec<(f64, f64, bool)>,
}

impl Bisection {
    pub fn estimate(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bisects the classifier between `lo` (relaxing) and `hi` (oscillating)
/// until the bracket is narrower than `tol`.
pub fn bisect_threshold(
    p: &ModelParams,
    g: &Grid2D,
    ic: &InitialCondition,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    opts: &SweepOptions,
) -> Result<Bisection> {
    if !(lo < hi && tol > 0.0) {
        return Err(Error::param("bisection", "need lo < hi and tol > 0"));
    }
    let mut evaluations = Vec::new();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let (_, s) = run_at_coupling(p, g, ic, mid, opts)?;
        evaluations.push((mid, s.amplitude, s.oscillatory));
        if s.oscillatory {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Bisection { lo, hi, evaluations })
}
