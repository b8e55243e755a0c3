use crate::error::{Error, Result};
use crate::fvm::{adaptive_advance, discretize_initial, AdaptiveOptions, Grid2D};
use crate::model::ModelParams;
use crate::particle::{init_particles, run, InitialCondition, RunSpec};
use std::ops::ControlFlow;

/// A sampled scalar signal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

impl Series {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(t.len(), v.len(), "series columns differ in length");
        Self { t, v }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Linear interpolation at `t` (clamped to the end values outside the range).
    pub fn at(&self, t: f64) -> f64 {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.v[0];
        }
        if t >= self.t[n - 1] {
            return self.v[n - 1];
        }
        let k = self.t.partition_point(|&x| x <= t);
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let (v0, v1) = (self.v[k - 1], self.v[k]);
        if t1 == t0 {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn resample(&self, times: &[f64]) -> Series {
        Series::new(times.to_vec(), times.iter().map(|&t| self.at(t)).collect())
    }
}

/// Two mean-potential traces on a common time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceComparison {
    pub t: Vec<f64>,
    pub particle: Vec<f64>,
    pub meanfield: Vec<f64>,
    pub max_gap: f64,
    pub mean_gap: f64,
}

/// Resamples `meanfield` onto the sample times of `particle` and measures the gap.
pub fn compare_traces(particle: &Series, meanfield: &Series) -> Result<TraceComparison> {
    if particle.is_empty() || meanfield.is_empty() {
        return Err(Error::param("trace", "cannot compare empty traces"));
    }
    let mf = meanfield.resample(&particle.t);
    let gaps: Vec<f64> = particle.v.iter().zip(&mf.v).map(|(a, b)| (a - b).abs()).collect();
    Ok(TraceComparison {
        t: particle.t.clone(),
        particle: particle.v.clone(),
        meanfield: mf.v,
        max_gap: gaps.iter().copied().fold(0.0, f64::max),
        mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
    })
}

/// Mean potential of an adaptive mean-field run, one point per accepted step
/// (plus the initial state).
pub fn meanfield_trace(
    p: &ModelParams,
    g: &Grid2D,
    ic: &InitialCondition,
    t_end: f64,
    opts: &AdaptiveOptions,
) -> Result<Series> {
    let d = discretize_initial(ic, g)?;
    let mut s = Series::new(vec![0.0], vec![crate::fvm::mean_v(g, &d)]);
    adaptive_advance(p, g, d, t_end, opts, |r, _| {
        if r.accepted {
            s.t.push(r.t);
            s.v.push(r.mean_v);
        }
        ControlFlow::Continue(())
    })?;
    Ok(s)
}

/// Runs the network and the mean-field solver from the same initial law and
/// compares their mean potentials.
#[allow(clippy::too_many_arguments)]
pub fn compare_particle_meanfield(
    p: &ModelParams,
    ic: &InitialCondition,
    n: usize,
    g: &Grid2D,
    spec: &RunSpec,
    opts: &AdaptiveOptions,
    seed: u64,
) -> Result<TraceComparison> {
    let mut state = init_particles(p, ic, n, seed)?;
    let trace = run(p, &mut state, spec)?;
    let mf = meanfield_trace(p, g, ic, spec.t_end, opts)?;
    compare_traces(&Series::new(trace.times, trace.mean_v), &mf)
}
