use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::density::Density;
use super::grid::Grid2D;
use super::jump::{jump_apply_with, survival};
use super::stats::{mean_v, statistics};
use super::transport::{assemble_transport, compute_drift_field, transport_solve, SolverOptions};

/// Outcome of one [`strang_step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StrangOutcome {
    pub density: Density,
    /// Firing rate used to freeze the drift.
    pub psi: f64,
    pub sweeps: usize,
    pub clamped: usize,
    pub min_before_clamp: f64,
}

/// `B_{dt/2} A_dt(mu) B_{dt/2} mu`, the drift frozen from the input density.
pub fn strang_step(
    p: &ModelParams,
    g: &Grid2D,
    d: &Density,
    dt: f64,
    solver: &SolverOptions,
) -> Result<StrangOutcome> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be > 0"));
    }
    let field = compute_drift_field(p, g, d);
    let a = assemble_transport(g, &field, dt);
    let keep = survival(p, g, 0.5 * dt);
    let half = jump_apply_with(&keep, g, d);
    let moved = transport_solve(&a, &half, solver)?;
    let mut out = jump_apply_with(&keep, g, &moved.density);
    out.t = d.t + dt;
    Ok(StrangOutcome {
        density: out,
        psi: field.psi,
        sweeps: moved.stats.sweeps,
        clamped: moved.clamped,
        min_before_clamp: moved.min_before_clamp,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveOptions {
    pub dt_init: f64,
    /// Tolerance on the indicator `e`.
    pub eps: f64,
    /// Underflow threshold.
    pub dt_min: f64,
    pub dt_max: Option<f64>,
    /// Largest factor by which `dt` may grow in one update.
    pub growth_cap: f64,
    pub solver: SolverOptions,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            eps: 1e-3,
            dt_min: 1e-10,
            dt_max: None,
            growth_cap: 2.0,
            solver: SolverOptions::default(),
        }
    }
}

impl AdaptiveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_init > 0.0 && self.dt_init.is_finite()) {
            return Err(Error::param("dt_init", "must be > 0"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", "must be > 0"));
        }
        if !(self.dt_min > 0.0) {
            return Err(Error::param("dt_min", "must be > 0"));
        }
        if let Some(m) = self.dt_max {
            if !(m >= self.dt_min) {
                return Err(Error::param("dt_max", "must be >= dt_min"));
            }
        }
        if !(self.growth_cap > 1.0) {
            return Err(Error::param("growth_cap", "must be > 1"));
        }
        Ok(())
    }
}

/// Step-size update: `dt <- min(0.9 sqrt(eps / e), cap) dt`, with `e = 0`
/// read as `eps / 4`.
pub fn next_dt(dt: f64, e: f64, eps: f64, cap: f64) -> f64 {
    let e = if e == 0.0 { 0.25 * eps } else { e };
    (0.9 * (eps / e).sqrt()).min(cap) * dt
}

/// One attempted step of [`adaptive_advance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Time after the attempt (unchanged if rejected).
    pub t: f64,
    /// Step size tried.
    pub dt: f64,
    pub e: f64,
    pub accepted: bool,
    pub mass: f64,
    /// Smallest density value seen in the attempt, before clamping.
    pub min_mu: f64,
    pub psi: f64,
    pub mean_v: f64,
    pub clamped: usize,
}

pub const STEP_LOG_HEADER: &str = "t,dt,e,accepted,mass,min_mu,psi,mean_v";

pub fn write_step_log_row<W: std::io::Write>(out: &mut W, r: &StepRecord) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        r.t, r.dt, r.e, r.accepted as u8, r.mass, r.min_mu, r.psi, r.mean_v
    )
}

/// Result of [`adaptive_advance`].
#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub density: Density,
    pub log: Vec<StepRecord>,
    /// Step size the controller would try next.
    pub dt_next: f64,
    /// Whether the observer ended the run before `t_end`.
    pub stopped: bool,
}

impl AdaptiveRun {
    pub fn accepted(&self) -> usize {
        self.log.iter().filter(|r| r.accepted).count()
    }

    pub fn rejected(&self) -> usize {
        self.log.len() - self.accepted()
    }

    /// `(t, mean_v)` after every accepted step.
    pub fn mean_v_trace(&self) -> (Vec<f64>, Vec<f64>) {
        self.log
            .iter()
            .filter(|r| r.accepted)
            .map(|r| (r.t, r.mean_v))
            .unzip()
    }
}

/// Advances `d` to `t_end` with the step-doubling controller.
///
/// Each attempt computes `mu_half` (one Strang step of `dt/2`) and `mu_1` (a
/// second one from `mu_half`), measures
/// `e = dv dw sum |(mu_half - mu_1) v_i|`, accepts `mu_1` iff `e < eps`, and
/// updates `dt` with [`next_dt`] in both cases. The final step is shortened to
/// land on `t_end`. `observer` sees every attempt (with the current density)
/// and may stop the run.
pub fn adaptive_advance(
    p: &ModelParams,
    g: &Grid2D,
    d: Density,
    t_end: f64,
    opts: &AdaptiveOptions,
    mut observer: impl FnMut(&StepRecord, &Density) -> ControlFlow<()>,
) -> Result<AdaptiveRun> {
    opts.validate()?;
    let mut mu = d;
    let mut dt = opts.dt_init;
    if let Some(m) = opts.dt_max {
        dt = dt.min(m);
    }
    let mut log: Vec<StepRecord> = Vec::new();
    let v_nodes: Vec<f64> = (0..g.n_v).map(|i| g.v(i)).collect();
    let area = g.cell_area();

    while mu.t < t_end {
        if dt < opts.dt_min {
            let recent = log.iter().rev().take(10).map(|r| r.e).collect();
            return Err(Error::StepUnderflow {
                t: mu.t,
                dt,
                dt_min: opts.dt_min,
                recent,
            });
        }
        let last = mu.t + dt >= t_end;
        let h = if last { t_end - mu.t } else { dt };
        let first = strang_step(p, g, &mu, 0.5 * h, &opts.solver)?;
        let second = strang_step(p, g, &first.density, 0.5 * h, &opts.solver)?;

        let mut e = 0.0;
        for (a, b) in first
            .density
            .mu
            .chunks_exact(g.n_v)
            .zip(second.density.mu.chunks_exact(g.n_v))
        {
            for ((x, y), v) in a.iter().zip(b).zip(&v_nodes) {
                e += ((x - y) * v).abs();
            }
        }
        e *= area;
        let accepted = e < opts.eps;
        let min_mu = first.min_before_clamp.min(second.min_before_clamp);
        let clamped = first.clamped + second.clamped;
        if accepted {
            mu = second.density;
            if last {
                mu.t = t_end;
            }
        }
        let s = statistics(p, g, &mu);
        let record = StepRecord {
            t: mu.t,
            dt: h,
            e,
            accepted,
            mass: s.mass,
            min_mu: min_mu.min(mu.min()),
            psi: s.firing_rate,
            mean_v: s.mean_v,
            clamped,
        };
        log.push(record);
        dt = next_dt(h, e, opts.eps, opts.growth_cap);
        if let Some(m) = opts.dt_max {
            dt = dt.min(m);
        }
        if observer(&record, &mu).is_break() {
            return Ok(AdaptiveRun {
                density: mu,
                log,
                dt_next: dt,
                stopped: true,
            });
        }
    }
    Ok(AdaptiveRun {
        density: mu,
        log,
        dt_next: dt,
        stopped: false,
    })
}

/// Fixed-step Strang integration to `t_end` (last step shortened); returns
/// the density and the mean potential after every step.
pub fn fixed_step_advance(
    p: &ModelParams,
    g: &Grid2D,
    d: &Density,
    dt: f64,
    t_end: f64,
    solver: &SolverOptions,
) -> Result<(Density, Vec<(f64, f64)>)> {
    let mut mu = d.clone();
    let mut trace = vec![(mu.t, mean_v(g, &mu))];
    let t0 = mu.t;
    let n = ((t_end - t0) / dt).round().max(1.0) as usize;
    for k in 0..n {
        let h = if k + 1 == n { t_end - mu.t } else { dt };
        mu = strang_step(p, g, &mu, h, solver)?.density;
        trace.push((mu.t, mean_v(g, &mu)));
    }
    mu.t = t_end;
    Ok((mu, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvm::density::discretize_initial;
    use crate::fvm::grid::{build_grid, GridSpec};
    use crate::fvm::jump::jump_apply;
    use crate::fvm::transport::DriftField;
    use crate::model::RateFunction;
    use crate::particle::InitialCondition;

    fn setup(name: &str, n: usize) -> (ModelParams, Grid2D, Density) {
        let p = ModelParams::preset(name).unwrap();
        let g = build_grid(&p, &GridSpec::for_preset(name, n, n).unwrap()).unwrap().0;
        let d = discretize_initial(&InitialCondition::STANDARD, &g).unwrap();
        (p, g, d)
    }

    #[test]
    fn controller_examples() {
        // e = eps: rejected (strict) and dt shrinks by 0.9
        assert!((next_dt(1.0, 1e-3, 1e-3, 2.0) - 0.9).abs() < 1e-15);
        // e = eps / 100: cap binds
        assert_eq!(next_dt(1.0, 1e-5, 1e-3, 2.0), 2.0);
        // e = 0 behaves as eps / 4
        assert!((next_dt(1.0, 0.0, 1e-3, 2.0) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_reduces_to_transport() {
        let (mut p, g, d) = setup("hopf", 30);
        p.rate = RateFunction::Constant { c: 0.0 };
        let dt = 0.05;
        let s = strang_step(&p, &g, &d, dt, &SolverOptions::default()).unwrap();
        let f = compute_drift_field(&p, &g, &d);
        let a = assemble_transport(&g, &f, dt);
        let t = transport_solve(&a, &d, &SolverOptions::default()).unwrap();
        assert_eq!(s.density.mu, t.density.mu);
    }

    #[test]
    fn zero_drift_reduces_to_jump() {
        // zero drift: transport is the identity, so B_{dt/2} B_{dt/2}
        let (p, g, d) = setup("hopf", 30);
        let f = DriftField {
            v: vec![0.0; g.len()],
            w: vec![0.0; g.len()],
            psi: 0.0,
        };
        let a = assemble_transport(&g, &f, 0.2);
        let half = jump_apply(&p, &g, &d, 0.1);
        let moved = transport_solve(&a, &half, &SolverOptions::default()).unwrap();
        let two_halves = jump_apply(&p, &g, &moved.density, 0.1);
        let whole = jump_apply(&p, &g, &d, 0.2);
        for j in 0..g.n_w {
            for i in (0..g.n_v).filter(|&i| i != g.i_reset) {
                let (x, y) = (two_halves.at(&g, i, j), whole.at(&g, i, j));
                assert!((x - y).abs() <= 1e-14 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn strang_conserves_mass_and_sign() {
        let (p, g, d) = setup("cv_test", 40);
        let mut mu = d;
        for _ in 0..20 {
            let out = strang_step(&p, &g, &mu, 0.02, &SolverOptions::default()).unwrap();
            let (m0, m1) = (mu.mass(&g), out.density.mass(&g));
            assert!((m1 - m0).abs() <= 1e-10 * m0);
            assert!(out.density.min() >= 0.0);
            mu = out.density;
        }
        assert!((mu.t - 0.4).abs() < 1e-12);
    }

    #[test]
    fn adaptive_reaches_end_and_logs() {
        let (p, g, d) = setup("cv_test", 30);
        let opts = AdaptiveOptions {
            eps: 1e-2,
            ..Default::default()
        };
        let mut seen = 0;
        let run = adaptive_advance(&p, &g, d, 1.0, &opts, |_, _| {
            seen += 1;
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(run.density.t, 1.0);
        assert_eq!(seen, run.log.len());
        assert!(run.accepted() > 0);
        assert!(run.log.iter().filter(|r| r.accepted).all(|r| r.e < 1e-2));
        let times: Vec<f64> = run.log.iter().filter(|r| r.accepted).map(|r| r.t).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert!(run.log.iter().all(|r| (r.mass - 1.0).abs() < 1e-9));
    }

    #[test]
    fn observer_can_stop() {
        let (p, g, d) = setup("cv_test", 20);
        let run = adaptive_advance(&p, &g, d, 10.0, &AdaptiveOptions::default(), |r, _| {
            if r.accepted {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert!(run.stopped);
        assert_eq!(run.accepted(), 1);
    }

    #[test]
    fn underflow_is_reported() {
        let (p, g, d) = setup("cv_test", 20);
        let opts = AdaptiveOptions {
            eps: 1e-30,
            dt_min: 1e-6,
            ..Default::default()
        };
        let err = adaptive_advance(&p, &g, d, 1.0, &opts, |_, _| ControlFlow::Continue(())).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }));
    }
}
