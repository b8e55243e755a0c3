//! Exact simulation of one isolated neuron by thinning.
//!
//! Between jumps the flow is integrated with [`Dopri5`]. Time is cut into
//! windows: a trial integration over the window gives the largest potential
//! reached, and since `lambda` is nondecreasing, `lambda` at that potential
//! (plus a small margin) bounds the intensity on the window. Candidate times are
//! drawn from a Poisson clock at the bound and accepted with probability
//! `lambda(v(t)) / bound`.
//!
//! A window ends after `lookahead` time units or once the potential has risen
//! by `window_rise` (a quarter of that above `v_explode`), whichever comes
//! first, so near a finite-time blow-up windows shrink and the acceptance ratio
//! stays bounded away from zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::ode::Dopri5;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThinningOptions {
    /// Window length; `None` means `0.1 * tau_w`.
    pub lookahead: Option<f64>,
    /// Rise of `v` after which a window is closed.
    pub window_rise: f64,
    /// Potential above which windows are four times denser in `v`.
    pub v_explode: f64,
    /// Potential at which the rate can no longer be bounded in floating point.
    pub v_limit: f64,
    /// Margin added to the trial maximum before evaluating the bound.
    pub bound_margin: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ThinningOptions {
    fn default() -> Self {
        Self {
            lookahead: None,
            window_rise: 1.0,
            v_explode: 20.0,
            v_limit: 700.0,
            bound_margin: 0.01,
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

/// One jump of the embedded chain: its time and the adaptation variable just
/// after the jump (the potential is `v_reset`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub w: f64,
}

/// Simulates `n_jumps` jumps of an isolated neuron started at `(v0, w0)`.
///
/// The coupling plays no role here (a single neuron receives no input from the
/// population).
pub fn simulate_isolated_exact(
    p: &ModelParams,
    v0: f64,
    w0: f64,
    n_jumps: usize,
    seed: u64,
    opts: &ThinningOptions,
) -> Result<Vec<JumpRecord>> {
    p.validate()?;
    let lookahead = opts.lookahead.unwrap_or(0.1 * p.tau_w);
    if !(lookahead > 0.0) {
        return Err(Error::param("lookahead", "must be > 0"));
    }
    if p.rate.sup() == Some(0.0) {
        return Err(Error::param("rate", "a zero rate never jumps"));
    }
    let flow = |y: &[f64; 2]| {
        let (dv, dw) = p.drift(y[0], y[1], 0.0);
        [dv, dw]
    };
    let bound_failure = |t: f64, v: f64, reason: &str| Error::RateBoundFailure {
        t,
        v,
        reason: reason.to_string(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ode = Dopri5::new(opts.rtol, opts.atol);
    let mut t = 0.0;
    let mut y = [v0, w0];
    let mut out = Vec::with_capacity(n_jumps);

    while out.len() < n_jumps {
        if y[0] >= opts.v_limit {
            return Err(bound_failure(t, y[0], "potential beyond representable rates"));
        }
        let (t_end, bound) = match p.rate.sup() {
            Some(sup) => (t + lookahead, sup),
            None => {
                let rise = if y[0] < opts.v_explode {
                    opts.window_rise
                } else {
                    0.25 * opts.window_rise
                };
                let cap = y[0] + rise;
                let trial = ode
                    .advance(flow, t, y, t + lookahead, |s| s[0] >= cap)
                    .ok_or_else(|| bound_failure(t, y[0], "trial integration failed"))?;
                (trial.t, p.eval_rate(trial.max_v + opts.bound_margin))
            }
        };

        loop {
            let gap: f64 = Exp1.sample(&mut rng);
            let tau = t + gap / bound;
            if tau >= t_end {
                let adv = ode
                    .advance(flow, t, y, t_end, |_| false)
                    .ok_or_else(|| bound_failure(t, y[0], "integration failed"))?;
                t = t_end;
                y = adv.y;
                break;
            }
            let adv = ode
                .advance(flow, t, y, tau, |_| false)
                .ok_or_else(|| bound_failure(t, y[0], "integration failed"))?;
            t = tau;
            y = adv.y;
            let rate = p.eval_rate(y[0]);
            if rate > bound {
                return Err(bound_failure(t, y[0], "rate exceeded the window bound"));
            }
            let u: f64 = rng.random();
            if u * bound < rate {
                y = [p.v_reset, y[1] + p.w_jump];
                out.push(JumpRecord { time: t, w: y[1] });
                break;
            }
        }
    }
    Ok(out)
}

/// Intervals between consecutive jumps (the first interval, from the initial
/// state, is dropped).
pub fn inter_jump_intervals(jumps: &[JumpRecord]) -> Vec<f64> {
    jumps.windows(2).map(|w| w[1].time - w[0].time).collect()
}
