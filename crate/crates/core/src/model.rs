//! Single-neuron model: nonlinearity, spike-rate function, drift field and
//! the named parameter presets.
//!
//! All functions here are pure and shared by the particle simulator and the
//! finite-volume solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Membrane nonlinearity `F(v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    /// `v (v - a)`
    Izhikevich { a: f64 },
    /// `e^v - v`
    #[serde(rename = "adex")]
    AdEx,
    /// `v^4 + 2 a v`
    Quartic { a: f64 },
    /// One of the named shapes in [`CustomNonlinearity`].
    Custom { name: CustomNonlinearity },
}

/// Registry of named nonlinearities that are not one of the three classical
/// families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CustomNonlinearity {
    /// `e^v - 5 v`
    #[serde(rename = "exp_minus_5v")]
    ExpMinus5v,
    /// `v^2`, the quadratic integrate-and-fire drift.
    #[serde(rename = "quadratic")]
    Quadratic,
}

impl CustomNonlinearity {
    pub const ALL: [CustomNonlinearity; 2] =
        [CustomNonlinearity::ExpMinus5v, CustomNonlinearity::Quadratic];

    pub fn name(self) -> &'static str {
        match self {
            CustomNonlinearity::ExpMinus5v => "exp_minus_5v",
            CustomNonlinearity::Quadratic => "quadratic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    #[inline]
    fn eval(self, v: f64) -> f64 {
        match self {
            CustomNonlinearity::ExpMinus5v => v.exp() - 5.0 * v,
            CustomNonlinearity::Quadratic => v * v,
        }
    }
}

impl Nonlinearity {
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            Nonlinearity::Izhikevich { a } => v * (v - a),
            Nonlinearity::AdEx => v.exp() - v,
            Nonlinearity::Quartic { a } => v.powi(4) + 2.0 * a * v,
            Nonlinearity::Custom { name } => name.eval(v),
        }
    }
}

/// Spike intensity `lambda(v)`.
///
/// `Exp` and `ShiftedExp` are the model rates. `Constant` and `Logistic` are
/// degenerate, bounded rates used by tests (Poisson-clock checks, the zero-rate
/// identity hooks and splitting-order studies that need a bounded rate).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateFunction {
    /// `e^v`
    Exp,
    /// `c + e^(v - v0)`
    ShiftedExp { c: f64, v0: f64 },
    /// `c` everywhere (`c = 0` switches spiking off).
    Constant { c: f64 },
    /// `max / (1 + e^-(v - v0))`
    Logistic { max: f64, v0: f64 },
}

impl RateFunction {
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            RateFunction::Exp => v.exp(),
            RateFunction::ShiftedExp { c, v0 } => c + (v - v0).exp(),
            RateFunction::Constant { c } => c,
            RateFunction::Logistic { max, v0 } => max / (1.0 + (v0 - v).exp()),
        }
    }

    /// Upper bound of the rate over all `v`, if finite.
    pub fn sup(&self) -> Option<f64> {
        match *self {
            RateFunction::Constant { c } => Some(c),
            RateFunction::Logistic { max, .. } => Some(max),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RateFunction::Exp => true,
            RateFunction::ShiftedExp { c, v0 } => c >= 0.0 && c.is_finite() && v0.is_finite(),
            RateFunction::Constant { c } => c >= 0.0 && c.is_finite(),
            RateFunction::Logistic { max, v0 } => max > 0.0 && max.is_finite() && v0.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("rate", format!("{self:?} is not a nonnegative rate")))
        }
    }
}

/// Full parameter set of the network model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub nonlinearity: Nonlinearity,
    pub rate: RateFunction,
    /// External input current.
    #[serde(rename = "I")]
    pub input: f64,
    /// Adaptation time constant (ms).
    pub tau_w: f64,
    /// Adaptation coupling.
    pub b: f64,
    /// Synaptic coupling strength.
    #[serde(rename = "J")]
    pub coupling: f64,
    /// Reset potential after a spike.
    pub v_reset: f64,
    /// Adaptation increment at a spike.
    pub w_jump: f64,
}

/// Names accepted by [`ModelParams::preset`].
pub const PRESET_NAMES: [&str; 4] = ["cv_test", "invariant_a", "invariant_b", "hopf"];

impl ModelParams {
    /// Looks up one of the built-in parameter sets.
    pub fn preset(name: &str) -> Result<Self> {
        let p = match name {
            "cv_test" => ModelParams {
                nonlinearity: Nonlinearity::Custom {
                    name: CustomNonlinearity::ExpMinus5v,
                },
                rate: RateFunction::ShiftedExp { c: 0.1, v0: 1.0 },
                input: 2.0,
                tau_w: 1.0,
                b: 1.0,
                coupling: 3.1,
                v_reset: 1.0,
                w_jump: 1.5,
            },
            // The isolated-neuron columns come in two constant-current variants.
            "invariant_a" => ModelParams {
                nonlinearity: Nonlinearity::AdEx,
                rate: RateFunction::Exp,
                input: -2.0,
                tau_w: 2.0,
                b: 1.0,
                coupling: 0.0,
                v_reset: 1.8,
                w_jump: 5.5,
            },
            "invariant_b" => ModelParams {
                nonlinearity: Nonlinearity::AdEx,
                rate: RateFunction::Exp,
                input: 1.0,
                tau_w: 2.0,
                b: 0.05,
                coupling: 0.0,
                v_reset: 1.8,
                w_jump: 1.5,
            },
            "hopf" => ModelParams {
                nonlinearity: Nonlinearity::AdEx,
                rate: RateFunction::Exp,
                input: 0.0,
                tau_w: 13.0,
                b: 0.011,
                coupling: 5.0,
                v_reset: -1.5,
                w_jump: 1.5,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected one of {PRESET_NAMES:?})"
                )))
            }
        };
        Ok(p)
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("I", self.input),
            ("tau_w", self.tau_w),
            ("b", self.b),
            ("J", self.coupling),
            ("v_reset", self.v_reset),
            ("w_jump", self.w_jump),
        ];
        for (name, x) in finite {
            if !x.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.tau_w <= 0.0 {
            return Err(Error::param("tau_w", "must be > 0"));
        }
        if self.w_jump <= 0.0 {
            return Err(Error::param(
                "w_jump",
                "must be > 0 (negative adaptation jumps are not supported)",
            ));
        }
        if self.coupling < 0.0 {
            return Err(Error::param("J", "inhibitory coupling (J < 0) is not supported"));
        }
        match self.nonlinearity {
            Nonlinearity::Izhikevich { a } | Nonlinearity::Quartic { a } if !a.is_finite() => {
                return Err(Error::param("nonlinearity.a", "must be finite"))
            }
            _ => {}
        }
        self.rate.validate()
    }

    #[inline]
    pub fn eval_f(&self, v: f64) -> f64 {
        self.nonlinearity.eval(v)
    }

    #[inline]
    pub fn eval_rate(&self, v: f64) -> f64 {
        self.rate.eval(v)
    }

    /// Deterministic vector field at `(v, w)` with population firing rate `psi`.
    ///
    /// The particle flow uses `psi = 0`: in the finite network the coupling acts
    /// through jumps only.
    #[inline]
    pub fn drift(&self, v: f64, w: f64, psi: f64) -> (f64, f64) {
        let dv = self.eval_f(v) - w + self.input + self.coupling * psi;
        let dw = (self.b * v - w) / self.tau_w;
        (dv, dw)
    }
}
