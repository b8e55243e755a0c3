//! Adaptive Dormand–Prince 5(4) integrator for the autonomous two-dimensional
//! neuron flow (the stage times are not needed).

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type State = [f64; 2];

#[inline]
fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Integrator with the step size carried over between calls.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    h: f64,
    /// Accepted and rejected step counters.
    pub accepted: u64,
    pub rejected: u64,
}

/// Outcome of [`Dopri5::advance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Advance {
    pub t: f64,
    pub y: State,
    /// Largest first component seen at step endpoints.
    pub max_v: f64,
    /// Whether the stop predicate fired before `t_end`.
    pub stopped: bool,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            h_min: 1e-14,
            h: 1e-3,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Integrates `y' = f(y)` from `(t, y)` to `t_end`, stopping early at the
    /// end of the first step whose endpoint satisfies `stop`.
    ///
    /// Returns `None` if the step size collapses below `h_min` or the state
    /// becomes non-finite.
    pub fn advance(
        &mut self,
        f: impl Fn(&State) -> State,
        mut t: f64,
        mut y: State,
        t_end: f64,
        stop: impl Fn(&State) -> bool,
    ) -> Option<Advance> {
        let mut max_v = y[0];
        let mut k1 = f(&y);
        while t < t_end {
            let mut h = self.h.min(t_end - t);
            let last = h >= t_end - t;
            let k2 = f(&axpy(&y, &[(A21, &k1)], h));
            let k3 = f(&axpy(&y, &[(A31, &k1), (A32, &k2)], h));
            let k4 = f(&axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
            let k5 = f(&axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
            let k6 = f(&axpy(
                &y,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                h,
            ));
            let y_new = axpy(
                &y,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
                h,
            );
            let k7 = f(&y_new);
            let mut err = 0.0;
            for i in 0..2 {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / 2.0).sqrt();

            if err.is_finite() && err <= 1.0 && y_new.iter().all(|x| x.is_finite()) {
                t = if last { t_end } else { t + h };
                y = y_new;
                k1 = k7;
                self.accepted += 1;
                max_v = max_v.max(y[0]);
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    self.h = h * fac;
                } else {
                    self.h = self.h.max(h * fac);
                }
                if stop(&y) {
                    return Some(Advance {
                        t,
                        y,
                        max_v,
                        stopped: true,
                    });
                }
            } else {
                self.rejected += 1;
                let fac = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h *= fac;
                self.h = h;
                if h < self.h_min {
                    return None;
                }
            }
        }
        Some(Advance {
            t,
            y,
            max_v,
            stopped: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_rotation_is_accurate() {
        // y' = (-y1, y0): rotation, exact solution (cos t, sin t)
        let mut ode = Dopri5::new(1e-10, 1e-12);
        let r = ode
            .advance(|y| [-y[1], y[0]], 0.0, [1.0, 0.0], 2.0, |_| false)
            .unwrap();
        assert_eq!(r.t, 2.0);
        assert!((r.y[0] - 2f64.cos()).abs() < 1e-8);
        assert!((r.y[1] - 2f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn stops_on_predicate() {
        // v' = 1: reaches 0.5 at t = 0.5
        let mut ode = Dopri5::new(1e-10, 1e-12);
        let r = ode
            .advance(|_| [1.0, 0.0], 0.0, [0.0, 0.0], 10.0, |y| y[0] >= 0.5)
            .unwrap();
        assert!(r.stopped);
        assert!(r.t >= 0.5 && r.t < 10.0);
        assert!((r.y[0] - r.t).abs() < 1e-12);
        assert_eq!(r.max_v, r.y[0]);
    }

    #[test]
    fn exponential_blowup_tracks_solution() {
        // v' = e^v from v = 0 blows up at t = 1; v(t) = -ln(1 - t)
        let mut ode = Dopri5::new(1e-10, 1e-12);
        let r = ode
            .advance(|y| [y[0].exp(), 0.0], 0.0, [0.0, 0.0], 0.99, |_| false)
            .unwrap();
        assert!((r.y[0] + (0.01f64).ln()).abs() < 1e-7);
    }
}
