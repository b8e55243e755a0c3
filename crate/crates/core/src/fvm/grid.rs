use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Box and resolution of a mean-field grid, as written in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub n_v: usize,
    pub n_w: usize,
}

impl GridSpec {
    /// Default box for a named preset at the requested resolution.
    ///
    /// The box is nudged so that `v_reset` falls on a node and `w_jump` is a
    /// whole number of cells.
    pub fn for_preset(name: &str, n_v: usize, n_w: usize) -> Result<Self> {
        let p = ModelParams::preset(name)?;
        let (v_lo, v_hi, w_lo, w_hi) = match name {
            "cv_test" => (-5.0, 8.0, -2.0, 15.5),
            "invariant_a" => (-14.0, 6.0, -5.0, 36.0),
            "invariant_b" => (-12.0, 7.0, -2.0, 22.0),
            // bursts at J ~ 7 carry w to ~52 and v down to ~-46
            "hopf" => (-65.0, 6.0, -1.0, 60.0),
            _ => unreachable!("preset() rejects unknown names"),
        };
        Self::aligned(&p, v_lo, v_hi, w_lo, w_hi, n_v, n_w)
    }

    /// Grid close to the requested box with `v_reset` on a node and `w_jump`
    /// an integer multiple of `dw`.
    pub fn aligned(
        p: &ModelParams,
        v_lo: f64,
        v_hi: f64,
        w_lo: f64,
        w_hi: f64,
        n_v: usize,
        n_w: usize,
    ) -> Result<Self> {
        if n_v < 2 || n_w < 2 {
            return Err(Error::param("n_v/n_w", "need at least two cells per axis"));
        }
        if !(v_lo < p.v_reset && p.v_reset < v_hi) {
            return Err(Error::param("v_reset", "must lie inside the v range"));
        }
        let dv = (v_hi - v_lo) / (n_v - 1) as f64;
        let i_reset = ((p.v_reset - v_lo) / dv).round();
        let v_min = p.v_reset - i_reset * dv;

        let per_jump = ((n_w - 1) as f64 * p.w_jump / (w_hi - w_lo)).round().max(1.0);
        let dw = p.w_jump / per_jump;
        Ok(Self {
            v_min,
            v_max: v_min + (n_v - 1) as f64 * dv,
            w_min: w_lo,
            w_max: w_lo + (n_w - 1) as f64 * dw,
            n_v,
            n_w,
        })
    }
}

/// Regular `n_v x n_w` grid of cells centred on the nodes
/// `v_i = v_min + i dv`, `w_j = w_min + j dw` (indices from 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub n_v: usize,
    pub n_w: usize,
    pub dv: f64,
    pub dw: f64,
    /// Column of the reset potential.
    pub i_reset: usize,
    /// Number of cells a spike moves mass up in `w`.
    pub j_shift: usize,
}

/// One failed boundary-direction condition of [`build_grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryWarning {
    pub condition: &'static str,
    pub v: f64,
    pub w: f64,
    pub value: f64,
}

impl Grid2D {
    #[inline]
    pub fn len(&self) -> usize {
        self.n_v * self.n_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn v(&self, i: usize) -> f64 {
        self.v_min + i as f64 * self.dv
    }

    #[inline]
    pub fn w(&self, j: usize) -> f64 {
        self.w_min + j as f64 * self.dw
    }

    /// Flat index of cell `(i, j)`; `v` varies fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n_v + i
    }

    pub fn cell_area(&self) -> f64 {
        self.dv * self.dw
    }

    /// Cell containing `(v, w)`, if inside the box.
    pub fn locate(&self, v: f64, w: f64) -> Option<(usize, usize)> {
        let fi = ((v - self.v_min) / self.dv + 0.5).floor();
        let fj = ((w - self.w_min) / self.dw + 0.5).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.n_v as f64 || fj >= self.n_w as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// Row of the cell containing `w`, clamped to the grid.
    pub fn row_of(&self, w: f64) -> usize {
        let fj = ((w - self.w_min) / self.dw + 0.5).floor();
        fj.clamp(0.0, (self.n_w - 1) as f64) as usize
    }
}

/// Builds the grid and checks that the drift (with `psi = 0`) points into the
/// box where the scheme needs it to. Failed checks are returned as warnings.
pub fn build_grid(p: &ModelParams, spec: &GridSpec) -> Result<(Grid2D, Vec<BoundaryWarning>)> {
    p.validate()?;
    let GridSpec {
        v_min,
        v_max,
        w_min,
        w_max,
        n_v,
        n_w,
    } = *spec;
    if n_v < 2 {
        return Err(Error::param("n_v", "must be at least 2"));
    }
    if n_w < 2 {
        return Err(Error::param("n_w", "must be at least 2"));
    }
    if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
        return Err(Error::param("v_min/v_max", "need finite v_min < v_max"));
    }
    if !(w_min.is_finite() && w_max.is_finite() && w_min < w_max) {
        return Err(Error::param("w_min/w_max", "need finite w_min < w_max"));
    }
    if !(v_min < p.v_reset && p.v_reset < v_max) {
        return Err(Error::param(
            "v_reset",
            format!("{} is outside ({v_min}, {v_max})", p.v_reset),
        ));
    }
    if p.w_jump >= w_max - w_min {
        return Err(Error::param(
            "w_jump",
            format!("{} is not smaller than the w range {}", p.w_jump, w_max - w_min),
        ));
    }
    let dv = (v_max - v_min) / (n_v - 1) as f64;
    let dw = (w_max - w_min) / (n_w - 1) as f64;
    let cells = p.w_jump / dw;
    let j_shift = cells.round();
    if (cells - j_shift).abs() > 1e-6 * cells.max(1.0) {
        return Err(Error::param(
            "w_max",
            format!(
                "w_jump / dw = {cells} is not an integer; choose w_max so that dw divides {}",
                p.w_jump
            ),
        ));
    }
    let j_shift = j_shift as usize;
    if j_shift < 1 || j_shift >= n_w {
        return Err(Error::param("w_jump", "must span between 1 and n_w - 1 cells"));
    }
    // tolerance absorbs rounding when v_reset sits exactly on a node
    let i_reset = ((p.v_reset - v_min) / dv + 1e-9).floor() as usize;

    let g = Grid2D {
        v_min,
        v_max,
        w_min,
        w_max,
        n_v,
        n_w,
        dv,
        dw,
        i_reset,
        j_shift,
    };
    let warnings = boundary_warnings(p, &g);
    for w in &warnings {
        log::warn!(
            "grid boundary check failed: {} at ({}, {}) (value {})",
            w.condition,
            w.v,
            w.w,
            w.value
        );
    }
    Ok((g, warnings))
}

fn boundary_warnings(p: &ModelParams, g: &Grid2D) -> Vec<BoundaryWarning> {
    let v_mid = 0.5 * (g.v_min + g.v_max);
    let w_mid = 0.5 * (g.w_min + g.w_max);
    let mut out = Vec::new();
    let mut check = |condition, v, w, value: f64, ok: bool| {
        if !ok {
            out.push(BoundaryWarning {
                condition,
                v,
                w,
                value,
            });
        }
    };
    let (dv, _) = p.drift(g.v_min, w_mid, 0.0);
    check("v drift enters at v_min", g.v_min, w_mid, dv, dv > 0.0);
    let (dv, _) = p.drift(g.v_max, w_mid, 0.0);
    check("v drift is outward at v_max (explosive side)", g.v_max, w_mid, dv, dv > 0.0);
    let (_, dw) = p.drift(v_mid, g.w_min, 0.0);
    check("w drift enters at w_min", v_mid, g.w_min, dw, dw > 0.0);
    let (_, dw) = p.drift(v_mid, g.w_max, 0.0);
    check("w drift enters at w_max", v_mid, g.w_max, dw, dw < 0.0);
    let (dv, dw) = p.drift(p.v_reset, g.w_max, 0.0);
    check("(v_reset, w_max) above the v-nullcline", p.v_reset, g.w_max, dv, dv < 0.0);
    check("(v_reset, w_max) above the w-nullcline", p.v_reset, g.w_max, dw, dw < 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v_min: f64, v_max: f64, w_min: f64, w_max: f64, n_v: usize, n_w: usize) -> GridSpec {
        GridSpec {
            v_min,
            v_max,
            w_min,
            w_max,
            n_v,
            n_w,
        }
    }

    #[test]
    fn reset_index_and_shift() {
        let p = ModelParams::preset("hopf").unwrap();
        // dv = 0.1, dw = 0.05
        let (g, _) = build_grid(&p, &spec(-5.0, 5.0, 0.0, 10.0, 101, 201)).unwrap();
        assert!((g.dv - 0.1).abs() < 1e-15);
        assert_eq!(g.i_reset, 35);
        assert_eq!(g.j_shift, 30);
        assert!((g.v(g.i_reset) - p.v_reset).abs() < 1e-12);
    }

    #[test]
    fn node_convention() {
        let p = ModelParams::preset("hopf").unwrap();
        let (g, _) = build_grid(&p, &spec(-4.0, 3.0, -1.0, 13.9, 71, 150)).unwrap();
        assert!((g.v(g.n_v - 1) - g.v_max).abs() < 1e-12);
        assert!((g.w(g.n_w - 1) - g.w_max).abs() < 1e-12);
        assert_eq!(g.locate(g.v(5), g.w(7)), Some((5, 7)));
        assert_eq!(g.locate(g.v_min - g.dv, 0.0), None);
    }

    #[test]
    fn rejects_bad_grids() {
        let p = ModelParams::preset("hopf").unwrap();
        assert!(build_grid(&p, &spec(-4.0, 3.0, 0.0, 10.0, 1, 201)).is_err());
        assert!(build_grid(&p, &spec(-1.0, 3.0, 0.0, 10.0, 50, 201)).is_err());
        assert!(build_grid(&p, &spec(-4.0, 3.0, 0.0, 1.0, 50, 201)).is_err());
        // dw = 0.07 does not divide 1.5
        assert!(build_grid(&p, &spec(-4.0, 3.0, 0.0, 7.0, 50, 101)).is_err());
    }

    #[test]
    fn preset_boxes_are_valid() {
        for name in crate::model::PRESET_NAMES {
            for n in [20, 200, 300, 400] {
                let s = GridSpec::for_preset(name, n, n).unwrap();
                let p = ModelParams::preset(name).unwrap();
                let (g, _) = build_grid(&p, &s).unwrap();
                assert!((g.v(g.i_reset) - p.v_reset).abs() < 1e-9, "{name} {n}");
                assert!((g.j_shift as f64 * g.dw - p.w_jump).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hopf_box_passes_boundary_checks() {
        let p = ModelParams::preset("hopf").unwrap();
        let (_, warnings) = build_grid(&p, &GridSpec::for_preset("hopf", 200, 200).unwrap()).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
    }

    #[test]
    fn boundary_violation_is_reported() {
        let p = ModelParams::preset("hopf").unwrap();
        // w_min far above the w-nullcline: w drift is downward there
        let (_, warnings) = build_grid(&p, &spec(-4.0, 3.0, 5.0, 14.9, 71, 100)).unwrap();
        assert!(warnings.iter().any(|w| w.condition.contains("w_min")));
    }
}
