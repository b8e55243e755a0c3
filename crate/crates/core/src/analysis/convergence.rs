use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::{meanfield_trace, Series};
use crate::error::{Error, Result};
use crate::fvm::{AdaptiveOptions, Grid2D};
use crate::model::ModelParams;
use crate::particle::{derive_seed, init_particles, run, InitialCondition, RunSpec};

/// What the finite networks are compared against.
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    /// The largest `N` of the list (its own error is zero and left out of the fit).
    LargestN,
    /// The mean-field solution on the given grid.
    MeanField { grid: Grid2D, opts: AdaptiveOptions },
}

/// How a trace deviation is reduced to one number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Time average of `|V_N - V_ref|`.
    #[default]
    MeanAbs,
    /// Time average of `(V_N - V_ref)^2`.
    MeanSquare,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceResult {
    pub n_values: Vec<usize>,
    /// Errors under the requested metric.
    pub errors: Vec<f64>,
    pub mean_abs: Vec<f64>,
    pub mean_square: Vec<f64>,
    /// Fitted slope of `log(error)` against `log(N)` (zero errors left out).
    pub slope: f64,
    /// Same fit for the other metric, when it has enough points.
    pub slope_abs: Option<f64>,
    pub slope_square: Option<f64>,
    pub reference: Series,
    /// Mean potential of every run, in the order of `n_values`.
    pub traces: Vec<Series>,
}

/// Least-squares slope and intercept of `log y` against `log x` over the
/// points with `y > 0`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 positive points, have {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Runs one network per `N` (seeds derived from `seed` and `N`) and measures
/// how far each mean potential stays from the reference.
pub fn convergence_experiment(
    p: &ModelParams,
    ic: &InitialCondition,
    n_values: &[usize],
    spec: &RunSpec,
    reference: &Reference,
    metric: ErrorMetric,
    seed: u64,
) -> Result<ConvergenceResult> {
    if n_values.is_empty() {
        return Err(Error::param("N_values", "empty"));
    }
    if n_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("N_values", "must be strictly increasing"));
    }
    // largest first: the big runs dominate the wall time
    let traces: Vec<Series> = n_values
        .par_iter()
        .rev()
        .map(|&n| {
            let mut state = init_particles(p, ic, n, derive_seed(seed, n as u64))?;
            let tr = run(p, &mut state, spec)?;
            log::info!("convergence run N = {n} done");
            Ok(Series::new(tr.times, tr.mean_v))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .rev()
        .collect();

    let reference_series = match reference {
        Reference::LargestN => traces.last().expect("non-empty").clone(),
        Reference::MeanField { grid, opts } => meanfield_trace(p, grid, ic, spec.t_end, opts)?,
    };

    let mut mean_abs = Vec::new();
    let mut mean_square = Vec::new();
    for tr in &traces {
        let r = reference_series.resample(&tr.t);
        let n = tr.len() as f64;
        mean_abs.push(tr.v.iter().zip(&r.v).map(|(a, b)| (a - b).abs()).sum::<f64>() / n);
        mean_square.push(tr.v.iter().zip(&r.v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n);
    }
    let xs: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
    let slope_abs = fit_loglog(&xs, &mean_abs).map(|f| f.0);
    let slope_square = fit_loglog(&xs, &mean_square).map(|f| f.0);
    let (errors, slope) = match metric {
        ErrorMetric::MeanAbs => (mean_abs.clone(), slope_abs.as_ref().map_err(clone_err)?),
        ErrorMetric::MeanSquare => (mean_square.clone(), slope_square.as_ref().map_err(clone_err)?),
    };
    Ok(ConvergenceResult {
        n_values: n_values.to_vec(),
        errors,
        mean_abs,
        mean_square,
        slope: *slope,
        slope_abs: slope_abs.ok(),
        slope_square: slope_square.ok(),
        reference: reference_series,
        traces,
    })
}

fn clone_err(e: &Error) -> Error {
    Error::DegenerateFit(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::OverflowPolicy;

    #[test]
    fn loglog_fit_recovers_power_law() {
        let x = [10.0, 100.0, 1000.0, 1e4];
        let y: Vec<f64> = x.iter().map(|x: &f64| 3.0 * x.powf(-0.8)).collect();
        let (s, c) = fit_loglog(&x, &y).unwrap();
        assert!((s + 0.8).abs() < 1e-12);
        assert!((c - 3f64.ln()).abs() < 1e-10);
        assert!(matches!(fit_loglog(&x[..2], &y[..2]), Err(Error::DegenerateFit(_))));
        // zeros are dropped before counting
        assert!(fit_loglog(&x, &[1.0, 0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn largest_n_reference_has_zero_error() {
        let p = ModelParams::preset("cv_test").unwrap();
        let mut spec = RunSpec::new(1e-3, 0.5, 0.05);
        spec.step.overflow = OverflowPolicy::Saturate;
        let r = convergence_experiment(
            &p,
            &InitialCondition::STANDARD,
            &[50, 200, 800, 3200],
            &spec,
            &Reference::LargestN,
            ErrorMetric::MeanAbs,
            3,
        )
        .unwrap();
        assert_eq!(*r.errors.last().unwrap(), 0.0);
        assert!(r.errors[..3].iter().all(|&e| e > 0.0));
        assert!(r.slope.is_finite());
        assert_eq!(r.traces.len(), 4);
    }

    #[test]
    fn too_few_points_is_degenerate() {
        let p = ModelParams::preset("cv_test").unwrap();
        let mut spec = RunSpec::new(1e-3, 0.1, 0.05);
        spec.step.overflow = OverflowPolicy::Saturate;
        let r = convergence_experiment(
            &p,
            &InitialCondition::STANDARD,
            &[10, 20, 40],
            &spec,
            &Reference::LargestN,
            ErrorMetric::MeanAbs,
            1,
        );
        assert!(matches!(r, Err(Error::DegenerateFit(_))));
    }
}
