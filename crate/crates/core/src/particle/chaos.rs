//! Pair-correlation test of asymptotic independence.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, init_particles, InitialCondition, RunSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Regular 2D histogram over a square range.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2D {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// `counts[a * bins + b]` counts pairs with `x` in bin `a` and `y` in bin `b`.
    pub counts: Vec<u64>,
}

impl Histogram2D {
    pub fn from_pairs(pairs: &[(f64, f64)], bins: usize) -> Self {
        let bins = bins.max(1);
        let (mut lo, mut hi) = pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        if !(lo < hi) {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let idx = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
        let mut counts = vec![0; bins * bins];
        for &(a, b) in pairs {
            counts[idx(a) * bins + idx(b)] += 1;
        }
        Self {
            lo,
            hi,
            bins,
            counts,
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * (self.hi - self.lo) / self.bins as f64
    }

    /// Writes `v_i_bin,v_j_bin,count` with bin centres.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "v_i_bin,v_j_bin,count")?;
        for a in 0..self.bins {
            for b in 0..self.bins {
                writeln!(
                    out,
                    "{},{},{}",
                    self.center(a),
                    self.center(b),
                    self.counts[a * self.bins + b]
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairCorrelation {
    /// Potentials of the two sampled neurons, one pair per realisation.
    pub pairs: Vec<(f64, f64)>,
    /// Pearson correlation of the pairs.
    pub rho: f64,
    pub histogram: Histogram2D,
}

/// Pearson correlation; NaN when either coordinate has zero variance.
pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Runs `m` independent networks of `n` neurons to `spec.t_end` and keeps the
/// potentials of two distinct, uniformly chosen neurons from each.
pub fn pair_correlation_experiment(
    p: &ModelParams,
    ic: &InitialCondition,
    n: usize,
    m: usize,
    spec: &RunSpec,
    seed: u64,
    bins: usize,
) -> Result<PairCorrelation> {
    if n < 2 {
        return Err(Error::param("N", "need at least two neurons to form a pair"));
    }
    if m < 2 {
        return Err(Error::param("M", "need at least two realisations"));
    }
    let n_steps = spec.n_steps();
    let pairs = (0..m as u64)
        .into_par_iter()
        .map(|r| {
            let run_seed = derive_seed(seed, r);
            let mut state = init_particles(p, ic, n, run_seed)?;
            for _ in 0..n_steps {
                state.step(p, spec.dt, &spec.step)?;
            }
            let mut pick = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, u64::MAX));
            let i = pick.random_range(0..n);
            let mut j = pick.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            Ok((state.v[i], state.v[j]))
        })
        .collect::<Result<Vec<_>>>()?;
    let rho = pearson(&pairs);
    let histogram = Histogram2D::from_pairs(&pairs, bins);
    Ok(PairCorrelation {
        pairs,
        rho,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::{OverflowPolicy, StepOptions};

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[(0.0, 1.0), (1.0, 3.0)]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[(0.0, 1.0), (1.0, -3.0)]) + 1.0).abs() < 1e-15);
        assert!(pearson(&[(0.0, 1.0), (0.0, 3.0)]).is_nan());
    }

    #[test]
    fn histogram_counts_every_pair() {
        let pairs = [(0.0, 0.0), (1.0, 1.0), (0.5, 0.2), (1.0, 0.0)];
        let h = Histogram2D::from_pairs(&pairs, 2);
        assert_eq!(h.counts.iter().sum::<u64>(), 4);
        assert_eq!(h.counts, vec![1, 0, 2, 1]);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("v_i_bin,v_j_bin,count\n0.25,0.25,1\n"));
    }

    #[test]
    fn rejects_small_networks() {
        let p = ModelParams::preset("cv_test").unwrap();
        let spec = RunSpec::new(1e-3, 0.01, 0.01);
        assert!(pair_correlation_experiment(&p, &InitialCondition::STANDARD, 1, 10, &spec, 0, 10).is_err());
    }

    #[test]
    fn two_realisations_give_degenerate_correlation() {
        let p = ModelParams::preset("cv_test").unwrap();
        let spec = RunSpec::new(1e-3, 0.05, 0.05);
        let r = pair_correlation_experiment(&p, &InitialCondition::STANDARD, 10, 2, &spec, 3, 4).unwrap();
        assert_eq!(r.pairs.len(), 2);
        assert!((r.rho.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_neurons_are_uncorrelated() {
        let p = ModelParams::preset("cv_test").unwrap().with_coupling(0.0);
        let spec = RunSpec {
            step: StepOptions {
                overflow: OverflowPolicy::Saturate,
                ..Default::default()
            },
            ..RunSpec::new(2e-3, 1.0, 1.0)
        };
        let m = 400;
        let r = pair_correlation_experiment(&p, &InitialCondition::STANDARD, 20, m, &spec, 17, 10).unwrap();
        assert!(r.rho.abs() <= 3.0 / (m as f64).sqrt(), "rho = {}", r.rho);
    }
}
