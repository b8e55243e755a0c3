use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use super::config::{Experiment, ReferenceKind, RunConfig};
use crate::analysis::{
    bisect_threshold, chaos_experiment, compare_traces, convergence_experiment, hopf_sweep,
    invariant_distribution, l1_distance, meanfield_trace, oracle_jump_histogram, InvariantOptions, Reference,
    Series,
};
use crate::error::{Error, Result};
use crate::fvm::{
    adaptive_advance, discretize_initial, io as fvm_io, write_step_log_row, Grid2D, STEP_LOG_HEADER,
};
use crate::particle::{
    init_particles, run, run_with, write_snapshot_csv, write_trace_row, ThinningOptions, TRACE_HEADER,
};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "SPIKEFIELD_OUT";

pub const MANIFEST: &str = "manifest.toml";

/// Output directory: the configured one, else `<root>/<experiment>-<model>-s<seed>`
/// under `$SPIKEFIELD_OUT` (or `runs`).
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    if let Some(d) = &cfg.out_dir {
        return d.clone();
    }
    let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| "runs".into());
    let model = cfg.preset.as_deref().unwrap_or("custom");
    root.join(format!("{}-{model}-s{}", cfg.experiment.name(), cfg.seed))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_series(path: &Path, header: &str, s: &Series) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{header}")?;
    for (t, v) in s.t.iter().zip(&s.v) {
        writeln!(f, "{t},{v}")?;
    }
    f.flush()?;
    Ok(())
}

/// Runs the configured experiment, writing into `dir`. The manifest (the
/// resolved config, which reproduces the run) is written before anything else.
pub fn dispatch(cfg: &RunConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let mut manifest = cfg.clone();
    manifest.code_version = Some(env!("CARGO_PKG_VERSION").to_string());
    manifest.out_dir = None;
    manifest.fill_stepping_defaults();
    fs::write(
        dir.join(MANIFEST),
        format!("# spikefield {}\n{}", cfg.experiment.name(), manifest.to_toml()?),
    )?;
    log::info!("{} -> {}", cfg.experiment.name(), dir.display());

    let p = cfg.params()?;
    let ic = &cfg.initial;
    match &cfg.experiment {
        Experiment::SimulateParticle { t_end } => {
            let spec = cfg.run_spec(*t_end);
            let mut state = init_particles(&p, ic, cfg.particle.n, cfg.seed)?;
            let mut out = create(&dir.join("trace.csv"))?;
            writeln!(out, "{TRACE_HEADER}")?;
            let trace = run_with(&p, &mut state, &spec, |row| {
                write_trace_row(&mut out, row)?;
                Ok(())
            })?;
            out.flush()?;
            for s in &trace.snapshots {
                write_snapshot_csv(create(&dir.join(format!("snapshot_t{}.csv", s.t)))?, &s.v, &s.w)?;
            }
            if state.saturated > 0 {
                log::warn!("{} spike tests had lambda dt > 1", state.saturated);
            }
        }
        Experiment::SimulateMeanfield { t_end } => {
            let g = cfg.grid()?;
            simulate_meanfield(cfg, &g, *t_end, dir)?;
        }
        Experiment::Convergence {
            n_values,
            t_end,
            reference,
            metric,
        } => {
            let reference = match reference {
                ReferenceKind::LargestN => Reference::LargestN,
                ReferenceKind::MeanField => Reference::MeanField {
                    grid: cfg.grid()?,
                    opts: cfg.stepping(),
                },
            };
            let spec = cfg.run_spec(*t_end);
            let r = convergence_experiment(&p, ic, n_values, &spec, &reference, *metric, cfg.seed)?;
            for (n, tr) in r.n_values.iter().zip(&r.traces) {
                write_series(&dir.join(format!("trace_N{n}.csv")), "t,mean_v", tr)?;
            }
            write_series(&dir.join("reference.csv"), "t,mean_v", &r.reference)?;
            let mut f = create(&dir.join("summary.csv"))?;
            writeln!(f, "N,error")?;
            for (n, e) in r.n_values.iter().zip(&r.errors) {
                writeln!(f, "{n},{e}")?;
            }
            f.flush()?;
            fs::write(dir.join("fit.csv"), format!("slope\n{}\n", r.slope))?;
            log::info!("fitted slope {:.3}", r.slope);
        }
        Experiment::Chaos {
            n_values,
            m,
            t_end,
            bins,
            independence_check,
        } => {
            let spec = cfg.run_spec(*t_end);
            let mut f = create(&dir.join("summary.csv"))?;
            writeln!(f, "N,J,rho")?;
            let mut runs = chaos_experiment(&p, ic, n_values, *m, &spec, cfg.seed, *bins)?
                .into_iter()
                .map(|(n, r)| (n, p.coupling, r))
                .collect::<Vec<_>>();
            if *independence_check {
                let n = *n_values.last().expect("validated");
                let p0 = p.with_coupling(0.0);
                let (_, r) = chaos_experiment(&p0, ic, &[n], *m, &spec, cfg.seed ^ 0x5eed, *bins)?
                    .pop()
                    .expect("one run");
                runs.push((n, 0.0, r));
            }
            for (n, j, r) in &runs {
                writeln!(f, "{n},{j},{}", r.rho)?;
                r.histogram
                    .write_csv(create(&dir.join(format!("histogram_N{n}_J{j}.csv")))?)?;
                let mut pf = create(&dir.join(format!("pairs_N{n}_J{j}.csv")))?;
                writeln!(pf, "v_i,v_j")?;
                for (a, b) in &r.pairs {
                    writeln!(pf, "{a},{b}")?;
                }
                pf.flush()?;
            }
            f.flush()?;
        }
        Experiment::Invariant {
            t_long,
            macro_interval,
            tol,
            oracle_jumps,
            burn_in,
        } => {
            let g = cfg.grid()?;
            let opts = InvariantOptions {
                stepping: cfg.stepping(),
                macro_interval: *macro_interval,
                tol: *tol,
                t_long: *t_long,
            };
            let r = invariant_distribution(&p, &g, ic, &opts)?;
            fvm_io::write_density_bin(&dir.join("density.bin"), &g, &r.density)?;
            fvm_io::write_density_csv(&dir.join("density.csv"), &g, &r.density)?;
            let mut cf = create(&dir.join("changes.csv"))?;
            writeln!(cf, "t,change")?;
            for (t, c) in &r.changes {
                writeln!(cf, "{t},{c}")?;
            }
            cf.flush()?;
            let oracle = if *oracle_jumps > 0 {
                Some(oracle_jump_histogram(
                    &p,
                    &g,
                    *oracle_jumps,
                    *burn_in,
                    cfg.seed,
                    &ThinningOptions::default(),
                )?)
            } else {
                None
            };
            let mut mf = create(&dir.join("w_marginal.csv"))?;
            writeln!(mf, "w,marginal,jump_chain,oracle")?;
            for j in 0..g.n_w {
                let o = oracle.as_ref().map(|h| h[j].to_string()).unwrap_or_default();
                writeln!(mf, "{},{},{},{o}", g.w(j), r.w_marginal[j], r.jump_chain[j])?;
            }
            mf.flush()?;
            let l1 = oracle.as_ref().map(|h| l1_distance(h, &r.jump_chain));
            fs::write(
                dir.join("summary.csv"),
                format!(
                    "converged,t_final,l1_oracle\n{},{},{}\n",
                    r.converged,
                    r.density.t,
                    l1.map(|x| x.to_string()).unwrap_or_default()
                ),
            )?;
        }
        Experiment::SweepJ { j_values, bisect, .. } => {
            let g = cfg.grid()?;
            let opts = cfg.sweep_options().expect("sweep");
            let r = hopf_sweep(&p, &g, ic, j_values, &opts)?;
            let mut f = create(&dir.join("summary.csv"))?;
            writeln!(f, "J,amplitude,period")?;
            for k in 0..r.j_values.len() {
                let j = r.j_values[k];
                let period = r.periods[k].map(|x| x.to_string()).unwrap_or_default();
                writeln!(f, "{j},{},{period}", r.amplitudes[k])?;
                write_series(&dir.join(format!("trace_J{j}.csv")), "t,mean_v", &r.traces[k])?;
            }
            f.flush()?;
            if let Some([lo, hi, tol]) = bisect {
                let b = bisect_threshold(&p, &g, ic, *lo, *hi, *tol, &opts)?;
                let mut bf = create(&dir.join("bisection.csv"))?;
                writeln!(bf, "J,amplitude,oscillatory")?;
                for (j, a, o) in &b.evaluations {
                    writeln!(bf, "{j},{a},{o}")?;
                }
                bf.flush()?;
                log::info!("threshold in [{}, {}]", b.lo, b.hi);
            }
        }
        Experiment::Compare { t_end } => {
            let g = cfg.grid()?;
            let spec = cfg.run_spec(*t_end);
            let mut state = init_particles(&p, ic, cfg.particle.n, cfg.seed)?;
            let trace = run(&p, &mut state, &spec)?;
            let ps = Series::new(trace.times, trace.mean_v);
            write_series(&dir.join("particle.csv"), "t,mean_v", &ps)?;
            let mf = meanfield_trace(&p, &g, ic, *t_end, &cfg.stepping())?;
            write_series(&dir.join("meanfield.csv"), "t,mean_v", &mf)?;
            let c = compare_traces(&ps, &mf)?;
            let mut f = create(&dir.join("comparison.csv"))?;
            writeln!(f, "t,particle,meanfield,gap")?;
            for k in 0..c.t.len() {
                writeln!(
                    f,
                    "{},{},{},{}",
                    c.t[k],
                    c.particle[k],
                    c.meanfield[k],
                    (c.particle[k] - c.meanfield[k]).abs()
                )?;
            }
            f.flush()?;
            fs::write(
                dir.join("summary.csv"),
                format!("max_gap,mean_gap\n{},{}\n", c.max_gap, c.mean_gap),
            )?;
        }
    }
    Ok(())
}

fn simulate_meanfield(cfg: &RunConfig, g: &Grid2D, t_end: f64, dir: &Path) -> Result<()> {
    let p = cfg.params()?;
    let d = discretize_initial(&cfg.initial, g)?;
    let mut log_file = create(&dir.join("steps.csv"))?;
    writeln!(log_file, "{STEP_LOG_HEADER}")?;
    let mut pending: Vec<f64> = cfg.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    pending.reverse();
    let mut failure: Option<Error> = None;
    let snapshot = |d: &crate::fvm::Density| -> Result<()> {
        let path = dir.join(format!("density_t{}.bin", d.t));
        fvm_io::write_density_bin(&path, g, d)
    };
    if pending.last() == Some(&0.0) {
        snapshot(&d)?;
        pending.pop();
    }
    let run = adaptive_advance(&p, g, d, t_end, &cfg.stepping(), |r, mu| {
        let res = (|| -> Result<()> {
            write_step_log_row(&mut log_file, r)?;
            if r.accepted {
                while pending.last().is_some_and(|&ts| mu.t >= ts) {
                    pending.pop();
                    snapshot(mu)?;
                }
            }
            Ok(())
        })();
        match res {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    log_file.flush()?;
    fvm_io::write_density_bin(&dir.join("final.bin"), g, &run.density)?;
    fvm_io::write_density_csv(&dir.join("final.csv"), g, &run.density)?;
    log::info!(
        "{} accepted, {} rejected steps; final t = {}",
        run.accepted(),
        run.rejected(),
        run.density.t
    );
    Ok(())
}
