//! Runs a validated job and writes its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use regsynth::bench::{self, Adversary, AdversaryKind};
use regsynth::ftrl::{self, RegretTrace};
use regsynth::synthesis::{self, DoublingOutcome, ValidationOptions};
use regsynth::verify::{self, SampleOptions, StrongConvexityReport};

use crate::config::{BenchJob, CheckJob, Job, RunJob, SynthesizeJob};
use crate::error::CliError;
use crate::report::FlatReport;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DispatchOptions {
    /// Wall-clock timings make reports differ between runs, so they are
    /// opt-in.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: FlatReport,
    pub written: Vec<PathBuf>,
}

pub fn dispatch(job: &Job, opts: &DispatchOptions) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut out = match job {
        Job::Synthesize(j) => synthesize(j)?,
        Job::Run(j) => run(j)?,
        Job::Bench(j) => bench_suite(j)?,
        Job::Check(j) => check(j)?,
    };
    if opts.timings {
        out.report.put("timing.total_seconds", start.elapsed().as_secs_f64());
    }
    let target = match job {
        Job::Synthesize(j) => j.report.as_deref(),
        Job::Run(j) => j.report.as_deref(),
        Job::Check(j) => j.report.as_deref(),
        Job::Bench(_) => None,
    };
    if let Some(path) = target {
        out.report.write(path)?;
        out.written.push(path.to_path_buf());
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn put_sampled(r: &mut FlatReport, prefix: &str, s: &StrongConvexityReport) {
    r.put(format!("{prefix}.alpha"), s.alpha);
    r.put(format!("{prefix}.samples"), s.samples);
    r.put(format!("{prefix}.first_order_min_slack"), s.first_order_min_slack);
    r.put(format!("{prefix}.second_order_min_slack"), s.second_order_min_slack);
    r.put(format!("{prefix}.violations"), s.violations);
    r.put_vec(format!("{prefix}.worst_point"), &s.worst_point);
    r.put_vec(format!("{prefix}.worst_direction"), &s.worst_direction);
    r.put(format!("{prefix}.tol"), s.tol);
    r.put(format!("{prefix}.pass"), s.pass);
}

fn solve(j: &SynthesizeJob) -> Result<DoublingOutcome, CliError> {
    if !j.fixed_c {
        return Ok(synthesis::solve_with_doubling(&j.action_set, &j.loss_set, &j.overrides, j.c_guess)?);
    }
    let config = synthesis::calibrate_constants(&j.action_set, &j.loss_set, j.c_guess, &j.overrides)?;
    let outcome = synthesis::solve_program(&j.action_set, &j.loss_set, &config)?;
    Ok(DoublingOutcome {
        outcome,
        config,
        c_final: j.c_guess,
        rejected: Vec::new(),
    })
}

fn synthesize(j: &SynthesizeJob) -> Result<Outcome, CliError> {
    let d = solve(j)?;
    let s = &d.outcome;
    let g = synthesis::assemble_regularizer(&s.instance, &s.grid, &d.config, &j.loss_set, j.digest.clone())?;
    write_file(&j.out, &g.to_toml_string())?;

    let mut r = FlatReport::new(&j.digest);
    r.put("dim", j.action_set.dim());
    r.put("c_guess", j.c_guess);
    r.put("c_final", d.c_final);
    r.put("rejected_guesses", d.rejected.len());
    for (i, c) in d.rejected.iter().enumerate() {
        r.put(format!("rejected.{i}"), c);
    }
    r.put("objective", s.report.objective);
    r.put("centers", s.report.centers);
    r.put("grid_spacing", s.grid.spacing);
    r.put("rounds", s.report.rounds);
    r.put("certified", s.report.certified);
    let cuts = &s.report.cuts;
    for (k, v) in [
        ("locality", cuts.locality),
        ("grad_bound", cuts.grad_bound),
        ("value_bound", cuts.value_bound),
        ("objective_link", cuts.objective_link),
        ("value_floor", cuts.value_floor),
        ("psd_upper", cuts.psd_upper),
        ("strong_convexity", cuts.strong_convexity),
        ("total", cuts.total()),
    ] {
        r.put(format!("cuts.{k}"), v);
    }
    r.put("max_violation", s.report.max_violation);
    r.put("solver_tol", s.report.solver_tol);
    r.put("cover_directions", s.report.cover_directions);
    r.put("lp_cold_solves", s.report.lp_cold_solves);

    let c = &d.config;
    for (k, v) in [
        ("eps_bar", c.eps_bar),
        ("eps", c.eps),
        ("L", c.cubic_l),
        ("alpha", c.alpha),
        ("c0", c.c0),
        ("c2", c.c2),
        ("C0", c.value_bound),
        ("delta_m", c.delta_m),
        ("delta_lin", c.delta_lin),
        ("eps_tilde", c.eps_tilde),
        ("r", c.r),
        ("R", c.big_r),
        ("loss_r", c.loss_r),
        ("loss_R", c.loss_big_r),
        ("theoretical_eps_bar", c.theoretical_eps_bar),
        ("locality_radius", c.locality_radius),
    ] {
        r.put(format!("config.{k}"), v);
    }
    r.put("config.pair_margin", format!("{:?}", c.pair_margin));
    r.put("regularizer_alpha", g.alpha);

    if j.validate {
        let opts = ValidationOptions {
            samples: j.samples,
            seed: j.seed,
            ..ValidationOptions::default()
        };
        let v = synthesis::validate_instance(&s.instance, &s.grid, &j.action_set, &j.loss_set, &d.config, &opts)?;
        for f in &v.families {
            r.put(format!("validation.{}.max_violation", f.family), f.max_violation);
            r.put(format!("validation.{}.tolerance", f.family), f.tolerance);
            r.put(format!("validation.{}.pass", f.family), f.pass);
        }
        r.put("validation.fine_cover_directions", v.fine_cover_directions);
        r.put("validation.range_min", v.range_min);
        r.put("validation.range_max", v.range_max);
        r.put("validation.range_within_bound", v.range_within_bound);
        r.put("validation.locality_fraction", v.locality_fraction);
        r.put("validation.locality_radius", v.locality_radius);
        put_sampled(&mut r, "validation.sampled", &v.sampled_modulus);
        let pass = v.families_pass() && v.range_within_bound && v.sampled_modulus.pass;
        if !pass {
            log::warn!("the synthesized regularizer did not pass validation; see the report");
        }
        r.put("validation.pass", pass);
    }
    Ok(Outcome {
        report: r,
        written: vec![j.out.clone()],
    })
}

/// Writes the per-round trace with a digest comment line.
pub fn write_trace(trace: &RegretTrace, path: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut f = std::fs::File::create(path).map_err(io)?;
    use std::io::Write;
    writeln!(f, "# regsynth config_digest={}", trace.digest).map_err(io)?;
    let d = trace.actions.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(f);
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend((0..d).map(|k| format!("loss{k}")));
    header.extend(["instantaneous_regret", "cumulative_regret", "inner_gap"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    let inst = trace.instantaneous_regret();
    for t in 0..trace.actions.len() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(trace.actions[t].iter().map(f64::to_string));
        row.extend(trace.losses[t].iter().map(f64::to_string));
        row.push(inst[t].to_string());
        row.push(trace.cumulative_regret[t].to_string());
        row.push(trace.inner_gaps[t].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

fn run(j: &RunJob) -> Result<Outcome, CliError> {
    let g = j.regularizer.as_dyn();
    let mut adversary = Adversary::new(j.adversary, &j.loss_set, j.seed)?;
    let trace = ftrl::run_ftrl(
        g,
        &j.action_set,
        &j.loss_set,
        &mut adversary,
        j.rounds,
        &j.inner,
        j.seed,
        j.digest.clone(),
    )?;
    let mut written = Vec::new();
    if let Some(path) = &j.trace_out {
        write_trace(&trace, path)?;
        written.push(path.clone());
    }
    let mut r = FlatReport::new(&j.digest);
    r.put("regularizer", g.name());
    r.put("adversary", j.adversary.as_str());
    r.put("adversary_adaptive", j.adversary == AdversaryKind::SignAdaptive);
    r.put("rounds", j.rounds);
    r.put("seed", j.seed);
    r.put("eta", trace.eta);
    r.put("objective", "g(x) + eta <x, cumulative loss>");
    r.put("final_regret", trace.final_regret());
    r.put("regret_over_sqrt_t", trace.final_regret() / (j.rounds as f64).sqrt());
    r.put("max_inner_gap", trace.inner_gaps.iter().copied().fold(0.0, f64::max));
    r.put("uncertified_steps", trace.uncertified_steps);
    r.put("loss_warnings", trace.warnings.len());
    r.put("inner.tol", j.inner.tol);
    r.put("inner.max_iter", j.inner.max_iter);
    Ok(Outcome { report: r, written })
}

fn bench_suite(j: &BenchJob) -> Result<Outcome, CliError> {
    let report = bench::compare(&j.suite, &j.base)?;
    let written = bench::write_report(&report, &j.out_dir)?;
    let mut r = FlatReport::new(&report.digest);
    r.put("runs", report.runs.len());
    r.put("failures", report.failures);
    r.put("out_dir", j.out_dir.display());
    for (reg, inst, est) in &report.rates {
        match est {
            Ok(e) => {
                r.put(format!("rate.{reg}.{inst}"), e.headline);
                r.put(format!("rate.{reg}.{inst}.converging"), e.converging);
            }
            Err(m) => r.put(format!("rate.{reg}.{inst}.error"), m),
        }
    }
    Ok(Outcome { report: r, written })
}

fn check(j: &CheckJob) -> Result<Outcome, CliError> {
    let opts = SampleOptions {
        samples: j.samples,
        seed: j.seed,
        ..SampleOptions::default()
    };
    let s = verify::strong_convexity_sampled(&j.regularizer, &j.action_set, &j.loss_set, j.alpha, &opts)?;
    let mut r = FlatReport::new(&j.digest);
    r.put("regularizer.pieces", j.regularizer.pieces().len());
    r.put("regularizer.provenance", &j.regularizer.provenance);
    r.put("seed", j.seed);
    put_sampled(&mut r, "sampled", &s);
    if !s.pass {
        log::warn!("sampled strong convexity at alpha = {} failed", j.alpha);
    }
    Ok(Outcome {
        report: r,
        written: Vec::new(),
    })
}
