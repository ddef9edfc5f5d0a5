use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use regsynth::bench::{AdversaryKind, BodySpec};
use regsynth_cli::config::BaselineKind;
use regsynth_cli::{dispatch, prepare, CliError, Command, DispatchOptions, RunConfig};

#[derive(Parser)]
#[command(name = "regsynth", version, about = "Synthesize, run and benchmark FTRL regularizers")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Add wall-clock timings to the report (breaks byte reproducibility).
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the regularizer program and write the regularizer file.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        action_set: Option<PathBuf>,
        #[arg(long)]
        loss_set: Option<PathBuf>,
        #[arg(long)]
        eps_bar: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Starting value scale of the doubling search.
        #[arg(long)]
        c_guess: Option<f64>,
        /// Solve at --c-guess only; infeasibility exits with status 1.
        #[arg(long)]
        fixed_c: bool,
        #[arg(long)]
        no_validate: bool,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Play FTRL against an adversary and record the regret trace.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "baseline")]
        regularizer: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        /// Weight c of the quadratic baseline ½ c |x|².
        #[arg(long)]
        weight: Option<f64>,
        #[arg(long)]
        action_set: Option<PathBuf>,
        #[arg(long)]
        loss_set: Option<PathBuf>,
        #[arg(long, value_enum)]
        adversary: Option<AdversaryArg>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a benchmark suite and write CSV reports.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Sample the strong-convexity inequalities of a regularizer file.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        regularizer: Option<PathBuf>,
        #[arg(long)]
        action_set: Option<PathBuf>,
        #[arg(long)]
        loss_set: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Quadratic,
    Entropy,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdversaryArg {
    IidExtreme,
    SignAdaptive,
    FollowLeaderTrap,
}

impl From<AdversaryArg> for AdversaryKind {
    fn from(a: AdversaryArg) -> Self {
        match a {
            AdversaryArg::IidExtreme => AdversaryKind::IidExtreme,
            AdversaryArg::SignAdaptive => AdversaryKind::SignAdaptive,
            AdversaryArg::FollowLeaderTrap => AdversaryKind::FollowLeaderTrap,
        }
    }
}

fn body(p: Option<PathBuf>) -> Option<BodySpec> {
    p.map(|p| BodySpec::File(p.to_string_lossy().into_owned()))
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    match &common.config {
        Some(p) => RunConfig::read(p),
        None => Ok(RunConfig::default()),
    }
}

/// Merges the flags into the file config and names the subcommand.
fn resolve(sub: Sub) -> Result<(RunConfig, Command, DispatchOptions), CliError> {
    match sub {
        Sub::Synthesize {
            common,
            action_set,
            loss_set,
            eps_bar,
            alpha,
            c_guess,
            fixed_c,
            no_validate,
            samples,
            seed,
            out,
            report,
        } => {
            let mut cfg = base_config(&common)?;
            let b = &mut cfg.synthesize;
            set(&mut b.action_set, body(action_set));
            set(&mut b.loss_set, body(loss_set));
            set(&mut b.overrides.eps_bar, eps_bar);
            set(&mut b.overrides.alpha, alpha);
            set(&mut b.c_guess, c_guess);
            if fixed_c {
                b.fixed_c = Some(true);
            }
            if no_validate {
                b.validate = Some(false);
            }
            set(&mut b.samples, samples);
            set(&mut b.seed, seed);
            set(&mut b.out, out);
            set(&mut b.report, report);
            Ok((cfg, Command::Synthesize, DispatchOptions { timings: common.timings }))
        }
        Sub::Run {
            common,
            regularizer,
            baseline,
            weight,
            action_set,
            loss_set,
            adversary,
            rounds,
            seed,
            trace_out,
            report,
        } => {
            let mut cfg = base_config(&common)?;
            let b = &mut cfg.run;
            // A flag picks the regularizer outright, whatever the file said.
            if regularizer.is_some() {
                b.regularizer = regularizer;
                b.baseline = None;
            }
            if let Some(k) = baseline {
                b.baseline = Some(match k {
                    BaselineArg::Quadratic => BaselineKind::Quadratic,
                    BaselineArg::Entropy => BaselineKind::Entropy,
                });
                b.regularizer = None;
            }
            set(&mut b.weight, weight);
            set(&mut b.action_set, body(action_set));
            set(&mut b.loss_set, body(loss_set));
            set(&mut b.adversary, adversary.map(Into::into));
            set(&mut b.rounds, rounds);
            set(&mut b.seed, seed);
            set(&mut b.trace_out, trace_out);
            set(&mut b.report, report);
            Ok((cfg, Command::Run, DispatchOptions { timings: common.timings }))
        }
        Sub::Bench { common, suite, out_dir } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.bench.suite, suite);
            set(&mut cfg.bench.out_dir, out_dir);
            Ok((cfg, Command::Bench, DispatchOptions { timings: common.timings }))
        }
        Sub::Check {
            common,
            regularizer,
            action_set,
            loss_set,
            alpha,
            samples,
            seed,
            report,
        } => {
            let mut cfg = base_config(&common)?;
            let b = &mut cfg.check;
            set(&mut b.regularizer, regularizer);
            set(&mut b.action_set, body(action_set));
            set(&mut b.loss_set, body(loss_set));
            set(&mut b.alpha, alpha);
            set(&mut b.samples, samples);
            set(&mut b.seed, seed);
            set(&mut b.report, report);
            Ok((cfg, Command::Check, DispatchOptions { timings: common.timings }))
        }
    }
}

fn execute(sub: Sub) -> Result<(), CliError> {
    let (cfg, command, opts) = resolve(sub)?;
    let job = prepare(&cfg, command)?;
    let outcome = dispatch(&job, &opts)?;
    print!("{}", outcome.report.render());
    for p in &outcome.written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
