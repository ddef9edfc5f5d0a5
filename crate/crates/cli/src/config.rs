//! Run configuration: one TOML file with a block per subcommand. Command
//! line flags override file values; relative paths in a file are resolved
//! against the file's directory.

use std::path::{Path, PathBuf};

use regsynth::bench::{AdversaryKind, BodySpec, InnerSpec, Suite};
use regsynth::ftrl::{Baseline, InnerSolveConfig};
use regsynth::synthesis::{self, Overrides};
use regsynth::{BodyDescription, ConvexBody, PiecewiseRegularizer};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Synthesize,
    Run,
    Bench,
    Check,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Synthesize => "synthesize",
            Command::Run => "run",
            Command::Bench => "bench",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Quadratic,
    Entropy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesizeBlock {
    pub action_set: Option<BodySpec>,
    pub loss_set: Option<BodySpec>,
    pub c_guess: Option<f64>,
    /// Solve at `c_guess` only instead of doubling until feasible.
    pub fixed_c: Option<bool>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub validate: Option<bool>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunBlock {
    pub regularizer: Option<PathBuf>,
    pub baseline: Option<BaselineKind>,
    /// Weight `c` of the quadratic baseline `½ c |x|²`.
    pub weight: Option<f64>,
    pub action_set: Option<BodySpec>,
    pub loss_set: Option<BodySpec>,
    pub adversary: Option<AdversaryKind>,
    pub rounds: Option<usize>,
    pub seed: Option<u64>,
    pub trace_out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub inner: Option<InnerSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckBlock {
    pub regularizer: Option<PathBuf>,
    pub action_set: Option<BodySpec>,
    /// Defaults to the loss set recorded in the regularizer file.
    pub loss_set: Option<BodySpec>,
    /// Defaults to the modulus recorded in the regularizer file.
    pub alpha: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchBlock {
    pub suite: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Subcommand the file is meant for; must agree with the one invoked.
    pub command: Option<Command>,
    #[serde(default)]
    pub synthesize: SynthesizeBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub check: CheckBlock,
    #[serde(default)]
    pub bench: BenchBlock,
}

fn rebase_path(p: &mut Option<PathBuf>, base: &Path) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn rebase_body(b: &mut Option<BodySpec>, base: &Path) {
    if let Some(BodySpec::File(path)) = b {
        if Path::new(path).is_relative() {
            *path = base.join(&*path).to_string_lossy().into_owned();
        }
    }
}

impl RunConfig {
    /// Parses a config file, reporting every unknown key with its path.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Parse(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(format!("unknown field `{path}`")))
            .map_err(|e| CliError::Parse(e.to_string()))?;
        if unknown.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Invalid(unknown))
        }
    }

    /// Reads a config file and makes its relative paths absolute.
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let s = &mut self.synthesize;
        rebase_body(&mut s.action_set, base);
        rebase_body(&mut s.loss_set, base);
        rebase_path(&mut s.out, base);
        rebase_path(&mut s.report, base);
        let r = &mut self.run;
        rebase_path(&mut r.regularizer, base);
        rebase_body(&mut r.action_set, base);
        rebase_body(&mut r.loss_set, base);
        rebase_path(&mut r.trace_out, base);
        rebase_path(&mut r.report, base);
        let c = &mut self.check;
        rebase_path(&mut c.regularizer, base);
        rebase_body(&mut c.action_set, base);
        rebase_body(&mut c.loss_set, base);
        rebase_path(&mut c.report, base);
        let b = &mut self.bench;
        rebase_path(&mut b.suite, base);
        rebase_path(&mut b.out_dir, base);
    }

    /// Blocks that carry any setting, in subcommand order.
    fn populated(&self) -> Vec<Command> {
        let mut out = Vec::new();
        if self.synthesize != SynthesizeBlock::default() {
            out.push(Command::Synthesize);
        }
        if self.run != RunBlock::default() {
            out.push(Command::Run);
        }
        if self.bench != BenchBlock::default() {
            out.push(Command::Bench);
        }
        if self.check != CheckBlock::default() {
            out.push(Command::Check);
        }
        out
    }
}

/// Loads and fully validates a config file. The blocks checked are the one
/// named by `command`, or every populated block when it is absent.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::read(path)?;
    let commands = match cfg.command {
        Some(c) => vec![c],
        None => cfg.populated(),
    };
    if commands.is_empty() {
        return Err(CliError::Invalid(vec!["config names no command and has no populated block".into()]));
    }
    let mut problems = Vec::new();
    for c in commands {
        if let Err(e) = prepare(&cfg, c) {
            match e {
                CliError::Invalid(v) => problems.extend(v),
                other => return Err(other),
            }
        }
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Invalid(problems))
    }
}

/// A validated unit of work with its content digest.
pub enum Job {
    Synthesize(SynthesizeJob),
    Run(RunJob),
    Bench(BenchJob),
    Check(CheckJob),
}

impl Job {
    pub fn digest(&self) -> &str {
        match self {
            Job::Synthesize(j) => &j.digest,
            Job::Run(j) => &j.digest,
            Job::Bench(j) => &j.digest,
            Job::Check(j) => &j.digest,
        }
    }
}

pub struct SynthesizeJob {
    pub action_set: ConvexBody,
    pub loss_set: ConvexBody,
    pub c_guess: f64,
    pub fixed_c: bool,
    pub overrides: Overrides,
    pub validate: bool,
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
    pub digest: String,
}

pub enum LearnerRegularizer {
    Synthesized(PiecewiseRegularizer),
    Baseline(Baseline),
}

impl LearnerRegularizer {
    pub fn as_dyn(&self) -> &dyn regsynth::ftrl::Regularizer {
        match self {
            LearnerRegularizer::Synthesized(g) => g,
            LearnerRegularizer::Baseline(b) => b,
        }
    }
}

pub struct RunJob {
    pub regularizer: LearnerRegularizer,
    pub action_set: ConvexBody,
    pub loss_set: ConvexBody,
    pub adversary: AdversaryKind,
    pub rounds: usize,
    pub seed: u64,
    pub inner: InnerSolveConfig,
    pub trace_out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub digest: String,
}

pub struct BenchJob {
    pub suite: Suite,
    /// Directory the suite's relative body paths are resolved against.
    pub base: PathBuf,
    pub out_dir: PathBuf,
    pub digest: String,
}

pub struct CheckJob {
    pub regularizer: PiecewiseRegularizer,
    pub action_set: ConvexBody,
    pub loss_set: ConvexBody,
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
    pub report: Option<PathBuf>,
    pub digest: String,
}

pub const DEFAULT_SAMPLES: usize = 1_000;

/// Collects violations instead of stopping at the first one.
struct Problems {
    block: &'static str,
    list: Vec<String>,
}

impl Problems {
    fn new(block: &'static str) -> Self {
        Problems { block, list: Vec::new() }
    }

    fn push(&mut self, field: &str, msg: impl std::fmt::Display) {
        self.list.push(format!("{}.{field}: {msg}", self.block));
    }

    fn require<T: Clone>(&mut self, field: &str, v: &Option<T>) -> Option<T> {
        if v.is_none() {
            self.push(field, "is required");
        }
        v.clone()
    }

    fn body(&mut self, field: &str, spec: &Option<BodySpec>) -> Option<ConvexBody> {
        let spec = self.require(field, spec)?;
        spec.load(Path::new("")).map_err(|e| self.push(field, e)).ok()
    }

    fn positive(&mut self, field: &str, v: Option<f64>) {
        if let Some(x) = v {
            if !(x > 0.0 && x.is_finite()) {
                self.push(field, format!("must be positive, got {x}"));
            }
        }
    }

    fn at_least_one(&mut self, field: &str, v: Option<usize>) {
        if v == Some(0) {
            self.push(field, "must be at least 1");
        }
    }

    fn finish<T>(self, job: Option<T>) -> Result<T, CliError> {
        match job {
            Some(j) if self.list.is_empty() => Ok(j),
            _ => Err(CliError::Invalid(self.list)),
        }
    }
}

fn load_regularizer(p: &mut Problems, field: &str, path: &Option<PathBuf>) -> Option<(PiecewiseRegularizer, String)> {
    let path = p.require(field, path)?;
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            p.push(field, format!("cannot read {}: {e}", path.display()));
            return None;
        }
    };
    let g = PiecewiseRegularizer::from_toml_str(&text)
        .map_err(|e| p.push(field, format!("{}: {e}", path.display())))
        .ok()?;
    let sha = regsynth::config::digest(&text).ok()?;
    Some((g, sha))
}

fn digest<T: Serialize>(v: &T) -> Result<String, CliError> {
    Ok(regsynth::config::digest(v)?)
}

/// Validates the block for `command` and loads everything it references.
pub fn prepare(cfg: &RunConfig, command: Command) -> Result<Job, CliError> {
    if let Some(c) = cfg.command {
        if c != command {
            return Err(CliError::Invalid(vec![format!(
                "command: config is for `{}` but `{}` was invoked",
                c.as_str(),
                command.as_str()
            )]));
        }
    }
    match command {
        Command::Synthesize => prepare_synthesize(&cfg.synthesize).map(Job::Synthesize),
        Command::Run => prepare_run(&cfg.run).map(Job::Run),
        Command::Bench => prepare_bench(&cfg.bench).map(Job::Bench),
        Command::Check => prepare_check(&cfg.check).map(Job::Check),
    }
}

#[derive(Serialize)]
struct SynthesizeDigest<'a> {
    command: &'static str,
    action_set: &'a BodyDescription,
    loss_set: &'a BodyDescription,
    c_guess: f64,
    fixed_c: bool,
    validate: bool,
    samples: usize,
    seed: u64,
    overrides: &'a Overrides,
}

fn prepare_synthesize(b: &SynthesizeBlock) -> Result<SynthesizeJob, CliError> {
    let mut p = Problems::new("synthesize");
    let x = p.body("action_set", &b.action_set);
    let l = p.body("loss_set", &b.loss_set);
    let out = p.require("out", &b.out);
    p.positive("c_guess", b.c_guess);
    p.at_least_one("samples", b.samples);
    let c_guess = b.c_guess.unwrap_or(1.0);
    let fixed_c = b.fixed_c.unwrap_or(false);
    if let (Some(x), Some(l)) = (&x, &l) {
        match synthesis::calibrate_constants(x, l, c_guess, &b.overrides) {
            Ok(cal) => {
                for v in cal.violations() {
                    p.push("overrides", v);
                }
                // Without doubling, or with c2 pinned, raising C cannot help.
                // The solver's own check adds the (1 + delta_m) margin and
                // reports a certificate instead.
                let ceiling = cal.c2 / (cal.loss_r * cal.loss_r);
                if (fixed_c || b.overrides.c2.is_some()) && cal.alpha > ceiling {
                    p.push(
                        "alpha",
                        format!(
                            "infeasibility precheck failed: alpha = {} exceeds c2 / r^2 = {ceiling}",
                            cal.alpha
                        ),
                    );
                }
            }
            Err(e) => p.push("action_set", e),
        }
    }
    let job = match (x, l, out) {
        (Some(x), Some(l), Some(out)) => {
            let validate = b.validate.unwrap_or(true);
            let samples = b.samples.unwrap_or(DEFAULT_SAMPLES);
            let seed = b.seed.unwrap_or(0);
            let digest = digest(&SynthesizeDigest {
                command: "synthesize",
                action_set: x.description(),
                loss_set: l.description(),
                c_guess,
                fixed_c,
                validate,
                samples,
                seed,
                overrides: &b.overrides,
            })?;
            Some(SynthesizeJob {
                action_set: x,
                loss_set: l,
                c_guess,
                fixed_c,
                overrides: b.overrides.clone(),
                validate,
                samples,
                seed,
                out,
                report: b.report.clone(),
                digest,
            })
        }
        _ => None,
    };
    p.finish(job)
}

#[derive(Serialize)]
struct RunDigest<'a> {
    command: &'static str,
    regularizer: String,
    action_set: &'a BodyDescription,
    loss_set: &'a BodyDescription,
    adversary: AdversaryKind,
    rounds: usize,
    seed: u64,
    inner: InnerSolveConfig,
}

fn prepare_run(b: &RunBlock) -> Result<RunJob, CliError> {
    let mut p = Problems::new("run");
    let x = p.body("action_set", &b.action_set);
    let l = p.body("loss_set", &b.loss_set);
    let rounds = p.require("rounds", &b.rounds);
    p.at_least_one("rounds", b.rounds);
    p.positive("weight", b.weight);
    let inner = InnerSpec::resolve(b.inner);
    if let Err(e) = inner.validate() {
        p.push("inner", e);
    }
    let reg = match (&b.regularizer, b.baseline) {
        (Some(_), Some(_)) => {
            p.push("regularizer", "give either a regularizer file or a baseline, not both");
            None
        }
        (None, None) => {
            p.push("regularizer", "a regularizer file or a baseline is required");
            None
        }
        (Some(_), None) => load_regularizer(&mut p, "regularizer", &b.regularizer)
            .map(|(g, sha)| (LearnerRegularizer::Synthesized(g), format!("file:{sha}"))),
        (None, Some(BaselineKind::Quadratic)) => {
            let c = b.weight.unwrap_or(1.0);
            Baseline::quadratic(c)
                .map_err(|e| p.push("weight", e))
                .ok()
                .map(|q| (LearnerRegularizer::Baseline(q), format!("quadratic:{c}")))
        }
        (None, Some(BaselineKind::Entropy)) => x.as_ref().and_then(|x| {
            Baseline::entropy(x)
                .map_err(|e| p.push("baseline", e))
                .ok()
                .map(|e| (LearnerRegularizer::Baseline(e), "entropy".to_string()))
        }),
    };
    if b.weight.is_some() && b.baseline != Some(BaselineKind::Quadratic) {
        p.push("weight", "only applies to the quadratic baseline");
    }
    if let (Some((LearnerRegularizer::Synthesized(g), _)), Some(x)) = (&reg, &x) {
        if g.dim() != x.dim() {
            p.push("regularizer", format!("has dimension {} but the action set has {}", g.dim(), x.dim()));
        }
    }
    if let (Some(x), Some(l)) = (&x, &l) {
        if x.dim() != l.dim() {
            p.push("loss_set", format!("has dimension {} but the action set has {}", l.dim(), x.dim()));
        }
    }
    let adversary = b.adversary.unwrap_or(AdversaryKind::SignAdaptive);
    let seed = b.seed.unwrap_or(0);
    let job = match (reg, x, l, rounds) {
        (Some((regularizer, tag)), Some(x), Some(l), Some(rounds)) => {
            let digest = digest(&RunDigest {
                command: "run",
                regularizer: tag,
                action_set: x.description(),
                loss_set: l.description(),
                adversary,
                rounds,
                seed,
                inner,
            })?;
            Some(RunJob {
                regularizer,
                action_set: x,
                loss_set: l,
                adversary,
                rounds,
                seed,
                inner,
                trace_out: b.trace_out.clone(),
                report: b.report.clone(),
                digest,
            })
        }
        _ => None,
    };
    p.finish(job)
}

fn prepare_bench(b: &BenchBlock) -> Result<BenchJob, CliError> {
    let mut p = Problems::new("bench");
    let out_dir = p.require("out_dir", &b.out_dir);
    let suite = p.require("suite", &b.suite).and_then(|path| {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| p.push("suite", format!("cannot read {}: {e}", path.display())))
            .ok()?;
        let suite = match Suite::from_toml_str(&text) {
            Ok(s) => s,
            Err(regsynth::Error::Validation(v)) => {
                for m in v {
                    p.push("suite", m);
                }
                return None;
            }
            Err(e) => {
                p.push("suite", format!("{}: {e}", path.display()));
                return None;
            }
        };
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Some((suite, base))
    });
    let job = match (suite, out_dir) {
        (Some((suite, base)), Some(out_dir)) => {
            let digest = regsynth::bench::suite_digest(&suite, &base)?;
            Some(BenchJob {
                suite,
                base,
                out_dir,
                digest,
            })
        }
        _ => None,
    };
    p.finish(job)
}

#[derive(Serialize)]
struct CheckDigest<'a> {
    command: &'static str,
    regularizer: &'a str,
    action_set: &'a BodyDescription,
    loss_set: &'a BodyDescription,
    alpha: f64,
    samples: usize,
    seed: u64,
}

fn prepare_check(b: &CheckBlock) -> Result<CheckJob, CliError> {
    let mut p = Problems::new("check");
    let g = load_regularizer(&mut p, "regularizer", &b.regularizer);
    let x = p.body("action_set", &b.action_set);
    p.positive("alpha", b.alpha);
    p.at_least_one("samples", b.samples);
    let l = match (&b.loss_set, &g) {
        (Some(_), _) => p.body("loss_set", &b.loss_set),
        (None, Some((g, _))) => match &g.loss_body {
            Some(d) => ConvexBody::from_description(d).map_err(|e| p.push("loss_set", e)).ok(),
            None => {
                p.push("loss_set", "is required when the regularizer file records no loss set");
                None
            }
        },
        (None, None) => None,
    };
    if let (Some((g, _)), Some(x)) = (&g, &x) {
        if g.dim() != x.dim() {
            p.push("regularizer", format!("has dimension {} but the action set has {}", g.dim(), x.dim()));
        }
    }
    let job = match (g, x, l) {
        (Some((g, sha)), Some(x), Some(l)) => {
            let alpha = b.alpha.unwrap_or(g.alpha);
            let samples = b.samples.unwrap_or(DEFAULT_SAMPLES);
            let seed = b.seed.unwrap_or(0);
            let digest = digest(&CheckDigest {
                command: "check",
                regularizer: &sha,
                action_set: x.description(),
                loss_set: l.description(),
                alpha,
                samples,
                seed,
            })?;
            Some(CheckJob {
                regularizer: g,
                action_set: x,
                loss_set: l,
                alpha,
                samples,
                seed,
                report: b.report.clone(),
                digest,
            })
        }
        _ => None,
    };
    p.finish(job)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_unknown_key_is_named() {
        let text = "colour = 1\n[synthesize]\neps_bar = 0.1\n[run]\nround = 3\n";
        match RunConfig::from_toml_str(text) {
            Err(CliError::Invalid(v)) => {
                assert_eq!(v.len(), 3, "{v:?}");
                assert!(v.iter().any(|m| m.contains("synthesize.eps_bar")));
                assert!(v.iter().any(|m| m.contains("run.round")));
            }
            other => panic!("expected unknown-field errors, got {other:?}"),
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut cfg = RunConfig::from_toml_str("[run]\nregularizer = \"g.toml\"\naction_set = \"x.toml\"\n").unwrap();
        cfg.rebase(Path::new("/data"));
        assert_eq!(cfg.run.regularizer, Some(PathBuf::from("/data/g.toml")));
        assert_eq!(cfg.run.action_set, Some(BodySpec::File("/data/x.toml".into())));
    }

    #[test]
    fn inline_bodies_and_all_problems_at_once() {
        let text = r#"
[run]
baseline = "quadratic"
action_set = { kind = "euclidean-ball", dim = 2, params = { radius = 1.0 } }
rounds = 0
weight = -1.0
"#;
        let cfg = RunConfig::from_toml_str(text);
        let cfg = match cfg {
            Ok(c) => c,
            Err(e) => panic!("{e}"),
        };
        match prepare(&cfg, Command::Run) {
            Err(CliError::Invalid(v)) => {
                assert!(v.iter().any(|m| m.starts_with("run.loss_set")), "{v:?}");
                assert!(v.iter().any(|m| m.starts_with("run.rounds")), "{v:?}");
                assert!(v.iter().any(|m| m.starts_with("run.weight")), "{v:?}");
            }
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("invalid block accepted"),
        }
    }
}
