//! Adversaries, regret accounting, rate estimates and suite comparisons.
//!
//! The adversary suite is a construction of this crate, not a reference
//! benchmark: losses are drawn from a fixed list of extreme points of the
//! loss set.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::convex_sets::{BodyDescription, ConvexBody};
use crate::error::{check_dim, Error, Result};
use crate::ftrl::{self, Baseline, InnerSolveConfig, LossSource, Regularizer};
use crate::linalg::{self, dot};
use crate::regularizer::PiecewiseRegularizer;
use crate::synthesis::{self, Overrides};

/// Accuracy passed to linear oracles when computing regret.
pub const REGRET_DELTA_LIN: f64 = 1e-9;

/// Ratio of the last to the first horizon's rate above which the estimate
/// is flagged as not converging.
pub const CONVERGENCE_RATIO: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    /// Uniform draws from the extreme list.
    IidExtreme,
    /// The extreme loss most aligned with the current action.
    SignAdaptive,
    /// Half of the first extreme loss, then alternating between the second
    /// and the first.
    FollowLeaderTrap,
}

impl AdversaryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdversaryKind::IidExtreme => "iid-extreme",
            AdversaryKind::SignAdaptive => "sign-adaptive",
            AdversaryKind::FollowLeaderTrap => "follow-leader-trap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "iid-extreme" => Ok(AdversaryKind::IidExtreme),
            "sign-adaptive" => Ok(AdversaryKind::SignAdaptive),
            "follow-leader-trap" => Ok(AdversaryKind::FollowLeaderTrap),
            other => Err(Error::Config(format!(
                "unknown adversary {other:?}; expected iid-extreme, sign-adaptive or follow-leader-trap"
            ))),
        }
    }
}

/// `±e_k / |±e_k|_L` for every axis, skipping directions the loss set does
/// not extend into.
pub fn extreme_losses(loss_body: &ConvexBody) -> Result<Vec<Vec<f64>>> {
    let d = loss_body.dim();
    let mut out = Vec::with_capacity(2 * d);
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[k] = s;
            let gauge = loss_body.gauge(&e, 1e-12)?;
            if gauge.is_finite() && gauge > 0.0 {
                out.push(linalg::scale(&e, 1.0 / gauge));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Input("loss set contains no nonzero axis direction".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Adversary {
    pub kind: AdversaryKind,
    pub seed: u64,
    pub extremes: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl Adversary {
    pub fn new(kind: AdversaryKind, loss_body: &ConvexBody, seed: u64) -> Result<Self> {
        Ok(Adversary {
            kind,
            seed,
            extremes: extreme_losses(loss_body)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl LossSource for Adversary {
    fn next_loss(&mut self, t: usize, x: &[f64]) -> Vec<f64> {
        match self.kind {
            AdversaryKind::IidExtreme => {
                let k = self.rng.gen_range(0..self.extremes.len());
                self.extremes[k].clone()
            }
            AdversaryKind::SignAdaptive => {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (k, l) in self.extremes.iter().enumerate() {
                    let v = dot(x, l);
                    if v > best_val {
                        best = k;
                        best_val = v;
                    }
                }
                self.extremes[best].clone()
            }
            AdversaryKind::FollowLeaderTrap => {
                let first = &self.extremes[0];
                let second = self.extremes.get(1).unwrap_or(first);
                if t == 0 {
                    linalg::scale(first, 0.5)
                } else if t % 2 == 1 {
                    second.clone()
                } else {
                    first.clone()
                }
            }
        }
    }
}

/// Minimizer of `⟨cum_loss, ·⟩` over `x_body`; any member point when the
/// loss is zero.
pub fn best_fixed_action(cum_loss: &[f64], x_body: &ConvexBody, delta_lin: f64) -> Result<Vec<f64>> {
    check_dim(x_body.dim(), cum_loss.len())?;
    if cum_loss.iter().all(|&v| v == 0.0) {
        return x_body.retract(&x_body.anchor());
    }
    x_body.linear_minimize(cum_loss, delta_lin)
}

/// Regret of every prefix: the learner's loss minus that of the best fixed
/// action for the prefix's total loss.
pub fn regret(actions: &[Vec<f64>], losses: &[Vec<f64>], x_body: &ConvexBody) -> Result<Vec<f64>> {
    if actions.len() != losses.len() {
        return Err(Error::Input(format!(
            "{} actions but {} losses",
            actions.len(),
            losses.len()
        )));
    }
    let d = x_body.dim();
    let mut cum = vec![0.0; d];
    let mut played = 0.0;
    let mut out = Vec::with_capacity(actions.len());
    for (x, l) in actions.iter().zip(losses) {
        check_dim(d, x.len())?;
        check_dim(d, l.len())?;
        played += dot(x, l);
        for (c, v) in cum.iter_mut().zip(l) {
            *c += v;
        }
        let best = best_fixed_action(&cum, x_body, REGRET_DELTA_LIN)?;
        out.push(played - dot(&best, &cum));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub horizon: usize,
    pub adversary: String,
    pub seed: u64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub horizon: usize,
    /// Largest mean of `regret/√T` over adversaries.
    pub rate: f64,
    pub adversary: String,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    /// Rate at the largest horizon.
    pub headline: f64,
    pub table: Vec<RateRow>,
    /// Last over first rate.
    pub trend: f64,
    pub converging: bool,
}

/// Per-horizon worst-adversary mean of `regret/√T`.
pub fn rate_estimate(points: &[RegretPoint]) -> Result<RateEstimate> {
    let mut groups: BTreeMap<usize, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for p in points {
        groups
            .entry(p.horizon)
            .or_default()
            .entry(p.adversary.as_str())
            .or_default()
            .push(p.regret / (p.horizon as f64).sqrt());
    }
    if groups.len() < 2 {
        return Err(Error::Validation(vec![format!(
            "rate estimate needs at least 2 horizons, got {}",
            groups.len()
        )]));
    }
    let mut problems = Vec::new();
    let mut table = Vec::new();
    for (&horizon, by_adv) in &groups {
        let mut best: Option<(f64, &str, usize)> = None;
        for (&adv, vals) in by_adv {
            if vals.len() < 2 {
                problems.push(format!("horizon {horizon}, adversary {adv}: {} seed(s), need 2", vals.len()));
            }
            let m = mean(vals);
            if best.is_none_or(|b| m > b.0) {
                best = Some((m, adv, vals.len()));
            }
        }
        let (rate, adv, seeds) = best.expect("nonempty group");
        table.push(RateRow {
            horizon,
            rate,
            adversary: adv.to_string(),
            seeds,
        });
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let first = table[0].rate;
    let last = table[table.len() - 1].rate;
    let trend = if first > 0.0 { last / first } else { f64::INFINITY };
    Ok(RateEstimate {
        headline: last,
        converging: trend <= CONVERGENCE_RATIO,
        trend,
        table,
    })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// A body inline or in a separate file (relative to the suite file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BodySpec {
    File(String),
    Inline(BodyDescription),
}

impl BodySpec {
    pub fn load(&self, base: &Path) -> Result<ConvexBody> {
        match self {
            BodySpec::File(p) => ConvexBody::load(&base.join(p)),
            BodySpec::Inline(d) => ConvexBody::from_description(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub name: String,
    pub action_set: BodySpec,
    pub loss_set: BodySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegularizerSpec {
    Quadratic {
        name: String,
        #[serde(default = "one")]
        c: f64,
    },
    Entropy {
        name: String,
    },
    File {
        name: String,
        path: String,
    },
    /// Synthesized per instance by the doubling search.
    Synthesize {
        name: String,
        #[serde(default = "one")]
        c_low: f64,
        #[serde(default)]
        overrides: Overrides,
    },
}

fn one() -> f64 {
    1.0
}

impl RegularizerSpec {
    pub fn name(&self) -> &str {
        match self {
            RegularizerSpec::Quadratic { name, .. }
            | RegularizerSpec::Entropy { name }
            | RegularizerSpec::File { name, .. }
            | RegularizerSpec::Synthesize { name, .. } => name,
        }
    }
}

/// Seeds listed explicitly or as a count `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub horizons: Vec<usize>,
    pub seeds: SeedSpec,
    pub adversaries: Vec<AdversaryKind>,
    #[serde(default)]
    pub inner: Option<InnerSpec>,
    #[serde(rename = "instance")]
    pub instances: Vec<InstanceSpec>,
    #[serde(rename = "regularizer")]
    pub regularizers: Vec<RegularizerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerSpec {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub cache: Option<usize>,
}

impl InnerSpec {
    pub fn resolve(spec: Option<InnerSpec>) -> InnerSolveConfig {
        let d = InnerSolveConfig::default();
        match spec {
            None => d,
            Some(s) => InnerSolveConfig {
                tol: s.tol.unwrap_or(d.tol),
                max_iter: s.max_iter.unwrap_or(d.max_iter),
                cache: s.cache.unwrap_or(d.cache),
            },
        }
    }
}

impl Suite {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let suite: Suite = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let problems = suite.violations();
        if problems.is_empty() {
            Ok(suite)
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            out.push("horizons must be a nonempty list of positive integers".into());
        }
        if self.seeds.seeds().is_empty() {
            out.push("seeds must not be empty".into());
        }
        if self.adversaries.is_empty() {
            out.push("adversaries must not be empty".into());
        }
        if self.instances.is_empty() {
            out.push("at least one [[instance]] is required".into());
        }
        if self.regularizers.is_empty() {
            out.push("at least one [[regularizer]] is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for i in &self.instances {
            if !names.insert(("instance", i.name.clone())) {
                out.push(format!("duplicate instance name {:?}", i.name));
            }
        }
        for r in &self.regularizers {
            if !names.insert(("regularizer", r.name().to_string())) {
                out.push(format!("duplicate regularizer name {:?}", r.name()));
            }
        }
        if let Err(e) = InnerSpec::resolve(self.inner).validate() {
            out.push(e.to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub regularizer: String,
    pub instance: String,
    pub adversary: AdversaryKind,
    pub horizon: usize,
    pub seed: u64,
    /// `Ok(trace summary)` or the failure message.
    pub outcome: std::result::Result<RunSummary, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_regret: f64,
    pub max_inner_gap: f64,
    pub uncertified_steps: usize,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub regularizer: String,
    pub instance: String,
    pub adversary: AdversaryKind,
    pub horizon: usize,
    pub runs: usize,
    pub mean_regret: f64,
    pub sd_regret: f64,
    pub mean_rate: f64,
    pub sd_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub digest: String,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    /// Per regularizer and instance; `Err` when the data are insufficient.
    pub rates: Vec<(String, String, std::result::Result<RateEstimate, String>)>,
    pub failures: usize,
}

impl CompareReport {
    pub fn summary_row(&self, regularizer: &str, instance: &str, adversary: AdversaryKind, horizon: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            r.regularizer == regularizer && r.instance == instance && r.adversary == adversary && r.horizon == horizon
        })
    }
}

enum Prepared {
    Baseline(Baseline),
    Piecewise(PiecewiseRegularizer),
}

impl Prepared {
    fn as_regularizer(&self) -> &dyn Regularizer {
        match self {
            Prepared::Baseline(b) => b,
            Prepared::Piecewise(p) => p,
        }
    }
}

fn prepare(spec: &RegularizerSpec, x: &ConvexBody, l: &ConvexBody, base: &Path) -> Result<Prepared> {
    Ok(match spec {
        RegularizerSpec::Quadratic { c, .. } => Prepared::Baseline(Baseline::quadratic(*c)?),
        RegularizerSpec::Entropy { .. } => Prepared::Baseline(Baseline::entropy(x)?),
        RegularizerSpec::File { path, .. } => {
            let g = PiecewiseRegularizer::load(&base.join(path))?;
            check_dim(x.dim(), g.dim())?;
            Prepared::Piecewise(g)
        }
        RegularizerSpec::Synthesize { c_low, overrides, .. } => {
            let out = synthesis::solve_with_doubling(x, l, overrides, *c_low)?;
            Prepared::Piecewise(synthesis::assemble_regularizer(
                &out.outcome.instance,
                &out.outcome.grid,
                &out.config,
                l,
                format!("synthesized for the bench suite at C = {}", out.c_final),
            )?)
        }
    })
}

/// Digest of the suite and of the contents of every file it references;
/// unreadable files contribute their error text.
pub fn suite_digest(suite: &Suite, base: &Path) -> Result<String> {
    let mut paths: Vec<&str> = Vec::new();
    for i in &suite.instances {
        for b in [&i.action_set, &i.loss_set] {
            if let BodySpec::File(p) = b {
                paths.push(p);
            }
        }
    }
    for r in &suite.regularizers {
        if let RegularizerSpec::File { path, .. } = r {
            paths.push(path);
        }
    }
    paths.sort_unstable();
    paths.dedup();
    let files: Vec<(&str, String)> = paths
        .into_iter()
        .map(|p| {
            let content = match std::fs::read(base.join(p)) {
                Ok(bytes) => config::digest(&bytes),
                Err(e) => Ok(format!("unreadable: {e}")),
            };
            content.map(|c| (p, c))
        })
        .collect::<Result<_>>()?;
    config::digest(&(suite, files))
}

/// Runs the cross product of the suite. Individual failures are recorded
/// in the report, not returned.
pub fn compare(suite: &Suite, base: &Path) -> Result<CompareReport> {
    let problems = suite.violations();
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let digest = suite_digest(suite, base)?;
    let inner = InnerSpec::resolve(suite.inner);
    let seeds = suite.seeds.seeds();

    let bodies: Vec<std::result::Result<(ConvexBody, ConvexBody), String>> = suite
        .instances
        .iter()
        .map(|i| {
            let x = i.action_set.load(base).map_err(|e| e.to_string())?;
            let l = i.loss_set.load(base).map_err(|e| e.to_string())?;
            if x.dim() != l.dim() {
                return Err(format!("action set has dimension {}, loss set {}", x.dim(), l.dim()));
            }
            Ok((x, l))
        })
        .collect();

    // (regularizer, instance) pairs, prepared once and shared by all runs.
    let pairs: Vec<(usize, usize)> = (0..suite.regularizers.len())
        .flat_map(|r| (0..suite.instances.len()).map(move |i| (r, i)))
        .collect();
    let prepared: Vec<std::result::Result<Prepared, String>> = pairs
        .par_iter()
        .map(|&(r, i)| match &bodies[i] {
            Ok((x, l)) => prepare(&suite.regularizers[r], x, l, base).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        })
        .collect();

    let mut jobs = Vec::new();
    for (p, &(r, i)) in pairs.iter().enumerate() {
        for &adv in &suite.adversaries {
            for &h in &suite.horizons {
                for &s in &seeds {
                    jobs.push((p, r, i, adv, h, s));
                }
            }
        }
    }
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .enumerate()
        .map(|(run_id, &(p, r, i, adv, h, s))| {
            let outcome = (|| -> std::result::Result<RunSummary, String> {
                let g = prepared[p].as_ref().map_err(|e| e.clone())?;
                let (x, l) = bodies[i].as_ref().map_err(|e| e.clone())?;
                let mut adversary = Adversary::new(adv, l, s).map_err(|e| e.to_string())?;
                let trace = ftrl::run_ftrl(g.as_regularizer(), x, l, &mut adversary, h, &inner, s, digest.clone())
                    .map_err(|e| e.to_string())?;
                Ok(RunSummary {
                    final_regret: trace.final_regret(),
                    max_inner_gap: trace.inner_gaps.iter().copied().fold(0.0, f64::max),
                    uncertified_steps: trace.uncertified_steps,
                    warnings: trace.warnings.len(),
                })
            })();
            RunRecord {
                run_id,
                regularizer: suite.regularizers[r].name().to_string(),
                instance: suite.instances[i].name.clone(),
                adversary: adv,
                horizon: h,
                seed: s,
                outcome,
            }
        })
        .collect();

    let failures = runs.iter().filter(|r| r.outcome.is_err()).count();
    let mut groups: BTreeMap<(usize, usize, AdversaryKind, usize), Vec<f64>> = BTreeMap::new();
    let mut points: BTreeMap<(usize, usize), Vec<RegretPoint>> = BTreeMap::new();
    for (run, &(p, ..)) in runs.iter().zip(&jobs) {
        if let Ok(sum) = &run.outcome {
            let (r, i) = pairs[p];
            groups
                .entry((r, i, run.adversary, run.horizon))
                .or_default()
                .push(sum.final_regret);
            points.entry((r, i)).or_default().push(RegretPoint {
                horizon: run.horizon,
                adversary: run.adversary.as_str().to_string(),
                seed: run.seed,
                regret: sum.final_regret,
            });
        }
    }
    let summary = groups
        .into_iter()
        .map(|((r, i, adv, h), regrets)| {
            let rates: Vec<f64> = regrets.iter().map(|v| v / (h as f64).sqrt()).collect();
            SummaryRow {
                regularizer: suite.regularizers[r].name().to_string(),
                instance: suite.instances[i].name.clone(),
                adversary: adv,
                horizon: h,
                runs: regrets.len(),
                mean_regret: mean(&regrets),
                sd_regret: std_dev(&regrets),
                mean_rate: mean(&rates),
                sd_rate: std_dev(&rates),
            }
        })
        .collect();
    let rates = pairs
        .iter()
        .map(|&(r, i)| {
            let est = points
                .get(&(r, i))
                .map_or_else(|| Err("no successful runs".to_string()), |p| rate_estimate(p).map_err(|e| e.to_string()));
            (suite.regularizers[r].name().to_string(), suite.instances[i].name.clone(), est)
        })
        .collect();
    Ok(CompareReport {
        digest,
        runs,
        summary,
        rates,
        failures,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn digest_line(out: &mut impl Write, digest: &str) -> Result<()> {
    writeln!(out, "# regsynth config_digest={digest}")?;
    Ok(())
}

fn csv_writer(path: &Path, digest: &str) -> Result<csv::Writer<std::fs::File>> {
    let mut f = std::fs::File::create(path)?;
    digest_line(&mut f, digest)?;
    Ok(csv::Writer::from_writer(f))
}

/// Writes `runs.csv`, `summary.csv`, `rates.csv`, `summary.dat` and
/// `meta.toml` into `out_dir`; returns the written paths.
pub fn write_report(report: &CompareReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let d = &report.digest;
    let mut written = Vec::new();

    let path = out_dir.join("runs.csv");
    let mut w = csv_writer(&path, d)?;
    w.write_record([
        "run_id",
        "regularizer",
        "instance",
        "adversary",
        "horizon",
        "seed",
        "status",
        "final_regret",
        "regret_over_sqrt_t",
        "max_inner_gap",
        "uncertified_steps",
        "loss_warnings",
        "error",
        "config_digest",
    ])
    .map_err(csv_err)?;
    for r in &report.runs {
        let common = [
            r.run_id.to_string(),
            r.regularizer.clone(),
            r.instance.clone(),
            r.adversary.as_str().to_string(),
            r.horizon.to_string(),
            r.seed.to_string(),
        ];
        let tail = match &r.outcome {
            Ok(s) => [
                "ok".to_string(),
                s.final_regret.to_string(),
                (s.final_regret / (r.horizon as f64).sqrt()).to_string(),
                s.max_inner_gap.to_string(),
                s.uncertified_steps.to_string(),
                s.warnings.to_string(),
                String::new(),
            ],
            Err(e) => [
                "failed".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ],
        };
        w.write_record(common.iter().chain(tail.iter()).chain(std::iter::once(d)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = out_dir.join("summary.csv");
    let mut w = csv_writer(&path, d)?;
    w.write_record([
        "regularizer",
        "instance",
        "adversary",
        "horizon",
        "runs",
        "mean_regret",
        "sd_regret",
        "mean_regret_over_sqrt_t",
        "sd_regret_over_sqrt_t",
    ])
    .map_err(csv_err)?;
    for s in &report.summary {
        w.write_record([
            s.regularizer.clone(),
            s.instance.clone(),
            s.adversary.as_str().to_string(),
            s.horizon.to_string(),
            s.runs.to_string(),
            s.mean_regret.to_string(),
            s.sd_regret.to_string(),
            s.mean_rate.to_string(),
            s.sd_rate.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = out_dir.join("rates.csv");
    let mut w = csv_writer(&path, d)?;
    w.write_record(["regularizer", "instance", "horizon", "rate", "worst_adversary", "headline", "trend", "converging", "error"])
        .map_err(csv_err)?;
    for (reg, inst, est) in &report.rates {
        match est {
            Ok(e) => {
                for row in &e.table {
                    w.write_record([
                        reg.clone(),
                        inst.clone(),
                        row.horizon.to_string(),
                        row.rate.to_string(),
                        row.adversary.clone(),
                        e.headline.to_string(),
                        e.trend.to_string(),
                        e.converging.to_string(),
                        String::new(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            Err(msg) => {
                w.write_record([reg.clone(), inst.clone(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), msg.clone()])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    written.push(path);

    // gnuplot: one indexed block per (regularizer, instance, adversary).
    let path = out_dir.join("summary.dat");
    let mut f = std::fs::File::create(&path)?;
    digest_line(&mut f, d)?;
    writeln!(f, "# columns: horizon mean_regret sd_regret mean_regret_over_sqrt_t sd_regret_over_sqrt_t")?;
    let mut current: Option<(&str, &str, AdversaryKind)> = None;
    for s in &report.summary {
        let key = (s.regularizer.as_str(), s.instance.as_str(), s.adversary);
        if current != Some(key) {
            if current.is_some() {
                writeln!(f, "\n")?;
            }
            writeln!(f, "# {} {} {}", s.regularizer, s.instance, s.adversary.as_str())?;
            current = Some(key);
        }
        writeln!(f, "{} {} {} {} {}", s.horizon, s.mean_regret, s.sd_regret, s.mean_rate, s.sd_rate)?;
    }
    written.push(path);

    let path = out_dir.join("meta.toml");
    let mut meta = toml::Table::new();
    meta.insert("config_digest".into(), d.clone().into());
    meta.insert("regsynth_version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("runs".into(), (report.runs.len() as i64).into());
    meta.insert("failures".into(), (report.failures as i64).into());
    meta.insert(
        "adversaries".into(),
        "extreme-point adversaries constructed by regsynth; sign-adaptive reacts to the current action".into(),
    );
    meta.insert("regret".into(), "learner loss minus the best fixed action's total loss".into());
    std::fs::write(&path, toml::to_string(&meta).map_err(|e| Error::Parse(e.to_string()))?)?;
    written.push(path);
    Ok(written)
}
