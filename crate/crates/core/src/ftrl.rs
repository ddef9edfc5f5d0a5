//! Follow-the-regularized-leader over an oracle-given action set.
//!
//! Round `t` plays a minimizer of `G_t(x) = g(x) + η ⟨x, L_t⟩` where `L_t`
//! is the sum of the losses observed so far and `η = 1/√T`. Equivalently
//! the regularizer is weighted by `1/η` against the cumulative loss.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::convex_sets::ConvexBody;
use crate::cutting_plane::{CuttingPlaneModel, FunctionView, KelleyOptions, KelleyOutcome};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, norm};
use crate::regularizer::PiecewiseRegularizer;

/// A regularizer usable by the FTRL loop.
pub trait Regularizer: FunctionView {
    /// `argmin_{x ∈ body} g(x) + ⟨linear, x⟩` when known in closed form.
    fn closed_form_argmin(&self, _linear: &[f64], _body: &ConvexBody) -> Option<Vec<f64>> {
        None
    }

    /// Upper estimate of `max g − min g` over the action set.
    fn range_hint(&self, body: &ConvexBody) -> Result<f64>;

    fn name(&self) -> String;
}

impl Regularizer for PiecewiseRegularizer {
    fn range_hint(&self, _body: &ConvexBody) -> Result<f64> {
        Ok(self.max_center_value().abs().max(1.0))
    }

    fn name(&self) -> String {
        "synthesized".into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    /// `½ c |x|²`.
    Quadratic { c: f64 },
    /// `Σ x_k log x_k`; probability simplex only.
    Entropy { dim: usize },
}

impl Baseline {
    pub fn quadratic(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Input(format!("quadratic weight must be positive, got {c}")));
        }
        Ok(Baseline::Quadratic { c })
    }

    pub fn entropy(body: &ConvexBody) -> Result<Self> {
        if !body.is_probability_simplex() {
            return Err(Error::Config(format!(
                "negative entropy needs the probability simplex as action set, got a {} body",
                body.kind()
            )));
        }
        Ok(Baseline::Entropy { dim: body.dim() })
    }
}

impl FunctionView for Baseline {
    fn dim(&self) -> usize {
        match self {
            Baseline::Quadratic { .. } => 0,
            Baseline::Entropy { dim } => *dim,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Baseline::Quadratic { c } => 0.5 * c * dot(x, x),
            Baseline::Entropy { .. } => x.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum(),
        }
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Baseline::Quadratic { c } => linalg::scale(x, *c),
            Baseline::Entropy { .. } => x.iter().map(|v| v.max(f64::MIN_POSITIVE).ln() + 1.0).collect(),
        }
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        match self {
            Baseline::Quadratic { c } => Some(DMatrix::identity(x.len(), x.len()) * *c),
            Baseline::Entropy { .. } => Some(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                x.len(),
                x.iter().map(|v| 1.0 / v),
            ))),
        }
    }
}

/// Quadratic baselines are dimension-free; this adapter pins the
/// dimension for the cutting-plane solver.
struct Pinned<'a> {
    inner: &'a dyn Regularizer,
    dim: usize,
}

impl FunctionView for Pinned<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }
    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.inner.subgradient(x)
    }
}

impl Regularizer for Baseline {
    fn closed_form_argmin(&self, linear: &[f64], body: &ConvexBody) -> Option<Vec<f64>> {
        match self {
            Baseline::Quadratic { c } => body.euclidean_projection(&linalg::scale(linear, -1.0 / c)),
            Baseline::Entropy { .. } => {
                let m = linear.iter().copied().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = linear.iter().map(|l| (m - l).exp()).collect();
                let s: f64 = w.iter().sum();
                Some(linalg::scale(&w, 1.0 / s))
            }
        }
    }

    fn range_hint(&self, body: &ConvexBody) -> Result<f64> {
        match self {
            Baseline::Quadratic { c } => {
                let r = body
                    .bounding_box()?
                    .iter()
                    .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
                    .sum::<f64>();
                Ok(0.5 * c * r)
            }
            Baseline::Entropy { dim } => Ok((*dim as f64).ln().max(1.0)),
        }
    }

    fn name(&self) -> String {
        match self {
            Baseline::Quadratic { c } => format!("quadratic(c={c})"),
            Baseline::Entropy { .. } => "entropy".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FtrlState {
    pub t: usize,
    pub cum_loss: Vec<f64>,
    pub eta: f64,
    pub horizon: usize,
}

impl FtrlState {
    /// Fresh state with `η = 1/√T`.
    pub fn new(dim: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Input("horizon must be at least 1".into()));
        }
        Ok(FtrlState {
            t: 0,
            cum_loss: vec![0.0; dim],
            eta: 1.0 / (horizon as f64).sqrt(),
            horizon,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerSolveConfig {
    /// Optimality gap relative to the range estimate of `G_t`.
    pub tol: f64,
    pub max_iter: usize,
    pub cache: usize,
}

impl Default for InnerSolveConfig {
    fn default() -> Self {
        InnerSolveConfig {
            tol: 1e-6,
            max_iter: 500,
            cache: 400,
        }
    }
}

impl InnerSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("inner tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("inner max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: Vec<f64>,
    /// Certified optimality gap; zero for closed forms.
    pub gap: f64,
    pub certified: bool,
}

/// Kelley's method on `f + ⟨linear, ·⟩` with an absolute tolerance.
pub fn inner_minimize(f: &dyn FunctionView, linear: &[f64], body: &ConvexBody, tol: f64) -> Result<KelleyOutcome> {
    let opts = KelleyOptions {
        tol,
        ..KelleyOptions::default()
    };
    crate::cutting_plane::minimize(Some(f), linear, body, &opts)
}

/// Solves FTRL steps for one regularizer and action set, keeping the
/// cutting-plane model of `g` between rounds.
pub struct FtrlLearner<'a> {
    g: &'a dyn Regularizer,
    body: &'a ConvexBody,
    cfg: InnerSolveConfig,
    range: f64,
    outer_radius: f64,
    model: Option<CuttingPlaneModel>,
}

impl<'a> FtrlLearner<'a> {
    pub fn new(g: &'a dyn Regularizer, body: &'a ConvexBody, cfg: InnerSolveConfig) -> Result<Self> {
        cfg.validate()?;
        let range = g.range_hint(body)?;
        let outer_radius = body
            .bounding_box()?
            .iter()
            .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(FtrlLearner {
            g,
            body,
            cfg,
            range,
            outer_radius,
            model: None,
        })
    }

    pub fn step(&mut self, state: &FtrlState) -> Result<StepOutcome> {
        check_dim(self.body.dim(), state.cum_loss.len())?;
        if state.t >= state.horizon {
            return Err(Error::Input(format!("round {} is past the horizon {}", state.t + 1, state.horizon)));
        }
        let linear = linalg::scale(&state.cum_loss, state.eta);
        if let Some(x) = self.g.closed_form_argmin(&linear, self.body) {
            return Ok(StepOutcome {
                x,
                gap: 0.0,
                certified: true,
            });
        }
        let tol = self.cfg.tol * (self.range + self.outer_radius * norm(&linear));
        let opts = KelleyOptions {
            tol,
            max_iter: self.cfg.max_iter,
            cache: self.cfg.cache,
            ..KelleyOptions::default()
        };
        let model = match &mut self.model {
            Some(m) => m,
            None => self.model.insert(CuttingPlaneModel::new(self.body, self.cfg.cache)?),
        };
        let pinned = Pinned {
            inner: self.g,
            dim: self.body.dim(),
        };
        let out = model.minimize(Some(&pinned), &linear, self.body, &opts)?;
        if !out.certified {
            log::warn!("FTRL step {} stopped with gap {:.3e} > {:.3e}", state.t + 1, out.gap(), tol);
        }
        Ok(StepOutcome {
            gap: out.gap(),
            certified: out.certified,
            x: out.x,
        })
    }
}

/// One FTRL step with a fresh model.
pub fn ftrl_step(state: &FtrlState, g: &dyn Regularizer, body: &ConvexBody, cfg: &InnerSolveConfig) -> Result<StepOutcome> {
    FtrlLearner::new(g, body, *cfg)?.step(state)
}

/// Adds `loss` to the state. A loss outside the loss set is still applied
/// and reported back as a warning.
pub fn observe_loss(state: &mut FtrlState, loss: &[f64], loss_body: &ConvexBody) -> Result<Option<String>> {
    check_dim(state.cum_loss.len(), loss.len())?;
    check_dim(loss_body.dim(), loss.len())?;
    let warning = if loss_body.membership(loss, 1e-9)? {
        None
    } else {
        let msg = format!("round {}: loss {:?} is outside the loss set", state.t + 1, loss);
        log::warn!("{msg}");
        Some(msg)
    };
    for (c, l) in state.cum_loss.iter_mut().zip(loss) {
        *c += l;
    }
    state.t += 1;
    Ok(warning)
}

/// Source of losses for the online loop.
pub trait LossSource {
    /// Loss for round `t` (0-based) after the learner committed to `x`.
    fn next_loss(&mut self, t: usize, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrace {
    pub actions: Vec<Vec<f64>>,
    pub losses: Vec<Vec<f64>>,
    /// Regret of every prefix.
    pub cumulative_regret: Vec<f64>,
    pub inner_gaps: Vec<f64>,
    pub uncertified_steps: usize,
    pub warnings: Vec<String>,
    pub eta: f64,
    pub digest: String,
    pub seed: u64,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    pub fn instantaneous_regret(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative_regret
            .iter()
            .map(|&r| {
                let d = r - prev;
                prev = r;
                d
            })
            .collect()
    }
}

/// Plays `horizon` rounds against `adversary`.
#[allow(clippy::too_many_arguments)]
pub fn run_ftrl(
    g: &dyn Regularizer,
    x_body: &ConvexBody,
    loss_body: &ConvexBody,
    adversary: &mut dyn LossSource,
    horizon: usize,
    cfg: &InnerSolveConfig,
    seed: u64,
    digest: String,
) -> Result<RegretTrace> {
    check_dim(x_body.dim(), loss_body.dim())?;
    let mut state = FtrlState::new(x_body.dim(), horizon)?;
    let mut learner = FtrlLearner::new(g, x_body, *cfg)?;
    let mut actions = Vec::with_capacity(horizon);
    let mut losses = Vec::with_capacity(horizon);
    let mut gaps = Vec::with_capacity(horizon);
    let mut warnings = Vec::new();
    let mut uncertified = 0;
    for t in 0..horizon {
        let step = learner.step(&state)?;
        if !step.certified {
            uncertified += 1;
        }
        let loss = adversary.next_loss(t, &step.x);
        if let Some(w) = observe_loss(&mut state, &loss, loss_body)? {
            warnings.push(w);
        }
        actions.push(step.x);
        losses.push(loss);
        gaps.push(step.gap);
    }
    let cumulative_regret = crate::bench::regret(&actions, &losses, x_body)?;
    Ok(RegretTrace {
        actions,
        losses,
        cumulative_regret,
        inner_gaps: gaps,
        uncertified_steps: uncertified,
        warnings,
        eta: state.eta,
        digest,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_sets::BodyDescription;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball(d: usize) -> ConvexBody {
        ConvexBody::from_description(&BodyDescription::euclidean_ball(d, 1.0)).unwrap()
    }

    fn state(cum: Vec<f64>, eta: f64) -> FtrlState {
        FtrlState {
            t: 0,
            horizon: 10,
            cum_loss: cum,
            eta,
        }
    }

    struct Fixed(Vec<Vec<f64>>);
    impl LossSource for Fixed {
        fn next_loss(&mut self, t: usize, _x: &[f64]) -> Vec<f64> {
            self.0[t % self.0.len()].clone()
        }
    }

    /// The quadratic baseline without its closed form, to exercise Kelley.
    struct OpaqueQuadratic;
    impl FunctionView for OpaqueQuadratic {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            0.5 * dot(x, x)
        }
        fn subgradient(&self, x: &[f64]) -> Vec<f64> {
            x.to_vec()
        }
    }
    impl Regularizer for OpaqueQuadratic {
        fn range_hint(&self, _body: &ConvexBody) -> Result<f64> {
            Ok(0.5)
        }
        fn name(&self) -> String {
            "opaque".into()
        }
    }

    #[test]
    fn quadratic_closed_forms() {
        let b = ball(2);
        let q = Baseline::quadratic(1.0).unwrap();
        let cfg = InnerSolveConfig::default();
        assert_eq!(ftrl_step(&state(vec![0.0, 0.0], 0.3), &q, &b, &cfg).unwrap().x, vec![0.0, 0.0]);
        assert_eq!(ftrl_step(&state(vec![0.3, -0.4], 1.0), &q, &b, &cfg).unwrap().x, vec![-0.3, 0.4]);
        let x = ftrl_step(&state(vec![3.0, 4.0], 1.0), &q, &b, &cfg).unwrap().x;
        assert!(linalg::distance(&x, &[-0.6, -0.8]) < 1e-15);
    }

    #[test]
    fn kelley_agrees_with_the_projection() {
        let b = ball(2);
        let cfg = InnerSolveConfig {
            tol: 1e-8,
            max_iter: 2_000,
            cache: 2_000,
        };
        let mut learner = FtrlLearner::new(&OpaqueQuadratic, &b, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // A value gap of tol bounds the distance by sqrt(2 * tol) for a 1-strongly-convex objective.
        for _ in 0..20 {
            let c: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = learner.step(&state(c.clone(), 1.0)).unwrap().x;
            let expect = b.euclidean_projection(&linalg::scale(&c, -1.0)).unwrap();
            assert!(linalg::distance(&x, &expect) < 1e-3, "{x:?} vs {expect:?}");
        }
    }

    #[test]
    fn entropy_requires_the_simplex() {
        assert!(Baseline::entropy(&ball(3)).is_err());
        let s = ConvexBody::from_description(&BodyDescription::simplex(3)).unwrap();
        let e = Baseline::entropy(&s).unwrap();
        let x = e.closed_form_argmin(&[0.0, 0.0, 0.0], &s).unwrap();
        assert!(x.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let x = e.closed_form_argmin(&[1.0, 0.0, 2.0], &s).unwrap();
        let z = 1.0 + (-1f64).exp() + (-2f64).exp();
        assert!((x[1] - 1.0 / z).abs() < 1e-15);
    }

    #[test]
    fn observing_losses() {
        let b = ball(2);
        let mut s = FtrlState::new(2, 5).unwrap();
        assert!(observe_loss(&mut s, &[0.0, 0.0], &b).unwrap().is_none());
        assert_eq!((s.t, s.cum_loss.clone()), (1, vec![0.0, 0.0]));
        observe_loss(&mut s, &[0.5, 0.0], &b).unwrap();
        observe_loss(&mut s, &[0.25, -0.5], &b).unwrap();
        assert_eq!(s.cum_loss, vec![0.75, -0.5]);
        let w = observe_loss(&mut s, &[2.0, 0.0], &b).unwrap();
        assert!(w.is_some());
        assert_eq!(s.t, 4);
        assert_eq!(s.cum_loss, vec![2.75, -0.5]);
        assert!(observe_loss(&mut s, &[1.0], &b).is_err());
    }

    #[test]
    fn short_and_silent_runs() {
        let b = ball(2);
        let q = Baseline::quadratic(1.0).unwrap();
        let cfg = InnerSolveConfig::default();
        let tr = run_ftrl(&q, &b, &b, &mut Fixed(vec![vec![0.6, 0.0]]), 1, &cfg, 0, String::new()).unwrap();
        assert_eq!(tr.actions.len(), 1);
        // x₁ = 0, best response −e₁ gives −0.6.
        assert!((tr.final_regret() - 0.6).abs() < 1e-12);
        let tr = run_ftrl(&q, &b, &b, &mut Fixed(vec![vec![0.0, 0.0]]), 50, &cfg, 0, String::new()).unwrap();
        assert!(tr.cumulative_regret.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let b = ball(2);
        let cfg = InnerSolveConfig::default();
        let losses = vec![vec![1.0, 0.0], vec![0.0, -1.0], vec![-0.6, 0.8]];
        let a = run_ftrl(&OpaqueQuadratic, &b, &b, &mut Fixed(losses.clone()), 30, &cfg, 1, "d".into()).unwrap();
        let c = run_ftrl(&OpaqueQuadratic, &b, &b, &mut Fixed(losses), 30, &cfg, 1, "d".into()).unwrap();
        assert_eq!(a, c);
        assert!(a.cumulative_regret.iter().all(|&r| r >= -1e-6));
    }
}
