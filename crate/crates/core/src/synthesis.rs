//! The regularizer synthesis program.
//!
//! Unknowns are a value bound `r` and, for every grid center `x_i`, a value
//! `r_i`, a gradient `v_i` and a symmetric Hessian `Σ_i`. The program
//! minimizes `r` subject to
//!
//! * pair cuts `r_i + ⟨v_i, Δ⟩ + ½ΔᵀΣ_iΔ − κL|Δ|³ ≤ r_j` for `Δ = x_j − x_i`,
//! * `|v_i|_∞ ≤ c0`, `0 ≤ r_i ≤ r ≤ C0`,
//! * `Σ_i ≼ c2 I`, enforced by eigenvector cuts,
//! * `ṽᵀΣ_iṽ ≥ α h(ṽ)²` for the support function `h` of the loss set,
//!   enforced by cuts over a sphere cover.
//!
//! Every constraint is linear in the unknowns, so the program is an LP with
//! lazily generated rows. Rows are added to the previous optimal basis and
//! re-solved by dual simplex until no cut is violated.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex_sets::{self, ConvexBody, SphereCover};
use crate::error::{Error, InfeasibilityCertificate, Result};
use crate::linalg::{self, dot, norm};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::regularizer::{PiecewiseRegularizer, QuasiQuadraticPiece};
use crate::verify;

/// Doublings of the value scale tried before giving up.
pub const MAX_DOUBLINGS: usize = 20;

/// Coefficient `κ` of `L|Δ|³` in the pair cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PairMargin {
    /// `κ = 17/96`.
    #[default]
    Program,
    /// `κ = 1/96`: a neighbor's piece stays `15L/96 |Δ|³` below `r_j`.
    LocalityCondition,
}

impl PairMargin {
    pub fn kappa(self) -> f64 {
        match self {
            PairMargin::Program => 17.0 / 96.0,
            PairMargin::LocalityCondition => 1.0 / 96.0,
        }
    }
}

/// User-supplied values that take precedence over the calibrated ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub eps_bar: Option<f64>,
    pub eps: Option<f64>,
    #[serde(rename = "L")]
    pub cubic_l: Option<f64>,
    pub alpha: Option<f64>,
    pub c0: Option<f64>,
    pub c2: Option<f64>,
    #[serde(rename = "C0")]
    pub value_bound: Option<f64>,
    /// Requested final strong-convexity margin; sets `delta_m`.
    pub delta: Option<f64>,
    pub delta_m: Option<f64>,
    pub delta_lin: Option<f64>,
    pub eps_tilde: Option<f64>,
    pub solver_tol: Option<f64>,
    pub max_rounds: Option<usize>,
    pub cuts_per_center: Option<usize>,
    pub pair_margin: Option<PairMargin>,
    pub grid_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub c_guess: f64,
    pub eps_bar: f64,
    pub eps: f64,
    #[serde(rename = "L")]
    pub cubic_l: f64,
    pub alpha: f64,
    pub c0: f64,
    pub c2: f64,
    #[serde(rename = "C0")]
    pub value_bound: f64,
    pub delta_m: f64,
    pub delta_lin: f64,
    pub eps_tilde: f64,
    pub solver_tol: f64,
    pub max_rounds: usize,
    pub cuts_per_center: usize,
    pub pair_margin: PairMargin,
    pub grid_budget: usize,
    /// Common inner and outer radii of the two bodies.
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub loss_r: f64,
    #[serde(rename = "loss_R")]
    pub loss_big_r: f64,
    /// Grid spacing the worst-case analysis asks for, with unit constants.
    pub theoretical_eps_bar: f64,
    /// `4 (ε √d c0 / L)^{1/3}`.
    pub locality_radius: f64,
}

pub const DEFAULT_EPS_BAR: f64 = 0.25;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_DELTA: f64 = 0.5;

/// Fills the constants from the value scale `c_guess` with unit universal
/// constants; `overrides` win.
pub fn calibrate_constants(
    x_body: &ConvexBody,
    loss_body: &ConvexBody,
    c_guess: f64,
    overrides: &Overrides,
) -> Result<SynthesisConfig> {
    if !(c_guess > 0.0 && c_guess.is_finite()) {
        return Err(Error::Config(format!("C guess must be positive, got {c_guess}")));
    }
    if x_body.dim() != loss_body.dim() {
        return Err(Error::Dimension {
            expected: x_body.dim(),
            got: loss_body.dim(),
        });
    }
    x_body.require_symmetric()?;
    loss_body.require_symmetric()?;
    let mx = x_body.inner_outer_radii()?;
    let ml = loss_body.inner_outer_radii()?;
    let r = mx.r_inner.min(ml.r_inner);
    let big_r = mx.r_outer.max(ml.r_outer);
    let d = x_body.dim() as f64;
    let c2sq = c_guess * c_guess;

    let eps_bar = overrides.eps_bar.unwrap_or(DEFAULT_EPS_BAR * mx.r_inner);
    let cubic_l = overrides.cubic_l.unwrap_or(c2sq * d.powf(0.75) / r.powi(3));
    let tilde_c1 = c2sq * d.powf(0.25) / r;
    let tilde_c2 = c2sq * d.sqrt() / (r * r);
    let cube = cubic_l * eps_bar.powi(3);
    let c0 = overrides.c0.unwrap_or(tilde_c1 + cube);
    let c2 = overrides.c2.unwrap_or(tilde_c2 + cube);
    let value_bound = overrides.value_bound.unwrap_or(c2sq + cube);
    let alpha = overrides.alpha.unwrap_or(DEFAULT_ALPHA);
    let delta = overrides.delta.unwrap_or(DEFAULT_DELTA);
    let delta_m = overrides
        .delta_m
        .unwrap_or(delta / (2.0 * alpha * ml.r_outer * ml.r_outer));
    let delta_lin = overrides
        .delta_lin
        .unwrap_or(delta_m * ml.r_inner.min(1.0) / 4.0);
    let eps_tilde = overrides
        .eps_tilde
        .unwrap_or((alpha * ml.r_inner.powi(3) * delta_m / (c2 * ml.r_outer)).min(0.5));
    let eps = overrides.eps.unwrap_or(d.sqrt() * eps_bar);
    let theoretical_eps_bar = r.powi(6) / (big_r.powi(6) * c_guess.powi(6) * d * d * d.sqrt());
    let locality_radius = 4.0 * (eps * d.sqrt() * c0 / cubic_l).cbrt();

    let cfg = SynthesisConfig {
        c_guess,
        eps_bar,
        eps,
        cubic_l,
        alpha,
        c0,
        c2,
        value_bound,
        delta_m,
        delta_lin,
        eps_tilde,
        solver_tol: overrides.solver_tol.unwrap_or(1e-7),
        max_rounds: overrides.max_rounds.unwrap_or(200),
        cuts_per_center: overrides.cuts_per_center.unwrap_or(2),
        pair_margin: overrides.pair_margin.unwrap_or_default(),
        grid_budget: overrides.grid_budget.unwrap_or(2_000),
        r,
        big_r,
        loss_r: ml.r_inner,
        loss_big_r: ml.r_outer,
        theoretical_eps_bar,
        locality_radius,
    };
    let problems = cfg.violations();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(problems))
    }
}

impl SynthesisConfig {
    /// Every violated invariant, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let named = [
            ("c_guess", self.c_guess),
            ("eps_bar", self.eps_bar),
            ("eps", self.eps),
            ("L", self.cubic_l),
            ("alpha", self.alpha),
            ("c0", self.c0),
            ("c2", self.c2),
            ("C0", self.value_bound),
            ("delta_m", self.delta_m),
            ("delta_lin", self.delta_lin),
            ("eps_tilde", self.eps_tilde),
            ("solver_tol", self.solver_tol),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.max_rounds == 0 {
            out.push("max_rounds must be at least 1".into());
        }
        if self.cuts_per_center == 0 {
            out.push("cuts_per_center must be at least 1".into());
        }
        let slack = 1.0 + 1e-12;
        let lin_cap = (self.delta_m / 4.0).min(self.loss_r * self.delta_m / 2.0);
        if self.delta_lin > lin_cap * slack {
            out.push(format!(
                "delta_lin = {} exceeds min(delta_m/4, r delta_m/2) = {lin_cap}",
                self.delta_lin
            ));
        }
        let cover_cap = self.alpha * self.loss_r.powi(3) * self.delta_m / (self.c2 * self.loss_big_r);
        if self.eps_tilde > cover_cap * slack {
            out.push(format!(
                "eps_tilde = {} exceeds alpha r^3 delta_m / (c2 R) = {cover_cap}",
                self.eps_tilde
            ));
        }
        out
    }

    /// Reason the strong-convexity rows can never meet the Hessian bound.
    pub fn precheck(&self) -> Option<String> {
        let need = self.alpha * (1.0 + self.delta_m) * self.loss_r * self.loss_r;
        if need > self.c2 {
            Some(format!(
                "alpha (1 + delta_m) r^2 = {need} exceeds the Hessian bound c2 = {}",
                self.c2
            ))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationGrid {
    pub centers: Vec<Vec<f64>>,
    pub spacing: f64,
}

impl DiscretizationGrid {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Lattice points `k ε̄` inside `[−R, R]^d` that belong to `x_body`, in
/// lexicographic order of `k`.
pub fn discretize_action_set(x_body: &ConvexBody, eps_bar: f64, budget: usize) -> Result<DiscretizationGrid> {
    if !(eps_bar > 0.0 && eps_bar.is_finite()) {
        return Err(Error::Config(format!("grid spacing must be positive, got {eps_bar}")));
    }
    let d = x_body.dim();
    let big_r = x_body.inner_outer_radii()?.r_outer;
    let kmax = (big_r / eps_bar * (1.0 + 1e-12)).floor() as i64;
    let side = (2 * kmax + 1) as f64;
    let boxed = side.powi(d as i32);
    // Volume ratio of the body to its bounding box is at least that of the
    // inscribed ball, so the box count over-estimates N by a bounded factor.
    if boxed > (budget as f64) * 64.0 {
        return Err(Error::Resource {
            what: format!("grid with spacing {eps_bar}"),
            estimate: boxed,
        });
    }
    let boundary = 1e-12 * big_r;
    let mut centers = Vec::new();
    let mut idx = vec![-kmax; d];
    loop {
        let p: Vec<f64> = idx.iter().map(|&k| k as f64 * eps_bar).collect();
        if x_body.membership(&p, boundary)? {
            centers.push(p);
            if centers.len() > budget {
                return Err(Error::Resource {
                    what: format!("grid with spacing {eps_bar}"),
                    estimate: boxed,
                });
            }
        }
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(DiscretizationGrid {
                    centers,
                    spacing: eps_bar,
                });
            }
            k -= 1;
            if idx[k] < kmax {
                idx[k] += 1;
                break;
            }
            idx[k] = -kmax;
        }
    }
}

/// Positions of the unknowns in the flat LP vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceLayout {
    pub dim: usize,
    pub centers: usize,
}

impl InstanceLayout {
    pub fn tri(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    fn block(&self) -> usize {
        1 + self.dim + self.tri()
    }

    pub fn len(&self) -> usize {
        1 + self.centers * self.block()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn r(&self) -> usize {
        0
    }

    pub fn r_i(&self, i: usize) -> usize {
        1 + i * self.block()
    }

    pub fn v(&self, i: usize, k: usize) -> usize {
        self.r_i(i) + 1 + k
    }

    /// Entry `(k, l)` with `k ≤ l` of the row-major upper triangle.
    pub fn sigma(&self, i: usize, k: usize, l: usize) -> usize {
        let (k, l) = if k <= l { (k, l) } else { (l, k) };
        let d = self.dim;
        self.r_i(i) + 1 + d + k * d - k * k.saturating_sub(1) / 2 + (l - k)
    }

    /// Coefficients of `uᵀΣ_i u` in the unknowns, scaled by `s`.
    pub fn quad_coeffs(&self, i: usize, u: &[f64], s: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.tri());
        for k in 0..self.dim {
            for l in k..self.dim {
                let c = if k == l { u[k] * u[k] } else { 2.0 * u[k] * u[l] };
                if c != 0.0 {
                    out.push((self.sigma(i, k, l), s * c));
                }
            }
        }
        out
    }
}

/// A point of the program: `r` followed by one `(r_i, v_i, Σ_i)` block per
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramInstance {
    pub layout: InstanceLayout,
    pub values: Vec<f64>,
}

impl ProgramInstance {
    pub fn from_parts(r: f64, pieces: &[(f64, Vec<f64>, DMatrix<f64>)]) -> Self {
        let dim = pieces.first().map_or(0, |p| p.1.len());
        let layout = InstanceLayout {
            dim,
            centers: pieces.len(),
        };
        let mut values = vec![0.0; layout.len()];
        values[layout.r()] = r;
        for (i, (ri, v, s)) in pieces.iter().enumerate() {
            values[layout.r_i(i)] = *ri;
            for k in 0..dim {
                values[layout.v(i, k)] = v[k];
                for l in k..dim {
                    values[layout.sigma(i, k, l)] = 0.5 * (s[(k, l)] + s[(l, k)]);
                }
            }
        }
        ProgramInstance { layout, values }
    }

    pub fn r(&self) -> f64 {
        self.values[self.layout.r()]
    }

    pub fn r_i(&self, i: usize) -> f64 {
        self.values[self.layout.r_i(i)]
    }

    pub fn v(&self, i: usize) -> Vec<f64> {
        (0..self.layout.dim).map(|k| self.values[self.layout.v(i, k)]).collect()
    }

    pub fn sigma(&self, i: usize) -> DMatrix<f64> {
        let d = self.layout.dim;
        DMatrix::from_fn(d, d, |k, l| self.values[self.layout.sigma(i, k, l)])
    }

    pub fn set_sigma(&mut self, i: usize, s: &DMatrix<f64>) {
        let d = self.layout.dim;
        for k in 0..d {
            for l in k..d {
                let idx = self.layout.sigma(i, k, l);
                self.values[idx] = 0.5 * (s[(k, l)] + s[(l, k)]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CutTag {
    Locality { i: usize, j: usize },
    GradBound { i: usize, coord: usize, positive: bool },
    PsdUpper { i: usize },
    StrongConvexity { i: usize, direction: usize },
    ValueBound { i: Option<usize> },
    ObjectiveLink { i: usize },
    ValueFloor { i: usize },
}

impl CutTag {
    pub fn family(&self) -> &'static str {
        match self {
            CutTag::Locality { .. } => "locality",
            CutTag::GradBound { .. } => "grad-bound",
            CutTag::PsdUpper { .. } => "psd-upper",
            CutTag::StrongConvexity { .. } => "strong-convexity",
            CutTag::ValueBound { .. } => "value-bound",
            CutTag::ObjectiveLink { .. } => "objective-link",
            CutTag::ValueFloor { .. } => "value-floor",
        }
    }
}

/// `Σ coeff · x  (≤ | ≥)  rhs` over instance coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCut {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub tag: CutTag,
}

impl ConstraintCut {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * values[i]).sum()
    }

    /// Positive when violated.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.lhs(values);
        match self.relation {
            Relation::Le => lhs - self.rhs,
            Relation::Ge => self.rhs - lhs,
        }
    }
}

fn pair_cut(layout: &InstanceLayout, grid: &DiscretizationGrid, cfg: &SynthesisConfig, i: usize, j: usize) -> ConstraintCut {
    let delta = linalg::sub(&grid.centers[j], &grid.centers[i]);
    let n = norm(&delta);
    let mut coeffs = vec![(layout.r_i(i), 1.0)];
    for (k, &dk) in delta.iter().enumerate() {
        if dk != 0.0 {
            coeffs.push((layout.v(i, k), dk));
        }
    }
    coeffs.extend(layout.quad_coeffs(i, &delta, 0.5));
    coeffs.push((layout.r_i(j), -1.0));
    ConstraintCut {
        coeffs,
        relation: Relation::Le,
        rhs: cfg.pair_margin.kappa() * cfg.cubic_l * n * n * n,
        tag: CutTag::Locality { i, j },
    }
}

/// Pair cuts, gradient and value bounds, objective links and value floors.
pub fn locality_constraints(grid: &DiscretizationGrid, cfg: &SynthesisConfig) -> Vec<ConstraintCut> {
    let d = grid.centers.first().map_or(0, Vec::len);
    let layout = InstanceLayout {
        dim: d,
        centers: grid.len(),
    };
    let n = grid.len();
    let mut cuts = Vec::with_capacity(n * n + 5 * n * d.max(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cuts.push(pair_cut(&layout, grid, cfg, i, j));
            }
        }
    }
    for i in 0..n {
        for k in 0..d {
            for positive in [true, false] {
                cuts.push(ConstraintCut {
                    coeffs: vec![(layout.v(i, k), if positive { 1.0 } else { -1.0 })],
                    relation: Relation::Le,
                    rhs: cfg.c0,
                    tag: CutTag::GradBound { i, coord: k, positive },
                });
            }
        }
    }
    cuts.push(ConstraintCut {
        coeffs: vec![(layout.r(), 1.0)],
        relation: Relation::Le,
        rhs: cfg.value_bound,
        tag: CutTag::ValueBound { i: None },
    });
    for i in 0..n {
        cuts.push(ConstraintCut {
            coeffs: vec![(layout.r_i(i), 1.0)],
            relation: Relation::Le,
            rhs: cfg.value_bound,
            tag: CutTag::ValueBound { i: Some(i) },
        });
        cuts.push(ConstraintCut {
            coeffs: vec![(layout.r_i(i), 1.0), (layout.r(), -1.0)],
            relation: Relation::Le,
            rhs: 0.0,
            tag: CutTag::ObjectiveLink { i },
        });
        cuts.push(ConstraintCut {
            coeffs: vec![(layout.r_i(i), 1.0)],
            relation: Relation::Ge,
            rhs: 0.0,
            tag: CutTag::ValueFloor { i },
        });
    }
    cuts
}

/// Support values of the loss set on the canonical half of a sphere cover.
#[derive(Debug, Clone)]
pub struct StrongConvexityOracle {
    pub directions: Vec<Vec<f64>>,
    pub support: Vec<f64>,
    pub alpha: f64,
    pub delta_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrongConvexityCheck {
    Certified,
    Violated {
        /// Index into the oracle's directions.
        index: usize,
        direction: Vec<f64>,
        support: f64,
        /// `ṽᵀΣṽ / h(ṽ)²`.
        ratio: f64,
    },
}

impl StrongConvexityOracle {
    pub fn new(loss_body: &ConvexBody, cover: &SphereCover, alpha: f64, delta_m: f64, delta_lin: f64) -> Result<Self> {
        // ṽ and −ṽ give the same row.
        let directions: Vec<Vec<f64>> = cover
            .directions
            .iter()
            .filter(|u| u.iter().find(|&&x| x != 0.0).is_some_and(|&x| x > 0.0))
            .cloned()
            .collect();
        let support = directions
            .par_iter()
            .map(|u| loss_body.dual_gauge(u, delta_lin))
            .collect::<Result<Vec<f64>>>()?;
        Ok(StrongConvexityOracle {
            directions,
            support,
            alpha,
            delta_m,
        })
    }

    /// Target level `α(1 + δ_m) h(ṽ)²` of direction `k`.
    pub fn level(&self, k: usize) -> f64 {
        self.alpha * (1.0 + self.delta_m) * self.support[k] * self.support[k]
    }

    /// Directions whose level is missed by more than `tol`, most violated
    /// first, at most `limit`.
    pub fn violations(&self, sigma: &DMatrix<f64>, tol: f64, limit: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self
            .directions
            .iter()
            .enumerate()
            .filter_map(|(k, u)| {
                let gap = self.level(k) - linalg::quad_form(sigma, u);
                (gap > tol).then_some((k, gap))
            })
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(limit);
        v
    }

    pub fn check(&self, sigma: &DMatrix<f64>, tol: f64) -> StrongConvexityCheck {
        match self.violations(sigma, tol, 1).first() {
            None => StrongConvexityCheck::Certified,
            Some(&(k, _)) => StrongConvexityCheck::Violated {
                index: k,
                direction: self.directions[k].clone(),
                support: self.support[k],
                ratio: linalg::quad_form(sigma, &self.directions[k]) / (self.support[k] * self.support[k]),
            },
        }
    }

    /// Row `ṽᵀΣ_iṽ ≥ α(1 + δ_m) h(ṽ)²`.
    pub fn cut(&self, layout: &InstanceLayout, i: usize, k: usize) -> ConstraintCut {
        ConstraintCut {
            coeffs: layout.quad_coeffs(i, &self.directions[k], 1.0),
            relation: Relation::Ge,
            rhs: self.level(k),
            tag: CutTag::StrongConvexity { i, direction: k },
        }
    }
}

/// Certifies `ṽᵀΣṽ ≥ α(1 + δ_m) h(ṽ)²` on the cover or returns the most
/// violated direction.
pub fn strong_convexity_cut(
    sigma: &DMatrix<f64>,
    loss_body: &ConvexBody,
    alpha: f64,
    delta_m: f64,
    delta_lin: f64,
    cover: &SphereCover,
) -> Result<StrongConvexityCheck> {
    let oracle = StrongConvexityOracle::new(loss_body, cover, alpha, delta_m, delta_lin)?;
    Ok(oracle.check(sigma, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsdCheck {
    Ok { top: f64 },
    Cut { direction: Vec<f64>, top: f64 },
}

/// Compares the top eigenvalue of `sigma` with `c2`.
pub fn psd_upper_cut(sigma: &DMatrix<f64>, c2: f64, tol: f64) -> Result<PsdCheck> {
    let (top, u) = linalg::top_eigenpair(sigma)
        .ok_or_else(|| Error::Numeric("symmetric eigen-decomposition did not converge".into()))?;
    Ok(if top <= c2 + tol {
        PsdCheck::Ok { top }
    } else {
        PsdCheck::Cut { direction: u, top }
    })
}

fn psd_row(layout: &InstanceLayout, i: usize, u: &[f64], c2: f64) -> ConstraintCut {
    ConstraintCut {
        coeffs: layout.quad_coeffs(i, u, 1.0),
        relation: Relation::Le,
        rhs: c2,
        tag: CutTag::PsdUpper { i },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CutCounts {
    pub locality: usize,
    pub grad_bound: usize,
    pub value_bound: usize,
    pub objective_link: usize,
    pub value_floor: usize,
    pub psd_upper: usize,
    pub strong_convexity: usize,
}

impl CutCounts {
    fn record(&mut self, tag: &CutTag) {
        match tag {
            CutTag::Locality { .. } => self.locality += 1,
            CutTag::GradBound { .. } => self.grad_bound += 1,
            CutTag::ValueBound { .. } => self.value_bound += 1,
            CutTag::ObjectiveLink { .. } => self.objective_link += 1,
            CutTag::ValueFloor { .. } => self.value_floor += 1,
            CutTag::PsdUpper { .. } => self.psd_upper += 1,
            CutTag::StrongConvexity { .. } => self.strong_convexity += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.locality
            + self.grad_bound
            + self.value_bound
            + self.objective_link
            + self.value_floor
            + self.psd_upper
            + self.strong_convexity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub objective: f64,
    pub centers: usize,
    pub rounds: usize,
    pub certified: bool,
    pub cuts: CutCounts,
    /// Largest violation of any emitted cut at the returned instance.
    pub max_violation: f64,
    pub solver_tol: f64,
    pub cover_directions: usize,
    pub lp_cold_solves: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub instance: ProgramInstance,
    pub grid: DiscretizationGrid,
    pub report: SolveReport,
}

fn certificate(cfg: &SynthesisConfig, reason: String, rounds: usize) -> Error {
    Error::Infeasible(Box::new(InfeasibilityCertificate {
        c_guess: cfg.c_guess,
        reason,
        rounds,
    }))
}

/// Minimizes `r` over the static cuts plus lazily generated Hessian cuts.
pub fn solve_program(x_body: &ConvexBody, loss_body: &ConvexBody, cfg: &SynthesisConfig) -> Result<SolveOutcome> {
    let problems = cfg.violations();
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    x_body.require_symmetric()?;
    loss_body.require_symmetric()?;
    let grid = discretize_action_set(x_body, cfg.eps_bar, cfg.grid_budget)?;
    let d = x_body.dim();
    let layout = InstanceLayout {
        dim: d,
        centers: grid.len(),
    };
    let cover = convex_sets::sphere_cover(d, cfg.eps_tilde)?;
    let oracle = StrongConvexityOracle::new(loss_body, &cover, cfg.alpha, cfg.delta_m, cfg.delta_lin)?;

    let floor = (0..oracle.directions.len())
        .map(|k| oracle.level(k))
        .fold(f64::INFINITY, f64::min);
    if floor > cfg.c2 + cfg.solver_tol {
        let reason = cfg.precheck().unwrap_or_else(|| {
            format!("smallest strong-convexity level {floor} on the cover exceeds c2 = {}", cfg.c2)
        });
        return Err(certificate(cfg, reason, 0));
    }

    let static_cuts = locality_constraints(&grid, cfg);
    let mut counts = CutCounts::default();
    let mut lp = LinearProgram::new();
    let mut bounds: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, f64::INFINITY); layout.len()];
    for i in 0..grid.len() {
        for k in 0..d {
            for l in k..d {
                bounds[layout.sigma(i, k, l)] = (-cfg.c2, cfg.c2);
            }
        }
    }
    let mut rows: Vec<&ConstraintCut> = Vec::new();
    for cut in &static_cuts {
        counts.record(&cut.tag);
        if let [(idx, c)] = cut.coeffs[..] {
            let b = cut.rhs / c;
            let upper = matches!(cut.relation, Relation::Le) == (c > 0.0);
            let slot = &mut bounds[idx];
            if upper {
                slot.1 = slot.1.min(b);
            } else {
                slot.0 = slot.0.max(b);
            }
        } else {
            rows.push(cut);
        }
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        let cost = if k == layout.r() { 1.0 } else { 0.0 };
        lp.add_var(cost, lo, hi);
    }
    for cut in rows {
        lp.add_row(cut.coeffs.clone(), cut.relation, cut.rhs);
    }

    let mut dynamic: Vec<ConstraintCut> = Vec::new();
    let mut rounds = 0;
    let mut certified = false;
    let mut values;
    loop {
        rounds += 1;
        values = match lp.solve()? {
            LpOutcome::Optimal { values, .. } => values,
            LpOutcome::Infeasible => {
                return Err(certificate(
                    cfg,
                    format!(
                        "LP relaxation infeasible with {} strong-convexity and {} Hessian-bound cuts",
                        counts.strong_convexity, counts.psd_upper
                    ),
                    rounds - 1,
                ))
            }
            LpOutcome::Unbounded => return Err(Error::Numeric("synthesis LP is unbounded".into())),
        };
        let instance = ProgramInstance {
            layout,
            values: values.clone(),
        };
        let new_cuts: Vec<ConstraintCut> = (0..grid.len())
            .into_par_iter()
            .map(|i| -> Result<Vec<ConstraintCut>> {
                let sigma = instance.sigma(i);
                let mut out = Vec::new();
                if let PsdCheck::Cut { direction, .. } = psd_upper_cut(&sigma, cfg.c2, cfg.solver_tol)? {
                    out.push(psd_row(&layout, i, &direction, cfg.c2));
                }
                for (k, _) in oracle.violations(&sigma, cfg.solver_tol, cfg.cuts_per_center) {
                    out.push(oracle.cut(&layout, i, k));
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if new_cuts.is_empty() {
            certified = true;
            break;
        }
        if rounds >= cfg.max_rounds {
            log::warn!("synthesis stopped after {rounds} rounds with {} violated cuts", new_cuts.len());
            break;
        }
        for cut in new_cuts {
            counts.record(&cut.tag);
            lp.add_row(cut.coeffs.clone(), cut.relation, cut.rhs);
            dynamic.push(cut);
        }
    }

    let instance = ProgramInstance { layout, values };
    let max_violation = static_cuts
        .iter()
        .chain(&dynamic)
        .map(|c| c.violation(&instance.values))
        .fold(0.0, f64::max);
    Ok(SolveOutcome {
        report: SolveReport {
            objective: instance.r(),
            centers: grid.len(),
            rounds,
            certified,
            cuts: counts,
            max_violation,
            solver_tol: cfg.solver_tol,
            cover_directions: oracle.directions.len(),
            lp_cold_solves: lp.cold_solves(),
        },
        instance,
        grid,
    })
}

#[derive(Debug, Clone)]
pub struct DoublingOutcome {
    pub outcome: SolveOutcome,
    pub config: SynthesisConfig,
    pub c_final: f64,
    /// Certificates of the rejected guesses, in order.
    pub rejected: Vec<InfeasibilityCertificate>,
}

/// Doubles the value scale from `c_low` until the program is feasible.
pub fn solve_with_doubling(
    x_body: &ConvexBody,
    loss_body: &ConvexBody,
    overrides: &Overrides,
    c_low: f64,
) -> Result<DoublingOutcome> {
    let mut c = c_low;
    let mut rejected = Vec::new();
    for _ in 0..=MAX_DOUBLINGS {
        let cfg = calibrate_constants(x_body, loss_body, c, overrides)?;
        match solve_program(x_body, loss_body, &cfg) {
            Ok(outcome) => {
                return Ok(DoublingOutcome {
                    outcome,
                    config: cfg,
                    c_final: c,
                    rejected,
                })
            }
            Err(Error::Infeasible(cert)) => {
                log::info!("C = {c} rejected: {}", cert.reason);
                rejected.push(*cert);
                c *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    // Every guess up to c_low · 2^MAX_DOUBLINGS was refuted.
    let last = rejected.pop().expect("the loop runs at least once");
    Err(Error::Infeasible(Box::new(InfeasibilityCertificate {
        reason: format!(
            "no feasible value scale within {MAX_DOUBLINGS} doublings of {c_low}; last: {}",
            last.reason
        ),
        ..last
    })))
}

/// One piece per center with the configured cubic coefficient; the claimed
/// modulus is `α/2`.
pub fn assemble_regularizer(
    instance: &ProgramInstance,
    grid: &DiscretizationGrid,
    cfg: &SynthesisConfig,
    loss_body: &ConvexBody,
    provenance: String,
) -> Result<PiecewiseRegularizer> {
    let pieces = (0..grid.len())
        .map(|i| {
            QuasiQuadraticPiece::new(
                grid.centers[i].clone(),
                instance.r_i(i),
                instance.v(i),
                instance.sigma(i),
                cfg.cubic_l,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewiseRegularizer::new(
        pieces,
        cfg.alpha / 2.0,
        Some(loss_body.description().clone()),
        provenance,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyCheck {
    pub family: String,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub families: Vec<FamilyCheck>,
    pub fine_cover_directions: usize,
    pub range_min: f64,
    pub range_max: f64,
    pub range_within_bound: bool,
    pub sampled_modulus: verify::StrongConvexityReport,
    /// Fraction of sampled points whose maximizing piece is centered within
    /// the locality radius.
    pub locality_fraction: f64,
    pub locality_radius: f64,
    pub samples: usize,
}

impl ValidationReport {
    pub fn families_pass(&self) -> bool {
        self.families.iter().all(|f| f.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub samples: usize,
    pub seed: u64,
    /// Multiple of the solver tolerance a family may be violated by.
    pub tolerance_factor: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            samples: 1_000,
            seed: 0,
            tolerance_factor: 2.0,
        }
    }
}

/// Re-checks every constraint family with fresh oracles and a cover twice
/// as fine, and samples the assembled regularizer.
pub fn validate_instance(
    instance: &ProgramInstance,
    grid: &DiscretizationGrid,
    x_body: &ConvexBody,
    loss_body: &ConvexBody,
    cfg: &SynthesisConfig,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let layout = instance.layout;
    let tol = opts.tolerance_factor * cfg.solver_tol;
    let mut worst: std::collections::BTreeMap<&'static str, f64> = std::collections::BTreeMap::new();
    for family in [
        "locality",
        "grad-bound",
        "value-bound",
        "objective-link",
        "value-floor",
        "psd-upper",
        "strong-convexity",
    ] {
        worst.insert(family, f64::NEG_INFINITY);
    }
    for cut in locality_constraints(grid, cfg) {
        let v = cut.violation(&instance.values);
        let e = worst.get_mut(cut.tag.family()).expect("known family");
        *e = e.max(v);
    }
    let cover = convex_sets::sphere_cover(layout.dim, cfg.eps_tilde / 2.0)?;
    let fine = StrongConvexityOracle::new(loss_body, &cover, cfg.alpha, 0.0, cfg.delta_lin / 2.0)?;
    let per_center: Vec<(f64, f64)> = (0..layout.centers)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let sigma = instance.sigma(i);
            let (top, _) = linalg::top_eigenpair(&sigma)
                .ok_or_else(|| Error::Numeric("eigen-decomposition did not converge".into()))?;
            let sc = (0..fine.directions.len())
                .map(|k| fine.level(k) - linalg::quad_form(&sigma, &fine.directions[k]))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((top - cfg.c2, sc))
        })
        .collect::<Result<Vec<_>>>()?;
    for (psd, sc) in per_center {
        let e = worst.get_mut("psd-upper").expect("known family");
        *e = e.max(psd);
        let e = worst.get_mut("strong-convexity").expect("known family");
        *e = e.max(sc);
    }
    let families = worst
        .into_iter()
        .map(|(family, v)| FamilyCheck {
            family: family.to_string(),
            max_violation: v,
            tolerance: tol,
            pass: v <= tol,
        })
        .collect();

    let g = assemble_regularizer(instance, grid, cfg, loss_body, String::new())?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(opts.seed);
    let points = x_body.sample_uniform(&mut rng, opts.samples)?;
    let mut range_min = f64::INFINITY;
    let mut range_max = f64::NEG_INFINITY;
    let mut local = 0usize;
    for p in &points {
        let v = g.eval(p)?;
        range_min = range_min.min(v);
        range_max = range_max.max(v);
        let i = g.argmax_piece(p)?[0];
        if linalg::distance(&grid.centers[i], p) <= cfg.locality_radius {
            local += 1;
        }
    }
    let sampled_modulus = verify::strong_convexity_sampled(
        &g,
        x_body,
        loss_body,
        cfg.alpha / 2.0,
        &verify::SampleOptions {
            samples: opts.samples,
            seed: opts.seed.wrapping_add(1),
            ..verify::SampleOptions::default()
        },
    )?;
    Ok(ValidationReport {
        families,
        fine_cover_directions: fine.directions.len(),
        range_min,
        range_max,
        range_within_bound: range_max <= cfg.value_bound && range_min >= -cfg.value_bound,
        sampled_modulus,
        locality_fraction: local as f64 / points.len().max(1) as f64,
        locality_radius: cfg.locality_radius,
        samples: points.len(),
    })
}

/// `(f(x_i), ∇f(x_i), ∇²f(x_i))` for `f(x) = ½ c² |x|²` at every center.
pub fn quadratic_witness(grid: &DiscretizationGrid, c: f64) -> ProgramInstance {
    let c2 = c * c;
    let pieces: Vec<(f64, Vec<f64>, DMatrix<f64>)> = grid
        .centers
        .iter()
        .map(|x| {
            let d = x.len();
            (0.5 * c2 * dot(x, x), linalg::scale(x, c2), DMatrix::identity(d, d) * c2)
        })
        .collect();
    let r = pieces.iter().map(|p| p.0).fold(0.0, f64::max);
    ProgramInstance::from_parts(r, &pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_sets::BodyDescription;
    use crate::verify::QuarticSum;
    use crate::FunctionView;

    fn ball(d: usize) -> ConvexBody {
        ConvexBody::from_description(&BodyDescription::euclidean_ball(d, 1.0)).unwrap()
    }

    fn with_eps_bar(eps_bar: f64) -> Overrides {
        Overrides {
            eps_bar: Some(eps_bar),
            ..Overrides::default()
        }
    }

    #[test]
    fn grids() {
        let g = discretize_action_set(&ball(1), 0.5, 100).unwrap();
        assert_eq!(g.centers, vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]);
        let g = discretize_action_set(&ball(2), 0.5, 100).unwrap();
        let brute = (-2i32..=2)
            .flat_map(|i| (-2i32..=2).map(move |j| (i, j)))
            .filter(|&(i, j)| i * i + j * j <= 4)
            .count();
        assert_eq!(g.len(), brute);
        assert_eq!(g.len(), 13);
        assert!(g.centers.contains(&vec![0.0, 0.0]));
        let b = ConvexBody::from_description(&BodyDescription::boxed(&[1.0, 1.0], None)).unwrap();
        assert_eq!(discretize_action_set(&b, 1.0, 100).unwrap().len(), 9);
        assert!(matches!(
            discretize_action_set(&ball(3), 0.01, 1_000),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn grid_covers_the_body() {
        let x = ball(2);
        let g = discretize_action_set(&x, 0.25, 1_000).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let eps = 2f64.sqrt() * 0.25;
        for p in x.sample_uniform(&mut rng, 500).unwrap() {
            let nearest = g
                .centers
                .iter()
                .map(|c| linalg::distance(c, &p))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= eps);
        }
    }

    #[test]
    fn unit_constant_calibration() {
        let cfg = calibrate_constants(&ball(2), &ball(2), 1.0, &with_eps_bar(0.25)).unwrap();
        let l = 2f64.powf(0.75);
        assert!((cfg.cubic_l - l).abs() < 1e-12);
        let cube = l * 0.015625;
        assert!((cfg.c0 - (2f64.powf(0.25) + cube)).abs() < 1e-12);
        assert!((cfg.c2 - (2f64.sqrt() + cube)).abs() < 1e-12);
        assert!((cfg.value_bound - (1.0 + cube)).abs() < 1e-12);
        assert!((cfg.delta_m - 0.25).abs() < 1e-12);
        assert!(cfg.violations().is_empty());
    }

    #[test]
    fn inconsistent_overrides_name_every_invariant() {
        let o = Overrides {
            delta_lin: Some(10.0),
            eps_tilde: Some(0.9),
            alpha: Some(-1.0),
            ..Overrides::default()
        };
        let Err(Error::Validation(msgs)) = calibrate_constants(&ball(2), &ball(2), 1.0, &o) else {
            panic!("expected validation error")
        };
        assert!(msgs.iter().any(|m| m.contains("delta_lin")));
        assert!(msgs.iter().any(|m| m.contains("eps_tilde")));
        assert!(msgs.iter().any(|m| m.starts_with("alpha")));
    }

    #[test]
    fn single_center_has_only_bounds() {
        let grid = DiscretizationGrid {
            centers: vec![vec![0.0]],
            spacing: 1.0,
        };
        let cfg = calibrate_constants(&ball(1), &ball(1), 1.0, &Overrides::default()).unwrap();
        let cuts = locality_constraints(&grid, &cfg);
        assert!(cuts.iter().all(|c| !matches!(c.tag, CutTag::Locality { .. })));
        assert_eq!(cuts.len(), 2 + 1 + 3);
    }

    #[test]
    fn pair_cut_coefficients() {
        let grid = DiscretizationGrid {
            centers: vec![vec![0.0], vec![0.5]],
            spacing: 0.5,
        };
        let o = Overrides {
            cubic_l: Some(96.0),
            eps_tilde: Some(0.01),
            ..Overrides::default()
        };
        let cfg = calibrate_constants(&ball(1), &ball(1), 1.0, &o).unwrap();
        let layout = InstanceLayout { dim: 1, centers: 2 };
        let cut = locality_constraints(&grid, &cfg)
            .into_iter()
            .find(|c| c.tag == CutTag::Locality { i: 0, j: 1 })
            .unwrap();
        assert_eq!(cut.relation, Relation::Le);
        assert!((cut.rhs - 2.125).abs() < 1e-12);
        let mut coeffs = cut.coeffs.clone();
        coeffs.sort_by_key(|c| c.0);
        assert_eq!(
            coeffs,
            vec![
                (layout.r_i(0), 1.0),
                (layout.v(0, 0), 0.5),
                (layout.sigma(0, 0, 0), 0.125),
                (layout.r_i(1), -1.0)
            ]
        );
    }

    #[test]
    fn layout_indices_are_a_bijection() {
        let layout = InstanceLayout { dim: 3, centers: 4 };
        let mut seen = std::collections::BTreeSet::new();
        assert!(seen.insert(layout.r()));
        for i in 0..4 {
            assert!(seen.insert(layout.r_i(i)));
            for k in 0..3 {
                assert!(seen.insert(layout.v(i, k)));
                for l in k..3 {
                    assert!(seen.insert(layout.sigma(i, k, l)));
                    assert_eq!(layout.sigma(i, k, l), layout.sigma(i, l, k));
                }
            }
        }
        assert_eq!(seen.len(), layout.len());
        assert_eq!(*seen.iter().last().unwrap(), layout.len() - 1);
    }

    #[test]
    fn quartic_taylor_instance_has_the_feasibility_slack() {
        let b = ConvexBody::from_description(&BodyDescription::boxed(&[1.0, 1.0], None)).unwrap();
        let l = QuarticSum::HESSIAN_LIPSCHITZ_ON_UNIT_BOX;
        let o = Overrides {
            eps_bar: Some(0.25),
            cubic_l: Some(l),
            ..Overrides::default()
        };
        let cfg = calibrate_constants(&b, &b, 1.0, &o).unwrap();
        let grid = discretize_action_set(&b, 0.25, 1_000).unwrap();
        let f = QuarticSum { dim: 2 };
        let pieces: Vec<_> = grid
            .centers
            .iter()
            .map(|x| (f.value(x), f.subgradient(x), f.hessian(x).unwrap()))
            .collect();
        let inst = ProgramInstance::from_parts(2.0, &pieces);
        for cut in locality_constraints(&grid, &cfg) {
            if let CutTag::Locality { i, j } = cut.tag {
                let dist = linalg::distance(&grid.centers[i], &grid.centers[j]);
                let slack = -cut.violation(&inst.values);
                assert!(slack >= l / 96.0 * dist.powi(3) - 1e-10, "{i} {j} {slack}");
            }
        }
    }

    #[test]
    fn quadratic_witness_satisfies_static_cuts() {
        let x = ball(2);
        let cfg = calibrate_constants(&x, &x, 2.0, &with_eps_bar(0.25)).unwrap();
        let grid = discretize_action_set(&x, 0.25, 1_000).unwrap();
        let w = quadratic_witness(&grid, 1.0);
        for cut in locality_constraints(&grid, &cfg) {
            let v = cut.violation(&w.values);
            assert!(v <= 1e-12, "{:?} {v}", cut.tag);
            if let CutTag::Locality { i, j } = cut.tag {
                let dist = linalg::distance(&grid.centers[i], &grid.centers[j]);
                assert!(-v >= 17.0 / 96.0 * cfg.cubic_l * dist.powi(3) - 1e-12);
            }
        }
    }

    #[test]
    fn strong_convexity_oracle_examples() {
        let b = ball(2);
        let cover = convex_sets::sphere_cover(2, 0.05).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(
            strong_convexity_cut(&id, &b, 0.5, 0.25, 1e-6, &cover).unwrap(),
            StrongConvexityCheck::Certified
        );
        let ellipse = ConvexBody::from_description(&BodyDescription::ellipsoid_axes(&[1.0, 10.0])).unwrap();
        match strong_convexity_cut(&id, &ellipse, 1.0, 0.01, 1e-6, &cover).unwrap() {
            StrongConvexityCheck::Violated {
                direction,
                support,
                ratio,
                ..
            } => {
                assert!(direction[1].abs().acos() < 0.2, "{direction:?}");
                assert!((support - 10.0).abs() < 1e-3);
                assert!((ratio - 0.01).abs() < 1e-4);
            }
            other => panic!("{other:?}"),
        }
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 100.0]));
        assert_eq!(
            strong_convexity_cut(&s, &ellipse, 0.9, 0.01, 1e-6, &cover).unwrap(),
            StrongConvexityCheck::Certified
        );
        // Brute force over 10⁵ directions.
        let min_ratio = (0..100_000)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / 100_000.0;
                let u = [th.cos(), th.sin()];
                let h = (u[0] * u[0] + 100.0 * u[1] * u[1]).sqrt();
                linalg::quad_form(&s, &u) / (h * h)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min_ratio >= 0.9);
        assert!((min_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn psd_oracle_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(psd_upper_cut(&id, 2.0, 1e-9).unwrap(), PsdCheck::Ok { .. }));
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        match psd_upper_cut(&s, 2.0, 1e-9).unwrap() {
            PsdCheck::Cut { direction, top } => {
                assert!((top - 3.0).abs() < 1e-12);
                assert!((direction[0].abs() - 1.0).abs() < 1e-12 && direction[1].abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        for _ in 0..100 {
            use rand::Rng;
            let (a, b, c): (f64, f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
            let root = 0.5 * (a + c) + ((0.5 * (a - c)).powi(2) + b * b).sqrt();
            let top = match psd_upper_cut(&m, -10.0, 0.0).unwrap() {
                PsdCheck::Cut { top, .. } => top,
                PsdCheck::Ok { .. } => unreachable!(),
            };
            assert!((top - root).abs() < 1e-10);
        }
    }

    #[test]
    fn one_dimensional_program_is_feasible() {
        let x = ball(1);
        let o = Overrides {
            eps_bar: Some(0.5),
            alpha: Some(1.0),
            ..Overrides::default()
        };
        let cfg = calibrate_constants(&x, &x, 2.0, &o).unwrap();
        let out = solve_program(&x, &x, &cfg).unwrap();
        assert!(out.report.certified);
        assert_eq!(out.report.centers, 5);
        assert!(out.report.objective <= cfg.value_bound);
        assert!(out.report.max_violation <= cfg.solver_tol);
    }

    #[test]
    fn modulus_above_hessian_bound_is_infeasible() {
        let x = ball(2);
        let o = Overrides {
            eps_bar: Some(0.5),
            alpha: Some(3.0),
            c2: Some(2.0),
            ..Overrides::default()
        };
        let cfg = calibrate_constants(&x, &x, 1.0, &o).unwrap();
        assert!(cfg.precheck().is_some());
        match solve_program(&x, &x, &cfg) {
            Err(Error::Infeasible(cert)) => assert!(cert.reason.contains("c2"), "{}", cert.reason),
            other => panic!("{other:?}"),
        }
        // Every doubling keeps the overridden bound, so the cap is reached.
        match solve_with_doubling(&x, &x, &o, 1.0) {
            Err(Error::Infeasible(cert)) => {
                assert!(cert.reason.contains("doublings"), "{}", cert.reason);
                assert_eq!(cert.c_guess, 2f64.powi(MAX_DOUBLINGS as i32));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn large_guess_is_accepted_first() {
        let x = ball(1);
        let out = solve_with_doubling(&x, &x, &with_eps_bar(0.5), 64.0).unwrap();
        assert_eq!(out.c_final, 64.0);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn certified_disk_instance() {
        let x = ball(2);
        let out = solve_with_doubling(&x, &x, &with_eps_bar(0.25), 1.0).unwrap();
        assert!(out.outcome.report.certified);
        assert!(out.c_final <= 2.0);
        assert_eq!(out.outcome.report.centers, 49);
        // Regression value of the first certified solve.
        assert!((out.outcome.report.objective - 0.550_545_629_9).abs() < 1e-6, "{}", out.outcome.report.objective);
        assert!(out.outcome.report.objective <= out.config.value_bound);

        let (inst, grid, cfg) = (&out.outcome.instance, &out.outcome.grid, &out.config);
        let g = assemble_regularizer(inst, grid, cfg, &x, "test".into()).unwrap();
        assert_eq!(g.alpha, cfg.alpha / 2.0);
        // Pair cuts at 17/96 leave a piece up to L/96 |Δ|³ above a neighbor's value.
        let excess = cfg.cubic_l / 96.0 * 8.0;
        for (i, c) in grid.centers.iter().enumerate() {
            let gi = g.eval(c).unwrap();
            assert!(gi >= inst.r_i(i) - 1e-9 && gi <= inst.r_i(i) + excess + 1e-9);
        }
        let back = PiecewiseRegularizer::from_toml_str(&g.to_toml_string()).unwrap();
        assert_eq!(back, g);

        let opts = ValidationOptions {
            samples: 300,
            ..ValidationOptions::default()
        };
        let rep = validate_instance(inst, grid, &x, &x, cfg, &opts).unwrap();
        assert!(rep.families_pass(), "{:?}", rep.families);
        assert!(rep.range_within_bound);

        let mut weak = inst.clone();
        for i in 0..grid.len() {
            let s = weak.sigma(i) * 0.1;
            weak.set_sigma(i, &s);
        }
        let rep = validate_instance(&weak, grid, &x, &x, cfg, &opts).unwrap();
        let sc = rep.families.iter().find(|f| f.family == "strong-convexity").unwrap();
        assert!(!sc.pass);

        let mut lowered = inst.clone();
        let j = lowered.layout.r_i(grid.len() / 2);
        lowered.values[j] -= 0.1;
        let rep = validate_instance(&lowered, grid, &x, &x, cfg, &opts).unwrap();
        let loc = rep.families.iter().find(|f| f.family == "locality").unwrap();
        assert!(!loc.pass);
    }

    #[test]
    fn locality_condition_pieces_attain_their_own_center() {
        let x = ball(2);
        let o = Overrides {
            eps_bar: Some(0.25),
            pair_margin: Some(PairMargin::LocalityCondition),
            ..Overrides::default()
        };
        let out = solve_with_doubling(&x, &x, &o, 1.0).unwrap();
        let (inst, grid, cfg) = (&out.outcome.instance, &out.outcome.grid, &out.config);
        let g = assemble_regularizer(inst, grid, cfg, &x, String::new()).unwrap();
        for (i, c) in grid.centers.iter().enumerate() {
            assert!((g.eval(c).unwrap() - inst.r_i(i)).abs() <= 1e-6);
            assert!(g.argmax_piece(c).unwrap().contains(&i));
        }
    }

    #[test]
    fn coarser_grid_never_raises_the_objective() {
        let x = ball(2);
        let solve = |eps_bar: f64| {
            // Shared constants so that only the grid differs.
            let mut cfg = calibrate_constants(&x, &x, 1.0, &with_eps_bar(0.25)).unwrap();
            cfg.eps_bar = eps_bar;
            solve_program(&x, &x, &cfg).unwrap().report.objective
        };
        // The 0.5 lattice is a subset of the 0.25 lattice.
        let fine = solve(0.25);
        let coarse = solve(0.5);
        assert!(coarse <= fine + 1e-7, "{coarse} > {fine}");
    }
}
