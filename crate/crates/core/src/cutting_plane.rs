//! Kelley's cutting-plane method over a convex body given by oracles.
//!
//! Minimizes `f(x) + ⟨c, x⟩` over a body. The outer model is an LP over
//! `(x, t)`: the body's bounding box, separation cuts `⟨n, x⟩ ≥ offset`
//! and subgradient cuts `t ≥ f(y) + ⟨s, x − y⟩` taken at member points.
//! The model optimum is a lower bound and the best member point an upper
//! bound; the loop stops once they are within `tol`.
//!
//! A [`CuttingPlaneModel`] keeps its cuts between calls so that a sequence
//! of problems sharing `f` and the body (e.g. consecutive FTRL rounds,
//! which differ only in `c`) reuse earlier work.

use std::collections::VecDeque;

use crate::convex_sets::{ConvexBody, Separation};
use crate::error::{check_dim, Error, Result};
use crate::linalg::dot;
use crate::lp::{LinearProgram, LpOutcome, Relation};

/// Value and subgradient access to a function on `R^d`.
pub trait FunctionView: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;
    /// Hessian where the function is twice differentiable, if known.
    fn hessian(&self, _x: &[f64]) -> Option<nalgebra::DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KelleyOptions {
    /// Absolute optimality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of cuts of each kind kept between calls.
    pub cache: usize,
    /// Membership tolerance passed to the separation oracle.
    pub sep_delta: f64,
}

impl Default for KelleyOptions {
    fn default() -> Self {
        KelleyOptions {
            tol: 1e-7,
            max_iter: 2_000,
            cache: 2_000,
            sep_delta: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KelleyOutcome {
    /// Best member point found.
    pub x: Vec<f64>,
    /// Objective at `x`.
    pub value: f64,
    /// Model lower bound on the minimum.
    pub lower: f64,
    pub iterations: usize,
    pub certified: bool,
}

impl KelleyOutcome {
    pub fn gap(&self) -> f64 {
        (self.value - self.lower).max(0.0)
    }
}

#[derive(Debug, Clone)]
struct Cut {
    coeffs: Vec<f64>,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct CuttingPlaneModel {
    dim: usize,
    bounds: Vec<(f64, f64)>,
    /// `t − ⟨s, x⟩ ≥ f(y) − ⟨s, y⟩`, stored as `(s, f(y) − ⟨s, y⟩)`.
    value_cuts: VecDeque<Cut>,
    /// `⟨n, x⟩ ≥ offset`.
    set_cuts: VecDeque<Cut>,
    cache: usize,
}

impl CuttingPlaneModel {
    pub fn new(body: &ConvexBody, cache: usize) -> Result<Self> {
        Ok(CuttingPlaneModel {
            dim: body.dim(),
            bounds: body.bounding_box()?,
            value_cuts: VecDeque::new(),
            set_cuts: VecDeque::new(),
            cache: cache.max(1),
        })
    }

    pub fn num_cuts(&self) -> usize {
        self.value_cuts.len() + self.set_cuts.len()
    }

    fn push(queue: &mut VecDeque<Cut>, cut: Cut, cache: usize) {
        if queue.len() >= cache {
            queue.pop_front();
        }
        queue.push_back(cut);
    }

    fn add_value_cut(&mut self, f: &dyn FunctionView, y: &[f64]) -> (f64, Vec<f64>) {
        let fy = f.value(y);
        let s = f.subgradient(y);
        let rhs = fy - dot(&s, y);
        Self::push(&mut self.value_cuts, Cut { coeffs: s.clone(), rhs }, self.cache);
        (fy, s)
    }

    /// Minimizes `f(x) + ⟨linear, x⟩` over `body`; `f = None` is the zero
    /// function.
    pub fn minimize(
        &mut self,
        f: Option<&dyn FunctionView>,
        linear: &[f64],
        body: &ConvexBody,
        opts: &KelleyOptions,
    ) -> Result<KelleyOutcome> {
        check_dim(self.dim, linear.len())?;
        check_dim(self.dim, body.dim())?;
        if let Some(f) = f {
            check_dim(self.dim, f.dim())?;
        }
        let d = self.dim;
        let objective = |x: &[f64]| f.map_or(0.0, |f| f.value(x)) + dot(linear, x);

        let anchor = body.retract(&body.anchor())?;
        let mut best_x = anchor.clone();
        let mut best = objective(&anchor);
        if let Some(f) = f {
            self.add_value_cut(f, &anchor);
        }

        let mut lp = LinearProgram::new();
        let xs: Vec<usize> = (0..d)
            .map(|k| lp.add_var(linear[k], self.bounds[k].0, self.bounds[k].1))
            .collect();
        let t = f.map(|_| lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY));
        let value_row = |cut: &Cut, t: usize| {
            let mut row: Vec<(usize, f64)> = vec![(t, 1.0)];
            row.extend(xs.iter().zip(&cut.coeffs).map(|(&i, &s)| (i, -s)));
            row
        };
        let set_row = |cut: &Cut| -> Vec<(usize, f64)> {
            xs.iter().zip(&cut.coeffs).map(|(&i, &n)| (i, n)).collect()
        };
        for cut in &self.set_cuts {
            lp.add_row(set_row(cut), Relation::Ge, cut.rhs);
        }
        if let Some(t) = t {
            for cut in &self.value_cuts {
                lp.add_row(value_row(cut, t), Relation::Ge, cut.rhs);
            }
        }

        let mut lower = f64::NEG_INFINITY;
        let mut iterations = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            let (model_value, values) = match lp.solve()? {
                LpOutcome::Optimal { objective, values } => (objective, values),
                LpOutcome::Infeasible => {
                    return Err(Error::Numeric("cutting-plane model became infeasible".into()))
                }
                LpOutcome::Unbounded => {
                    return Err(Error::Numeric("cutting-plane model is unbounded".into()))
                }
            };
            lower = lower.max(model_value);
            if best - lower <= opts.tol {
                break;
            }
            let xk = &values[..d];
            if let Separation::Cut { normal, offset } = body.separation(xk, opts.sep_delta)? {
                let cut = Cut {
                    coeffs: normal,
                    rhs: offset,
                };
                lp.add_row(set_row(&cut), Relation::Ge, cut.rhs);
                Self::push(&mut self.set_cuts, cut, self.cache);
            }
            let y = body.retract(xk)?;
            let fy = if let (Some(f), Some(t)) = (f, t) {
                let (fy, _) = self.add_value_cut(f, &y);
                let cut = self.value_cuts.back().expect("cut just added");
                lp.add_row(value_row(cut, t), Relation::Ge, cut.rhs);
                fy
            } else {
                0.0
            };
            let val = fy + dot(linear, &y);
            if val < best {
                best = val;
                best_x = y;
            }
            if best - lower <= opts.tol {
                break;
            }
        }
        Ok(KelleyOutcome {
            certified: best - lower <= opts.tol,
            x: best_x,
            value: best,
            lower,
            iterations,
        })
    }
}

/// One-shot minimization with a fresh model.
pub fn minimize(
    f: Option<&dyn FunctionView>,
    linear: &[f64],
    body: &ConvexBody,
    opts: &KelleyOptions,
) -> Result<KelleyOutcome> {
    CuttingPlaneModel::new(body, opts.cache)?.minimize(f, linear, body, opts)
}
