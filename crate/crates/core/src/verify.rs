//! Sampled oracles for strong convexity, smoothing and derivative bounds.
//!
//! Everything here is probabilistic: a failure is a concrete witness, a pass
//! only means no witness was found among the reported number of samples.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::convex_sets::{random_unit, ConvexBody};
use crate::cutting_plane::FunctionView;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub samples: usize,
    pub seed: u64,
    /// Step of the second differences.
    pub step: f64,
    /// Absolute slack allowed before a sample counts as a violation.
    pub tol: f64,
    /// Second differences are taken at points of `inner_fraction · X`.
    pub inner_fraction: f64,
    pub delta_lin: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            samples: 1_000,
            seed: 0,
            step: 1e-3,
            tol: 1e-6,
            inner_fraction: 0.5,
            delta_lin: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongConvexityReport {
    pub alpha: f64,
    pub samples: usize,
    /// `min f(y) − f(x) − ⟨g_x, y − x⟩ − (α/2) h(y − x)²` over pairs.
    pub first_order_min_slack: f64,
    /// `min D²f(x)[v, v] − α h(v)²` over second differences.
    pub second_order_min_slack: f64,
    pub violations: usize,
    /// Point and direction of the smallest second-order slack.
    pub worst_point: Vec<f64>,
    pub worst_direction: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

fn second_difference(f: &dyn FunctionView, x: &[f64], v: &[f64], t: f64) -> f64 {
    let fp = f.value(&linalg::axpy(x, t, v));
    let fm = f.value(&linalg::axpy(x, -t, v));
    (fp - 2.0 * f.value(x) + fm) / (t * t)
}

/// Checks `α`-strong convexity of `f` on `x_body` with respect to the dual
/// gauge of `loss_body`, by first-order inequalities on random pairs and by
/// second differences along random unit directions.
pub fn strong_convexity_sampled(
    f: &dyn FunctionView,
    x_body: &ConvexBody,
    loss_body: &ConvexBody,
    alpha: f64,
    opts: &SampleOptions,
) -> Result<StrongConvexityReport> {
    if opts.samples == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    check_dim(x_body.dim(), f.dim())?;
    check_dim(x_body.dim(), loss_body.dim())?;
    let d = x_body.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let xs = x_body.sample_uniform(&mut rng, opts.samples)?;
    let ys = x_body.sample_uniform(&mut rng, opts.samples)?;
    let mut first = f64::INFINITY;
    let mut violations = 0;
    for (x, y) in xs.iter().zip(&ys) {
        let diff = linalg::sub(y, x);
        if linalg::norm(&diff) == 0.0 {
            continue;
        }
        let h = loss_body.dual_gauge(&diff, opts.delta_lin)?;
        let slack = f.value(y) - f.value(x) - dot(&f.subgradient(x), &diff) - 0.5 * alpha * h * h;
        if slack < -opts.tol {
            violations += 1;
        }
        first = first.min(slack);
    }

    let centers = x_body.sample_uniform(&mut rng, opts.samples)?;
    let mut second = f64::INFINITY;
    let mut worst = (vec![0.0; d], vec![0.0; d]);
    for c in &centers {
        let x = linalg::scale(c, opts.inner_fraction);
        let v = random_unit(&mut rng, d);
        let h = loss_body.dual_gauge(&v, opts.delta_lin)?;
        let slack = second_difference(f, &x, &v, opts.step) - alpha * h * h;
        if slack < -opts.tol {
            violations += 1;
        }
        if slack < second {
            second = slack;
            worst = (x, v);
        }
    }
    Ok(StrongConvexityReport {
        alpha,
        samples: opts.samples,
        first_order_min_slack: first,
        second_order_min_slack: second,
        violations,
        worst_point: worst.0,
        worst_direction: worst.1,
        tol: opts.tol,
        pass: violations == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingProbe {
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SmoothingProbe {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Input(format!("smoothing width must be positive, got {}", self.sigma)));
        }
        if self.samples == 0 {
            return Err(Error::Input("smoothing sample count must be at least 1".into()));
        }
        Ok(())
    }

    fn noise(&self, d: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.samples)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of `E f0(x + σZ)` with its standard error.
pub fn gaussian_smooth_mc(f0: &dyn Fn(&[f64]) -> f64, probe: &SmoothingProbe, x: &[f64]) -> Result<(f64, f64)> {
    probe.validate()?;
    let vals: Vec<f64> = probe
        .noise(x.len())
        .iter()
        .map(|z| f0(&linalg::axpy(x, probe.sigma, z)))
        .collect();
    Ok(mean_and_stderr(&vals))
}

/// `E f0(x + σZ)` with one fixed set of draws for every `x`, so that
/// differences between evaluation points carry no sampling noise of their
/// own.
pub struct SharedNoiseSmoothed<'a> {
    f0: &'a dyn FunctionView,
    sigma: f64,
    noise: Vec<Vec<f64>>,
}

impl<'a> SharedNoiseSmoothed<'a> {
    pub fn new(f0: &'a dyn FunctionView, probe: &SmoothingProbe) -> Result<Self> {
        probe.validate()?;
        Ok(SharedNoiseSmoothed {
            f0,
            sigma: probe.sigma,
            noise: probe.noise(f0.dim()),
        })
    }

    fn shifted(&self, x: &[f64]) -> impl Iterator<Item = Vec<f64>> + '_ {
        let x = x.to_vec();
        self.noise.iter().map(move |z| linalg::axpy(&x, self.sigma, z))
    }

    /// Per-draw values of `f0(x + σz)`.
    pub fn draws(&self, x: &[f64]) -> Vec<f64> {
        self.shifted(x).map(|y| self.f0.value(&y)).collect()
    }
}

impl FunctionView for SharedNoiseSmoothed<'_> {
    fn dim(&self) -> usize {
        self.f0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.draws(x).iter().sum::<f64>() / self.noise.len() as f64
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for y in self.shifted(x) {
            g = linalg::add(&g, &self.f0.subgradient(&y));
        }
        linalg::scale(&g, 1.0 / self.noise.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub alpha: f64,
    pub samples: usize,
    pub min_slack: f64,
    /// Standard error of the per-draw slacks at the minimizing sample.
    pub stderr_at_min: f64,
    pub worst_point: Vec<f64>,
    pub worst_direction: Vec<f64>,
    /// Samples with `slack < −3·stderr − tol`.
    pub failures: usize,
    pub pass: bool,
}

/// Sampled second-order strong-convexity check of the shared-noise smoothed
/// `f0`; a sample fails when its slack is below `−3` standard errors.
pub fn smoothing_preserves_convexity_check(
    f0: &dyn FunctionView,
    probe: &SmoothingProbe,
    x_body: &ConvexBody,
    loss_body: &ConvexBody,
    alpha: f64,
    opts: &SampleOptions,
) -> Result<SmoothingReport> {
    check_dim(x_body.dim(), f0.dim())?;
    let smoothed = SharedNoiseSmoothed::new(f0, probe)?;
    let d = x_body.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let centers = x_body.sample_uniform(&mut rng, opts.samples)?;
    let t = opts.step;
    let mut report = SmoothingReport {
        alpha,
        samples: opts.samples,
        min_slack: f64::INFINITY,
        stderr_at_min: 0.0,
        worst_point: vec![0.0; d],
        worst_direction: vec![0.0; d],
        failures: 0,
        pass: true,
    };
    for c in &centers {
        let x = linalg::scale(c, opts.inner_fraction);
        let v = random_unit(&mut rng, d);
        let h = loss_body.dual_gauge(&v, opts.delta_lin)?;
        let target = alpha * h * h;
        let plus = smoothed.draws(&linalg::axpy(&x, t, &v));
        let mid = smoothed.draws(&x);
        let minus = smoothed.draws(&linalg::axpy(&x, -t, &v));
        let slacks: Vec<f64> = (0..plus.len())
            .map(|k| (plus[k] - 2.0 * mid[k] + minus[k]) / (t * t) - target)
            .collect();
        let (slack, se) = mean_and_stderr(&slacks);
        if slack < -3.0 * se - opts.tol {
            report.failures += 1;
        }
        if slack < report.min_slack {
            report.min_slack = slack;
            report.stderr_at_min = se;
            report.worst_point = x;
            report.worst_direction = v;
        }
    }
    report.pass = report.failures == 0;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FiniteDiff {
    Gradient(Vec<f64>),
    Hessian(DMatrix<f64>),
}

/// Central differences of the values of `f`: the gradient for `order = 1`
/// and the Hessian for `order = 2`.
pub fn finite_diff(f: &dyn FunctionView, x: &[f64], order: usize, h: f64) -> Result<FiniteDiff> {
    check_dim(f.dim(), x.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Input(format!("step must be positive, got {h}")));
    }
    let d = x.len();
    let shifted = |pairs: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, s) in pairs {
            y[k] += s;
        }
        f.value(&y)
    };
    match order {
        1 => Ok(FiniteDiff::Gradient(
            (0..d)
                .map(|k| (shifted(&[(k, h)]) - shifted(&[(k, -h)])) / (2.0 * h))
                .collect(),
        )),
        2 => {
            let f0 = f.value(x);
            let mut hess = DMatrix::zeros(d, d);
            for k in 0..d {
                hess[(k, k)] = (shifted(&[(k, h)]) - 2.0 * f0 + shifted(&[(k, -h)])) / (h * h);
                for l in k + 1..d {
                    let v = (shifted(&[(k, h), (l, h)]) - shifted(&[(k, h), (l, -h)]) - shifted(&[(k, -h), (l, h)])
                        + shifted(&[(k, -h), (l, -h)]))
                        / (4.0 * h * h);
                    hess[(k, l)] = v;
                    hess[(l, k)] = v;
                }
            }
            Ok(FiniteDiff::Hessian(hess))
        }
        _ => Err(Error::Input(format!("finite-difference order must be 1 or 2, got {order}"))),
    }
}

fn fd_hessian(f: &dyn FunctionView, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    match finite_diff(f, x, 2, h)? {
        FiniteDiff::Hessian(m) => Ok(m),
        FiniteDiff::Gradient(_) => unreachable!("order 2 yields a Hessian"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeBounds {
    pub gradient: f64,
    pub hessian: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeAudit {
    pub samples: usize,
    pub max_directional_gradient: f64,
    pub max_hessian_norm: f64,
    pub max_lipschitz_ratio: f64,
    pub declared: DerivativeBounds,
    pub gradient_ok: bool,
    pub hessian_ok: bool,
    pub lipschitz_ok: bool,
}

/// Spectral norm of a symmetric matrix.
fn operator_norm(m: &DMatrix<f64>) -> f64 {
    linalg::symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Samples points of `x_body` and compares observed derivative sizes with
/// `bounds`. Hessians come from the view when it provides them and from
/// finite differences otherwise. Lipschitz ratios use pairs at distance
/// `pair_distance`.
pub fn derivative_bound_audit(
    f: &dyn FunctionView,
    x_body: &ConvexBody,
    bounds: DerivativeBounds,
    samples: usize,
    seed: u64,
    pair_distance: f64,
) -> Result<DerivativeAudit> {
    check_dim(x_body.dim(), f.dim())?;
    let d = x_body.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = x_body.sample_uniform(&mut rng, samples)?;
    let hess = |x: &[f64]| -> Result<DMatrix<f64>> {
        match f.hessian(x) {
            Some(m) => Ok(m),
            None => fd_hessian(f, x, 1e-4),
        }
    };
    let mut grad = 0.0f64;
    let mut hnorm = 0.0f64;
    let mut lip = 0.0f64;
    for x in &points {
        let v = random_unit(&mut rng, d);
        grad = grad.max(dot(&f.subgradient(x), &v).abs());
        let hx = hess(x)?;
        hnorm = hnorm.max(operator_norm(&hx));
        let y = linalg::axpy(x, pair_distance, &random_unit(&mut rng, d));
        if x_body.membership(&y, 0.0)? {
            let hy = hess(&y)?;
            lip = lip.max(operator_norm(&(hx - hy)) / linalg::distance(x, &y));
        }
    }
    let slack = 1.0 + 1e-9;
    Ok(DerivativeAudit {
        samples,
        max_directional_gradient: grad,
        max_hessian_norm: hnorm,
        max_lipschitz_ratio: lip,
        declared: bounds,
        gradient_ok: grad <= bounds.gradient * slack,
        hessian_ok: hnorm <= bounds.hessian * slack,
        lipschitz_ok: lip <= bounds.lipschitz * slack,
    })
}

/// `½ xᵀAx`, for tests and examples.
pub struct Quadratic {
    pub a: DMatrix<f64>,
}

impl Quadratic {
    pub fn scaled_identity(d: usize, c: f64) -> Self {
        Quadratic {
            a: DMatrix::identity(d, d) * c,
        }
    }
}

impl FunctionView for Quadratic {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * linalg::quad_form(&self.a, x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.a, x)
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
}

/// `Σ x_k⁴`. Its Hessian `diag(12 x_k²)` is `24`-Lipschitz on `[−1, 1]^d`.
pub struct QuarticSum {
    pub dim: usize,
}

impl QuarticSum {
    pub const HESSIAN_LIPSCHITZ_ON_UNIT_BOX: f64 = 24.0;
}

impl FunctionView for QuarticSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.powi(4)).sum()
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 4.0 * v.powi(3)).collect()
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            x.len(),
            x.iter().map(|v| 12.0 * v * v),
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_sets::BodyDescription;
    use crate::regularizer::QuasiQuadraticPiece;

    fn body(desc: BodyDescription) -> ConvexBody {
        ConvexBody::from_description(&desc).unwrap()
    }

    fn opts(samples: usize) -> SampleOptions {
        SampleOptions {
            samples,
            ..SampleOptions::default()
        }
    }

    struct Abs1;
    impl FunctionView for Abs1 {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[0].abs()
        }
        fn subgradient(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0].signum()]
        }
    }

    /// `max(½|x|², |x| − ¼)`.
    struct KinkedQuadratic;
    impl FunctionView for KinkedQuadratic {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            let n = linalg::norm(x);
            (0.5 * n * n).max(n - 0.25)
        }
        fn subgradient(&self, x: &[f64]) -> Vec<f64> {
            let n = linalg::norm(x);
            if 0.5 * n * n >= n - 0.25 {
                x.to_vec()
            } else {
                linalg::scale(x, 1.0 / n)
            }
        }
    }

    #[test]
    fn unit_quadratic_is_strongly_convex_for_the_ball() {
        let ball = body(BodyDescription::euclidean_ball(2, 1.0));
        let f = Quadratic::scaled_identity(2, 1.0);
        let rep = strong_convexity_sampled(&f, &ball, &ball, 1.0, &opts(500)).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.second_order_min_slack.abs() < 1e-6);
        assert!(rep.first_order_min_slack > -1e-9);
    }

    #[test]
    fn unit_quadratic_fails_against_a_long_ellipse() {
        let ball = body(BodyDescription::euclidean_ball(2, 1.0));
        let ellipse = body(BodyDescription::ellipsoid_axes(&[1.0, 10.0]));
        let f = Quadratic::scaled_identity(2, 1.0);
        let rep = strong_convexity_sampled(&f, &ball, &ellipse, 1.0, &opts(500)).unwrap();
        assert!(!rep.pass);
        assert!(rep.worst_direction[1].abs() > 0.9, "{:?}", rep.worst_direction);
        assert!(rep.second_order_min_slack < -90.0);
    }

    #[test]
    fn smoothing_moments() {
        let probe = SmoothingProbe {
            sigma: 0.7,
            samples: 20_000,
            seed: 3,
        };
        let x = [0.3, -1.2, 0.5];
        let sq = |y: &[f64]| dot(y, y);
        let (m, se) = gaussian_smooth_mc(&sq, &probe, &x).unwrap();
        let exact = dot(&x, &x) + 0.49 * 3.0;
        assert!((m - exact).abs() <= 3.0 * se, "{m} vs {exact} ± {se}");

        let lin = |y: &[f64]| 2.0 * y[0] - y[1] + 0.5 * y[2];
        let (m, se) = gaussian_smooth_mc(&lin, &probe, &x).unwrap();
        assert!((m - lin(&x)).abs() <= 3.0 * se);

        let probe1 = SmoothingProbe { sigma: 1.0, ..probe };
        let abs = |y: &[f64]| y[0].abs();
        let (m, se) = gaussian_smooth_mc(&abs, &probe1, &[0.0]).unwrap();
        assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() <= 3.0 * se);
    }

    #[test]
    fn monte_carlo_coverage_over_repetitions() {
        let x = [0.4, 0.1];
        let exact = dot(&x, &x) + 0.25 * 2.0;
        let sq = |y: &[f64]| dot(y, y);
        let hits = (0..100)
            .filter(|&seed| {
                let probe = SmoothingProbe {
                    sigma: 0.5,
                    samples: 2_000,
                    seed,
                };
                let (m, se) = gaussian_smooth_mc(&sq, &probe, &x).unwrap();
                (m - exact).abs() <= 3.0 * se
            })
            .count();
        assert!(hits >= 99, "{hits}");
    }

    #[test]
    fn smoothing_keeps_and_loses_modulus() {
        let ball = body(BodyDescription::euclidean_ball(2, 1.0));
        let probe = SmoothingProbe {
            sigma: 0.3,
            samples: 200,
            seed: 1,
        };
        let good = Quadratic::scaled_identity(2, 1.0);
        let rep = smoothing_preserves_convexity_check(&good, &probe, &ball, &ball, 1.0, &opts(200)).unwrap();
        assert!(rep.pass, "{rep:?}");
        let weak = Quadratic::scaled_identity(2, 0.5);
        let rep = smoothing_preserves_convexity_check(&weak, &probe, &ball, &ball, 1.0, &opts(200)).unwrap();
        assert!(!rep.pass);
        assert!((rep.min_slack + 0.5).abs() < 1e-6);
    }

    #[test]
    fn kinked_quadratic_dips_away_from_the_origin() {
        let ball = body(BodyDescription::euclidean_ball(2, 1.0));
        let probe = SmoothingProbe {
            sigma: 0.05,
            samples: 200,
            seed: 2,
        };
        let o = SampleOptions {
            samples: 300,
            inner_fraction: 1.0,
            ..SampleOptions::default()
        };
        let rep = smoothing_preserves_convexity_check(&KinkedQuadratic, &probe, &ball, &ball, 1.0, &o).unwrap();
        assert!(!rep.pass);
        // The quadratic branch is active for |x| ≤ 1 − 1/√2.
        assert!(linalg::norm(&rep.worst_point) > 0.25, "{:?}", rep.worst_point);
    }

    #[test]
    fn finite_differences() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let q = Quadratic { a: a.clone() };
        let FiniteDiff::Hessian(h) = finite_diff(&q, &[0.3, -0.7], 2, 1e-3).unwrap() else {
            panic!()
        };
        assert!((h - &a).amax() < 1e-6);
        let FiniteDiff::Gradient(g) = finite_diff(&q, &[0.3, -0.7], 1, 1e-3).unwrap() else {
            panic!()
        };
        assert!(linalg::distance(&g, &linalg::mat_vec(&a, &[0.3, -0.7])) < 1e-9);

        let lin = Quadratic {
            a: DMatrix::zeros(2, 2),
        };
        let FiniteDiff::Hessian(h) = finite_diff(&lin, &[1.0, 2.0], 2, 1e-3).unwrap() else {
            panic!()
        };
        assert_eq!(h.amax(), 0.0);
        assert!(finite_diff(&q, &[0.0, 0.0], 3, 1e-3).is_err());
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        // A cubic has nonzero third derivatives, so the gradient error is h²-dominated.
        struct Cubic;
        impl FunctionView for Cubic {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &[f64]) -> f64 {
                x[0].powi(3)
            }
            fn subgradient(&self, x: &[f64]) -> Vec<f64> {
                vec![3.0 * x[0] * x[0]]
            }
        }
        let err = |h: f64| match finite_diff(&Cubic, &[0.7], 1, h).unwrap() {
            FiniteDiff::Gradient(g) => (g[0] - 3.0 * 0.49).abs(),
            _ => unreachable!(),
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn piece_hessian_matches_finite_differences() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
        let p = QuasiQuadraticPiece::new(vec![0.1, -0.2], 0.3, vec![0.5, -1.0], sigma, 3.0).unwrap();
        struct View(QuasiQuadraticPiece);
        impl FunctionView for View {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, x: &[f64]) -> f64 {
                self.0.eval(x).unwrap()
            }
            fn subgradient(&self, x: &[f64]) -> Vec<f64> {
                self.0.grad(x).unwrap()
            }
        }
        let x = [0.1 + 0.3, -0.2 + 0.4];
        let exact = p.hessian(&x).unwrap();
        let fd = fd_hessian(&View(p), &x, 1e-3).unwrap();
        assert!((fd - exact).amax() < 1e-4);
    }

    #[test]
    fn audits() {
        let ball = body(BodyDescription::euclidean_ball(3, 1.0));
        let q = Quadratic::scaled_identity(3, 1.0);
        let bounds = DerivativeBounds {
            gradient: 1.0,
            hessian: 1.0,
            lipschitz: 0.0,
        };
        let rep = derivative_bound_audit(&q, &ball, bounds, 300, 0, 0.05).unwrap();
        assert!(rep.gradient_ok && rep.hessian_ok && rep.lipschitz_ok, "{rep:?}");
        assert_eq!(rep.max_lipschitz_ratio, 0.0);

        let cube = body(BodyDescription::boxed(&[1.0, 1.0], None));
        let quartic = QuarticSum { dim: 2 };
        let bounds = DerivativeBounds {
            gradient: 4.0 * 2f64.sqrt(),
            hessian: 12.0,
            lipschitz: QuarticSum::HESSIAN_LIPSCHITZ_ON_UNIT_BOX,
        };
        let rep = derivative_bound_audit(&quartic, &cube, bounds, 2_000, 1, 0.01).unwrap();
        assert!(rep.gradient_ok && rep.hessian_ok && rep.lipschitz_ok, "{rep:?}");
        assert!(rep.max_lipschitz_ratio > 18.0);

        let rep = strong_convexity_sampled(&Abs1, &body(BodyDescription::euclidean_ball(1, 1.0)), &body(BodyDescription::euclidean_ball(1, 1.0)), 0.0, &opts(100))
            .unwrap();
        assert!(rep.pass);
    }
}
