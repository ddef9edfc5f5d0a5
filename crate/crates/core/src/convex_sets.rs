//! Convex bodies and their oracles.
//!
//! A [`ConvexBody`] answers membership, separation, linear minimization,
//! support and gauge queries. Bodies are built from a [`BodyDescription`],
//! the `{kind, dim, params}` table used in every config file.
//!
//! Supported kinds:
//!
//! | kind           | params                                   |
//! |----------------|------------------------------------------|
//! | `euclidean-ball` | `radius`                               |
//! | `lp-ball`      | `p` (`inf` allowed), `radius`            |
//! | `box`          | `halfwidths`, optional `center`          |
//! | `ellipsoid`    | `semi_axes` or `shape` (rows of `A`, body is `xᵀA⁻¹x ≤ 1`) |
//! | `polytope-v`   | `vertices`                               |
//! | `polytope-h`   | `normals`, `offsets` (body is `⟨a_k, x⟩ ≤ b_k`) |
//!
//! Synthesis requires centrally symmetric bodies. The FTRL runner also
//! accepts a box with a center and vertex polytopes that are not symmetric,
//! e.g. the probability simplex.

use std::sync::OnceLock;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cutting_plane::{self, KelleyOptions};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, norm};
use crate::lp::{LinearProgram, LpOutcome, Relation};

/// Subset enumeration cap for exact radius computation of polytopes.
const ENUMERATION_BUDGET: u128 = 2_000_000;
/// Largest sphere cover we are willing to materialize.
const COVER_BUDGET: f64 = 4.0e6;
const GAUGE_BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDescription {
    pub kind: String,
    pub dim: usize,
    #[serde(default)]
    pub params: toml::Table,
}

impl BodyDescription {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("body descriptions always serialize")
    }

    pub fn euclidean_ball(dim: usize, radius: f64) -> Self {
        let mut params = toml::Table::new();
        params.insert("radius".into(), radius.into());
        BodyDescription {
            kind: "euclidean-ball".into(),
            dim,
            params,
        }
    }

    pub fn lp_ball(dim: usize, p: f64, radius: f64) -> Self {
        let mut params = toml::Table::new();
        params.insert("p".into(), p.into());
        params.insert("radius".into(), radius.into());
        BodyDescription {
            kind: "lp-ball".into(),
            dim,
            params,
        }
    }

    pub fn boxed(halfwidths: &[f64], center: Option<&[f64]>) -> Self {
        let mut params = toml::Table::new();
        params.insert("halfwidths".into(), float_array(halfwidths));
        if let Some(c) = center {
            params.insert("center".into(), float_array(c));
        }
        BodyDescription {
            kind: "box".into(),
            dim: halfwidths.len(),
            params,
        }
    }

    pub fn ellipsoid_axes(semi_axes: &[f64]) -> Self {
        let mut params = toml::Table::new();
        params.insert("semi_axes".into(), float_array(semi_axes));
        BodyDescription {
            kind: "ellipsoid".into(),
            dim: semi_axes.len(),
            params,
        }
    }

    pub fn ellipsoid_shape(shape: &[Vec<f64>]) -> Self {
        let mut params = toml::Table::new();
        params.insert(
            "shape".into(),
            toml::Value::Array(shape.iter().map(|r| float_array(r)).collect()),
        );
        BodyDescription {
            kind: "ellipsoid".into(),
            dim: shape.len(),
            params,
        }
    }

    pub fn polytope_v(vertices: &[Vec<f64>]) -> Self {
        let mut params = toml::Table::new();
        params.insert(
            "vertices".into(),
            toml::Value::Array(vertices.iter().map(|r| float_array(r)).collect()),
        );
        BodyDescription {
            kind: "polytope-v".into(),
            dim: vertices.first().map_or(0, Vec::len),
            params,
        }
    }

    pub fn polytope_h(normals: &[Vec<f64>], offsets: &[f64]) -> Self {
        let mut params = toml::Table::new();
        params.insert(
            "normals".into(),
            toml::Value::Array(normals.iter().map(|r| float_array(r)).collect()),
        );
        params.insert("offsets".into(), float_array(offsets));
        BodyDescription {
            kind: "polytope-h".into(),
            dim: normals.first().map_or(0, Vec::len),
            params,
        }
    }

    /// Vertices `e_1, ..., e_d`.
    pub fn simplex(dim: usize) -> Self {
        let vertices: Vec<Vec<f64>> = (0..dim)
            .map(|k| {
                let mut e = vec![0.0; dim];
                e[k] = 1.0;
                e
            })
            .collect();
        Self::polytope_v(&vertices)
    }
}

fn float_array(xs: &[f64]) -> toml::Value {
    toml::Value::Array(xs.iter().map(|&x| toml::Value::Float(x)).collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BallParams {
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LpParams {
    p: f64,
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxParams {
    halfwidths: Vec<f64>,
    center: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EllipsoidParams {
    semi_axes: Option<Vec<f64>>,
    shape: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolytopeVParams {
    vertices: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolytopeHParams {
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

fn params<T: serde::de::DeserializeOwned>(desc: &BodyDescription) -> Result<T> {
    toml::Value::Table(desc.params.clone())
        .try_into()
        .map_err(|e| Error::Config(format!("{} params: {}", desc.kind, e)))
}

#[derive(Debug, Clone)]
enum Shape {
    Ball {
        radius: f64,
    },
    Lp {
        p: f64,
        radius: f64,
    },
    Box {
        halfwidths: Vec<f64>,
        center: Vec<f64>,
    },
    /// Body `{x : xᵀ A⁻¹ x ≤ 1}`.
    Ellipsoid {
        shape: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
    PolytopeV {
        vertices: Vec<Vec<f64>>,
    },
    /// Body `{x : ⟨a_k, x⟩ ≤ b_k}` with every `b_k > 0`.
    PolytopeH {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
    },
}

/// Euclidean radii of the largest centered inscribed ball and the smallest
/// centered enclosing ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyMetadata {
    pub r_inner: f64,
    pub r_outer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Separation {
    Inside,
    /// Unit `normal` with `⟨normal, x⟩ ≥ offset` for every `x` in the body
    /// and `⟨normal, y⟩ < offset` for the query point.
    Cut { normal: Vec<f64>, offset: f64 },
}

#[derive(Debug, Clone)]
pub struct ConvexBody {
    dim: usize,
    shape: Shape,
    symmetric: bool,
    description: BodyDescription,
    radii: OnceLock<BodyMetadata>,
}

impl PartialEq for ConvexBody {
    fn eq(&self, other: &Self) -> bool {
        self.description == other.description
    }
}

impl ConvexBody {
    pub fn from_description(desc: &BodyDescription) -> Result<Self> {
        let d = desc.dim;
        if d == 0 {
            return Err(Error::Config("body dimension must be positive".into()));
        }
        let shape = match desc.kind.as_str() {
            "euclidean-ball" => {
                let p: BallParams = params(desc)?;
                positive("radius", p.radius)?;
                Shape::Ball { radius: p.radius }
            }
            "lp-ball" => {
                let p: LpParams = params(desc)?;
                positive("radius", p.radius)?;
                if p.p.is_nan() || p.p < 1.0 {
                    return Err(Error::Config(format!("lp-ball exponent must be >= 1, got {}", p.p)));
                }
                Shape::Lp {
                    p: p.p,
                    radius: p.radius,
                }
            }
            "box" => {
                let p: BoxParams = params(desc)?;
                expect_len("halfwidths", &p.halfwidths, d)?;
                for &h in &p.halfwidths {
                    positive("halfwidth", h)?;
                }
                let center = p.center.unwrap_or_else(|| vec![0.0; d]);
                expect_len("center", &center, d)?;
                if center.iter().zip(&p.halfwidths).any(|(c, h)| !c.is_finite() || c.abs() > *h) {
                    return Err(Error::Config("box must contain the origin".into()));
                }
                Shape::Box {
                    halfwidths: p.halfwidths,
                    center,
                }
            }
            "ellipsoid" => {
                let p: EllipsoidParams = params(desc)?;
                let shape = match (p.semi_axes, p.shape) {
                    (Some(axes), None) => {
                        expect_len("semi_axes", &axes, d)?;
                        for &a in &axes {
                            positive("semi-axis", a)?;
                        }
                        DMatrix::from_diagonal(&DVector::from_iterator(d, axes.iter().map(|a| a * a)))
                    }
                    (None, Some(rows)) => {
                        expect_len("shape", &rows, d)?;
                        for row in &rows {
                            expect_len("shape row", row, d)?;
                        }
                        let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                        if linalg::asymmetry(&m) > 1e-12 * m.amax().max(1.0) {
                            return Err(Error::Config("ellipsoid shape must be symmetric".into()));
                        }
                        linalg::symmetrize(&m)
                    }
                    _ => {
                        return Err(Error::Config(
                            "ellipsoid needs exactly one of `semi_axes` or `shape`".into(),
                        ))
                    }
                };
                let inverse = shape
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Config("ellipsoid shape must be positive definite".into()))?
                    .inverse();
                Shape::Ellipsoid {
                    shape,
                    inverse: linalg::symmetrize(&inverse),
                }
            }
            "polytope-v" => {
                let p: PolytopeVParams = params(desc)?;
                if p.vertices.is_empty() {
                    return Err(Error::Config("polytope-v needs at least one vertex".into()));
                }
                for v in &p.vertices {
                    expect_len("vertex", v, d)?;
                    finite("vertex", v)?;
                }
                Shape::PolytopeV { vertices: p.vertices }
            }
            "polytope-h" => {
                let p: PolytopeHParams = params(desc)?;
                if p.normals.is_empty() {
                    return Err(Error::Config("polytope-h needs at least one halfspace".into()));
                }
                expect_len("offsets", &p.offsets, p.normals.len())?;
                for a in &p.normals {
                    expect_len("normal", a, d)?;
                    finite("normal", a)?;
                    if norm(a) == 0.0 {
                        return Err(Error::Config("polytope-h normals must be nonzero".into()));
                    }
                }
                for &b in &p.offsets {
                    positive("offset", b)?;
                }
                Shape::PolytopeH {
                    normals: p.normals,
                    offsets: p.offsets,
                }
            }
            other => return Err(Error::Config(format!("unsupported body kind `{other}`"))),
        };
        let symmetric = match &shape {
            Shape::Ball { .. } | Shape::Lp { .. } | Shape::Ellipsoid { .. } => true,
            Shape::Box { center, .. } => center.iter().all(|&c| c == 0.0),
            Shape::PolytopeV { vertices } => closed_under_negation(vertices),
            Shape::PolytopeH { normals, offsets } => {
                let scaled: Vec<Vec<f64>> = normals
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| linalg::scale(a, 1.0 / b))
                    .collect();
                closed_under_negation(&scaled)
            }
        };
        Ok(ConvexBody {
            dim: d,
            shape,
            symmetric,
            description: desc.clone(),
            radii: OnceLock::new(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_description(&BodyDescription::from_toml_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &str {
        &self.description.kind
    }

    pub fn description(&self) -> &BodyDescription {
        &self.description
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn require_symmetric(&self) -> Result<()> {
        if self.symmetric {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} body is not centrally symmetric",
                self.kind()
            )))
        }
    }

    /// True for the vertex polytope `conv{e_1, ..., e_d}`.
    pub fn is_probability_simplex(&self) -> bool {
        match &self.shape {
            Shape::PolytopeV { vertices } => {
                vertices.len() == self.dim
                    && (0..self.dim).all(|k| {
                        vertices.iter().any(|v| {
                            v.iter()
                                .enumerate()
                                .all(|(j, &x)| x == if j == k { 1.0 } else { 0.0 })
                        })
                    })
            }
            _ => false,
        }
    }

    fn origin_interior(&self) -> bool {
        match &self.shape {
            Shape::Box { halfwidths, center } => {
                center.iter().zip(halfwidths).all(|(c, h)| c.abs() < *h)
            }
            Shape::PolytopeV { .. } => self.symmetric,
            _ => true,
        }
    }

    /// Euclidean projection of `y` for the kinds where it has a closed form:
    /// balls, boxes and the probability simplex.
    pub fn euclidean_projection(&self, y: &[f64]) -> Option<Vec<f64>> {
        match &self.shape {
            Shape::Ball { radius } => {
                let n = norm(y);
                Some(if n <= *radius { y.to_vec() } else { linalg::scale(y, radius / n) })
            }
            Shape::Box { halfwidths, center } => Some(
                y.iter()
                    .zip(halfwidths)
                    .zip(center)
                    .map(|((v, h), c)| v.clamp(c - h, c + h))
                    .collect(),
            ),
            _ if self.is_probability_simplex() => Some(simplex_projection(y)),
            _ => None,
        }
    }

    /// A point of the body that every retraction moves toward.
    pub fn anchor(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Box { center, .. } => center.clone(),
            Shape::PolytopeV { vertices } if !self.symmetric => {
                let mut m = vec![0.0; self.dim];
                for v in vertices {
                    m = linalg::add(&m, v);
                }
                linalg::scale(&m, 1.0 / vertices.len() as f64)
            }
            _ => vec![0.0; self.dim],
        }
    }

    /// Weak membership: `true` certifies `y` is within Euclidean distance
    /// `delta` of the body, `false` certifies `y` is outside the body.
    /// Points on the boundary are members.
    pub fn membership(&self, y: &[f64], delta: f64) -> Result<bool> {
        check_dim(self.dim, y.len())?;
        if !(delta >= 0.0) {
            return Err(Error::Input(format!("membership tolerance must be >= 0, got {delta}")));
        }
        match &self.shape {
            Shape::Box { halfwidths, center } => {
                let slack = delta / (self.dim as f64).sqrt();
                Ok(y
                    .iter()
                    .zip(center)
                    .zip(halfwidths)
                    .all(|((x, c), h)| (x - c).abs() <= h + slack))
            }
            Shape::PolytopeV { vertices } => Ok(hull_residual(vertices, y)? <= delta),
            _ => {
                // y / gauge(y) lies on the boundary at distance |y| (1 - 1/gauge).
                let g = self.gauge(y, 1e-12)?;
                let n = norm(y);
                Ok(g <= 1.0 + 1e-12 || (n > 0.0 && n * (g - 1.0) <= delta * g))
            }
        }
    }

    /// A point `y` of the body with `⟨c, y⟩ ≤ min_body ⟨c, ·⟩ + delta_lin`.
    pub fn linear_minimize(&self, c: &[f64], delta_lin: f64) -> Result<Vec<f64>> {
        check_dim(self.dim, c.len())?;
        if c.iter().all(|&x| x == 0.0) {
            return Err(Error::Input("linear objective must be nonzero".into()));
        }
        if !(delta_lin > 0.0) {
            return Err(Error::Input(format!("linear oracle tolerance must be > 0, got {delta_lin}")));
        }
        Ok(match &self.shape {
            Shape::Ball { radius } => linalg::scale(c, -radius / norm(c)),
            Shape::Lp { p, radius } => lp_minimizer(c, *p, *radius),
            Shape::Box { halfwidths, center } => center
                .iter()
                .zip(halfwidths)
                .zip(c)
                .map(|((m, h), ci)| m - h * sign(*ci))
                .collect(),
            Shape::Ellipsoid { shape, .. } => {
                let ac = linalg::mat_vec(shape, c);
                let s = dot(c, &ac).sqrt();
                linalg::scale(&ac, -1.0 / s)
            }
            Shape::PolytopeV { vertices } => {
                let mut best = 0;
                let mut best_val = f64::INFINITY;
                for (k, v) in vertices.iter().enumerate() {
                    let val = dot(c, v);
                    if val < best_val {
                        best = k;
                        best_val = val;
                    }
                }
                vertices[best].clone()
            }
            Shape::PolytopeH { .. } => {
                let opts = KelleyOptions {
                    tol: delta_lin,
                    max_iter: 10_000,
                    cache: usize::MAX,
                    sep_delta: delta_lin * 1e-3,
                };
                let out = cutting_plane::minimize(None, c, self, &opts)?;
                if !out.certified {
                    return Err(Error::Numeric(format!(
                        "cutting-plane linear oracle stopped with gap {}",
                        out.value - out.lower
                    )));
                }
                out.x
            }
        })
    }

    /// `max_{w ∈ body} ⟨v, w⟩`.
    pub fn support(&self, v: &[f64], delta_lin: f64) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::Input("support direction must be nonzero".into()));
        }
        Ok(match &self.shape {
            Shape::Ball { radius } => radius * norm(v),
            Shape::Lp { p, radius } => radius * lp_norm(v, dual_exponent(*p)),
            Shape::Box { halfwidths, center } => v
                .iter()
                .zip(halfwidths)
                .zip(center)
                .map(|((x, h), c)| x * c + h * x.abs())
                .sum(),
            Shape::Ellipsoid { shape, .. } => linalg::quad_form(shape, v).max(0.0).sqrt(),
            Shape::PolytopeV { vertices } => vertices
                .iter()
                .map(|w| dot(v, w))
                .fold(f64::NEG_INFINITY, f64::max),
            Shape::PolytopeH { .. } => {
                let neg = linalg::scale(v, -1.0);
                let y = self.linear_minimize(&neg, delta_lin)?;
                dot(v, &y)
            }
        })
    }

    /// Gauge of the polar body. For symmetric bodies this is the support
    /// function.
    pub fn dual_gauge(&self, v: &[f64], delta_lin: f64) -> Result<f64> {
        self.support(v, delta_lin)
    }

    /// `inf {a > 0 : v / a ∈ body}`, `0` at the origin and `+inf` when no
    /// positive multiple of the body reaches `v`.
    pub fn gauge(&self, v: &[f64], tol: f64) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        if v.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let canon;
        let v = if self.symmetric {
            canon = canonical_sign(v);
            &canon[..]
        } else {
            v
        };
        Ok(match &self.shape {
            Shape::Ball { radius } => norm(v) / radius,
            Shape::Lp { p, radius } => lp_norm(v, *p) / radius,
            Shape::Box { halfwidths, center } => {
                let mut g: f64 = 0.0;
                for ((x, h), c) in v.iter().zip(halfwidths).zip(center) {
                    let bound = if *x > 0.0 { c + h } else { c - h };
                    if *x == 0.0 {
                        continue;
                    }
                    if bound == 0.0 || bound.signum() != x.signum() {
                        return Ok(f64::INFINITY);
                    }
                    g = g.max(x / bound);
                }
                g
            }
            Shape::Ellipsoid { inverse, .. } => linalg::quad_form(inverse, v).max(0.0).sqrt(),
            Shape::PolytopeH { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .map(|(a, b)| dot(a, v) / b)
                .fold(0.0, f64::max),
            Shape::PolytopeV { vertices } => {
                if self.origin_interior() {
                    match polar_lp(vertices, v)? {
                        Some((value, _)) => value,
                        None => f64::INFINITY,
                    }
                } else {
                    self.gauge_bisection(v, tol)?
                }
            }
        })
    }

    /// Gauge by bisection on membership, bracketed by the radii.
    pub fn gauge_bisection(&self, v: &[f64], tol: f64) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        let n = norm(v);
        if n == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = match self.radii.get() {
            Some(m) => (n / m.r_outer, n / m.r_inner),
            None => match self.inner_outer_radii() {
                Ok(m) => (n / m.r_outer, n / m.r_inner),
                Err(_) => (0.0, f64::INFINITY),
            },
        };
        if !hi.is_finite() {
            // Grow until the scaled point is a member.
            hi = n.max(1.0);
            let mut grown = 0;
            while !self.membership(&linalg::scale(v, 1.0 / hi), 0.0)? {
                hi *= 2.0;
                grown += 1;
                if grown > 200 {
                    return Ok(f64::INFINITY);
                }
            }
        }
        for _ in 0..GAUGE_BISECTION_STEPS {
            if hi - lo <= tol * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.membership(&linalg::scale(v, 1.0 / mid), 0.0)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    pub fn separation(&self, y: &[f64], delta: f64) -> Result<Separation> {
        check_dim(self.dim, y.len())?;
        if self.membership(y, delta)? {
            return Ok(Separation::Inside);
        }
        let cut = |normal: Vec<f64>, offset: f64| Separation::Cut { normal, offset };
        Ok(match &self.shape {
            Shape::Ball { radius } => cut(linalg::scale(y, -1.0 / norm(y)), -radius),
            Shape::Box { .. } => {
                let p = self.project_box(y);
                let n = linalg::normalized(&linalg::sub(&p, y))
                    .ok_or_else(|| Error::Numeric("box separation at a member point".into()))?;
                let offset = dot(&n, &p);
                cut(n, offset)
            }
            Shape::Lp { p, radius } => {
                let grad = lp_norm_gradient(y, *p);
                let n = linalg::normalized(&linalg::scale(&grad, -1.0))
                    .ok_or_else(|| Error::Numeric("zero lp-norm gradient".into()))?;
                let offset = -radius * lp_norm(&n, dual_exponent(*p));
                cut(n, offset)
            }
            Shape::Ellipsoid { shape, inverse } => {
                let w = linalg::mat_vec(inverse, y);
                let n = linalg::normalized(&linalg::scale(&w, -1.0))
                    .ok_or_else(|| Error::Numeric("degenerate ellipsoid normal".into()))?;
                let offset = -linalg::quad_form(shape, &n).max(0.0).sqrt();
                cut(n, offset)
            }
            Shape::PolytopeH { normals, offsets } => {
                let mut best = 0;
                let mut best_viol = f64::NEG_INFINITY;
                for (k, (a, b)) in normals.iter().zip(offsets).enumerate() {
                    let viol = (dot(a, y) - b) / norm(a);
                    if viol > best_viol {
                        best = k;
                        best_viol = viol;
                    }
                }
                let na = norm(&normals[best]);
                cut(linalg::scale(&normals[best], -1.0 / na), -offsets[best] / na)
            }
            Shape::PolytopeV { vertices } => {
                let n = if self.origin_interior() {
                    match polar_lp(vertices, y)? {
                        Some((_, u)) => linalg::normalized(&linalg::scale(&u, -1.0)),
                        None => None,
                    }
                } else {
                    let p = hull_projection(vertices, y);
                    linalg::normalized(&linalg::sub(&p, y))
                };
                let n = n.ok_or_else(|| Error::Numeric("polytope separation failed".into()))?;
                let offset = vertices
                    .iter()
                    .map(|v| dot(&n, v))
                    .fold(f64::INFINITY, f64::min);
                cut(n, offset)
            }
        })
    }

    fn project_box(&self, y: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Box { halfwidths, center } => y
                .iter()
                .zip(center)
                .zip(halfwidths)
                .map(|((x, c), h)| x.clamp(c - h, c + h))
                .collect(),
            _ => unreachable!("project_box on a non-box body"),
        }
    }

    /// A member of the body on the segment from the anchor to `y`, equal
    /// to `y` when `y` is already a member.
    pub fn retract(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, y.len())?;
        if let Shape::Box { .. } = self.shape {
            return Ok(self.project_box(y));
        }
        if self.origin_interior() {
            let g = self.gauge(y, 1e-12)?;
            if g <= 1.0 {
                return Ok(y.to_vec());
            }
            if g.is_finite() {
                return Ok(linalg::scale(y, 1.0 / g));
            }
        }
        if self.membership(y, 0.0)? {
            return Ok(y.to_vec());
        }
        let a = self.anchor();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..GAUGE_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let p = linalg::axpy(&a, mid, &linalg::sub(y, &a));
            if self.membership(&p, 0.0)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(linalg::axpy(&a, lo, &linalg::sub(y, &a)))
    }

    /// Per-coordinate bounds containing the body.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>> {
        let d = self.dim;
        Ok(match &self.shape {
            Shape::Ball { radius } | Shape::Lp { radius, .. } => vec![(-radius, *radius); d],
            Shape::Box { halfwidths, center } => center
                .iter()
                .zip(halfwidths)
                .map(|(c, h)| (c - h, c + h))
                .collect(),
            Shape::Ellipsoid { shape, .. } => (0..d)
                .map(|k| {
                    let s = shape[(k, k)].sqrt();
                    (-s, s)
                })
                .collect(),
            Shape::PolytopeV { vertices } => (0..d)
                .map(|k| {
                    vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v[k]), hi.max(v[k]))
                    })
                })
                .collect(),
            Shape::PolytopeH { .. } => {
                let r = self.inner_outer_radii()?.r_outer;
                vec![(-r, r); d]
            }
        })
    }

    /// Exact for balls, boxes and ellipsoids. Polytopes enumerate facets
    /// or vertices and fall back to a sphere-cover search past a budget.
    pub fn inner_outer_radii(&self) -> Result<BodyMetadata> {
        if let Some(m) = self.radii.get() {
            return Ok(*m);
        }
        let d = self.dim as f64;
        let (r_inner, r_outer) = match &self.shape {
            Shape::Ball { radius } => (*radius, *radius),
            Shape::Lp { p, radius } => {
                let e = if p.is_infinite() { 0.5 } else { 0.5 - 1.0 / p };
                let f = d.powf(e);
                (radius * f.min(1.0), radius * f.max(1.0))
            }
            Shape::Box { halfwidths, center } => {
                let r = center
                    .iter()
                    .zip(halfwidths)
                    .map(|(c, h)| h - c.abs())
                    .fold(f64::INFINITY, f64::min);
                let far: Vec<f64> = center.iter().zip(halfwidths).map(|(c, h)| c.abs() + h).collect();
                (r, norm(&far))
            }
            Shape::Ellipsoid { shape, .. } => {
                let eig = shape.clone().symmetric_eigen();
                let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
                (lo.sqrt(), hi.sqrt())
            }
            Shape::PolytopeV { vertices } => {
                let r_outer = vertices.iter().map(|v| norm(v)).fold(0.0, f64::max);
                let r_inner = if self.origin_interior() {
                    polytope_v_inner_radius(self, vertices, r_outer)?
                } else {
                    0.0
                };
                (r_inner, r_outer)
            }
            Shape::PolytopeH { normals, offsets } => {
                let r_inner = normals
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| b / norm(a))
                    .fold(f64::INFINITY, f64::min);
                (r_inner, polytope_h_outer_radius(normals, offsets)?)
            }
        };
        if !(r_inner > 0.0) || !r_outer.is_finite() || r_inner > r_outer * (1.0 + 1e-12) {
            return Err(Error::Input(format!(
                "{} body is degenerate or unbounded (r = {r_inner}, R = {r_outer})",
                self.kind()
            )));
        }
        let m = BodyMetadata { r_inner, r_outer };
        let _ = self.radii.set(m);
        Ok(m)
    }

    /// Uniform samples by rejection from the bounding box.
    pub fn sample_uniform(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<Vec<f64>>> {
        let bounds = self.bounding_box()?;
        let mut out = Vec::with_capacity(n);
        let mut tries: usize = 0;
        let cap = n.saturating_mul(1000).max(100_000);
        while out.len() < n {
            tries += 1;
            if tries > cap {
                return Err(Error::Resource {
                    what: format!("rejection sampling from {} body", self.kind()),
                    estimate: tries as f64 / (out.len().max(1) as f64),
                });
            }
            let y: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            if self.membership(&y, 0.0)? {
                out.push(y);
            }
        }
        Ok(out)
    }
}

/// Projection onto `{x ≥ 0, Σx = 1}` by the sorting method.
fn simplex_projection(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

fn positive(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive and finite, got {x}")))
    }
}

fn finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} has non-finite entries")))
    }
}

fn expect_len<T>(what: &str, xs: &[T], d: usize) -> Result<()> {
    if xs.len() == d {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} has length {}, expected {d}", xs.len())))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Flips `v` so that its first nonzero entry is positive.
fn canonical_sign(v: &[f64]) -> Vec<f64> {
    match v.iter().find(|&&x| x != 0.0) {
        Some(&x) if x < 0.0 => v.iter().map(|y| -y).collect(),
        _ => v.to_vec(),
    }
}

fn closed_under_negation(points: &[Vec<f64>]) -> bool {
    points.iter().all(|p| {
        let scale = linalg::norm_inf(p).max(1.0);
        points
            .iter()
            .any(|q| p.iter().zip(q).all(|(a, b)| (a + b).abs() <= 1e-12 * scale))
    })
}

fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

pub(crate) fn lp_norm(v: &[f64], p: f64) -> f64 {
    let m = linalg::norm_inf(v);
    if m == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        m
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        norm(v)
    } else {
        m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// A subgradient of the lp norm at a nonzero `y`; ties go to the lowest index.
fn lp_norm_gradient(y: &[f64], p: f64) -> Vec<f64> {
    let d = y.len();
    if p.is_infinite() {
        let k = (0..d).fold(0, |b, k| if y[k].abs() > y[b].abs() { k } else { b });
        let mut g = vec![0.0; d];
        g[k] = sign(y[k]);
        g
    } else if p == 1.0 {
        y.iter().map(|&x| sign(x)).collect()
    } else {
        let n = lp_norm(y, p);
        y.iter()
            .map(|&x| sign(x) * (x.abs() / n).powf(p - 1.0))
            .collect()
    }
}

fn lp_minimizer(c: &[f64], p: f64, radius: f64) -> Vec<f64> {
    let d = c.len();
    if p == 1.0 {
        let k = (0..d).fold(0, |b, k| if c[k].abs() > c[b].abs() { k } else { b });
        let mut y = vec![0.0; d];
        y[k] = -radius * sign(c[k]);
        y
    } else if p.is_infinite() {
        c.iter().map(|&x| -radius * sign(x)).collect()
    } else {
        let q = dual_exponent(p);
        let n = lp_norm(c, q);
        c.iter()
            .map(|&x| -radius * sign(x) * (x.abs() / n).powf(q - 1.0))
            .collect()
    }
}

/// `min ‖y − Vλ‖₁` over the simplex of weights.
fn hull_residual(vertices: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let d = y.len();
    let mut lp = LinearProgram::new();
    let lambda: Vec<usize> = vertices.iter().map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
    let plus: Vec<usize> = (0..d).map(|_| lp.add_var(1.0, 0.0, f64::INFINITY)).collect();
    let minus: Vec<usize> = (0..d).map(|_| lp.add_var(1.0, 0.0, f64::INFINITY)).collect();
    lp.add_row(lambda.iter().map(|&l| (l, 1.0)).collect(), Relation::Ge, 1.0);
    lp.add_row(lambda.iter().map(|&l| (l, 1.0)).collect(), Relation::Le, 1.0);
    for j in 0..d {
        let mut row: Vec<(usize, f64)> = lambda
            .iter()
            .zip(vertices)
            .map(|(&l, v)| (l, v[j]))
            .collect();
        row.push((plus[j], 1.0));
        row.push((minus[j], -1.0));
        lp.add_row(row.clone(), Relation::Ge, y[j]);
        lp.add_row(row, Relation::Le, y[j]);
    }
    match lp.solve()? {
        LpOutcome::Optimal { objective, .. } => Ok(objective.max(0.0)),
        other => Err(Error::Numeric(format!("hull residual LP: {other:?}"))),
    }
}

/// `max ⟨u, y⟩` over the polar `{u : ⟨u, v_k⟩ ≤ 1}`. `None` when unbounded.
fn polar_lp(vertices: &[Vec<f64>], y: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
    let d = y.len();
    let mut lp = LinearProgram::new();
    let u: Vec<usize> = (0..d)
        .map(|j| lp.add_var(-y[j], f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    for v in vertices {
        lp.add_row(u.iter().zip(v).map(|(&i, &x)| (i, x)).collect(), Relation::Le, 1.0);
    }
    match lp.solve()? {
        LpOutcome::Optimal { objective, values } => Ok(Some((-objective, values))),
        LpOutcome::Unbounded => Ok(None),
        LpOutcome::Infeasible => Err(Error::Numeric("polar LP infeasible".into())),
    }
}

/// Approximate Euclidean projection onto a vertex hull by Frank-Wolfe.
fn hull_projection(vertices: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut x = vertices[0].clone();
    for k in 0..2000 {
        let grad = linalg::sub(&x, y);
        let s = vertices
            .iter()
            .min_by(|a, b| dot(&grad, a).total_cmp(&dot(&grad, b)))
            .expect("nonempty vertex list");
        let dir = linalg::sub(s, &x);
        let dd = dot(&dir, &dir);
        if dd == 0.0 {
            break;
        }
        let step = (-dot(&grad, &dir) / dd).clamp(0.0, 1.0);
        if step == 0.0 && k > 0 {
            break;
        }
        x = linalg::axpy(&x, step, &dir);
    }
    x
}

fn combinations_count(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * (n as u128 - i) / (i + 1);
        if c > u128::MAX / 1024 {
            return u128::MAX;
        }
    }
    c
}

fn solve_square(rows: &[&Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let d = rhs.len();
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    let lu = m.lu();
    if lu.u().diagonal().iter().any(|x| x.abs() < 1e-12) {
        return None;
    }
    lu.solve(&DVector::from_column_slice(rhs))
        .map(|s| s.iter().copied().collect())
}

/// Smallest distance from the origin to a supporting hyperplane through
/// `d` vertices.
fn polytope_v_inner_radius(body: &ConvexBody, vertices: &[Vec<f64>], r_outer: f64) -> Result<f64> {
    let d = body.dim;
    let count = combinations_count(vertices.len(), d);
    if count <= ENUMERATION_BUDGET {
        let ones = vec![1.0; d];
        let mut best = f64::INFINITY;
        for subset in (0..vertices.len()).combinations(d) {
            let rows: Vec<&Vec<f64>> = subset.iter().map(|&i| &vertices[i]).collect();
            let Some(a) = solve_square(&rows, &ones) else { continue };
            let scale = linalg::norm_inf(&a).max(1.0);
            if vertices.iter().all(|v| dot(&a, v) <= 1.0 + 1e-9 * scale) {
                best = best.min(1.0 / norm(&a));
            }
        }
        return Ok(if best.is_finite() { best } else { 0.0 });
    }
    // Support minimization over a cover; h(u) is R-Lipschitz in u.
    let mut eps = 0.05;
    let cover = loop {
        match sphere_cover(d, eps) {
            Ok(c) => break c,
            Err(Error::Resource { .. }) if eps < 0.5 => eps *= 2.0,
            Err(e) => return Err(e),
        }
    };
    let min_support = cover
        .directions
        .iter()
        .map(|u| vertices.iter().map(|v| dot(u, v)).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    let r = min_support - r_outer * cover.resolution;
    let probe_ok = cover.directions.iter().all(|u| {
        body.membership(&linalg::scale(u, r.max(0.0)), 1e-12)
            .unwrap_or(false)
    });
    Ok(if probe_ok { r.max(0.0) } else { 0.0 })
}

/// Largest vertex norm, by enumerating intersections of `d` facets.
fn polytope_h_outer_radius(normals: &[Vec<f64>], offsets: &[f64]) -> Result<f64> {
    let d = normals[0].len();
    let count = combinations_count(normals.len(), d);
    if count > ENUMERATION_BUDGET {
        return Err(Error::Resource {
            what: "polytope-h vertex enumeration".into(),
            estimate: count as f64,
        });
    }
    let mut best: f64 = 0.0;
    let mut found = false;
    for subset in (0..normals.len()).combinations(d) {
        let rows: Vec<&Vec<f64>> = subset.iter().map(|&i| &normals[i]).collect();
        let rhs: Vec<f64> = subset.iter().map(|&i| offsets[i]).collect();
        let Some(x) = solve_square(&rows, &rhs) else { continue };
        let feasible = normals
            .iter()
            .zip(offsets)
            .all(|(a, b)| dot(a, &x) <= b + 1e-9 * b.abs().max(norm(a) * norm(&x)));
        if feasible {
            found = true;
            best = best.max(norm(&x));
        }
    }
    if !found {
        return Ok(f64::INFINITY);
    }
    Ok(best)
}

/// Unit directions within `resolution` of every unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereCover {
    pub dim: usize,
    pub resolution: f64,
    pub directions: Vec<Vec<f64>>,
}

/// Normalized points of a lattice on the surface of `[-1, 1]^d`.
///
/// With `n` intervals per axis a surface point is within `sqrt(d-1)/n` of a
/// lattice point on its face, and normalization does not increase
/// distances outside the unit ball. `n` is chosen so that this bound is
/// `resolution / 2`.
pub fn sphere_cover(d: usize, resolution: f64) -> Result<SphereCover> {
    if d == 0 {
        return Err(Error::Input("sphere cover dimension must be positive".into()));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Input(format!(
            "sphere cover resolution must be positive, got {resolution}"
        )));
    }
    if d == 1 {
        return Ok(SphereCover {
            dim: 1,
            resolution,
            directions: vec![vec![1.0], vec![-1.0]],
        });
    }
    let n = (2.0 * ((d - 1) as f64).sqrt() / resolution).ceil().max(1.0);
    let estimate = 2.0 * d as f64 * (n + 1.0).powi(d as i32 - 1);
    if !(estimate <= COVER_BUDGET) {
        return Err(Error::Resource {
            what: format!("sphere cover in dimension {d} at resolution {resolution}"),
            estimate,
        });
    }
    let n = n as usize;
    let mut keys = std::collections::BTreeSet::new();
    let mut directions = Vec::new();
    for axis in 0..d {
        for s in [1.0, -1.0] {
            for idx in (0..d - 1).map(|_| 0..=n).multi_cartesian_product() {
                let mut p = Vec::with_capacity(d);
                let mut it = idx.iter();
                for k in 0..d {
                    if k == axis {
                        p.push(s);
                    } else {
                        let j = *it.next().expect("d-1 lattice indices");
                        p.push(-1.0 + 2.0 * j as f64 / n as f64);
                    }
                }
                // Lattice points on shared edges are generated by several faces.
                let key: Vec<i64> = p.iter().map(|x| (x * (n as f64) * 2.0).round() as i64).collect();
                if keys.insert(key) {
                    directions.push(linalg::scale(&p, 1.0 / norm(&p)));
                }
            }
        }
    }
    Ok(SphereCover {
        dim: d,
        resolution,
        directions,
    })
}

impl SphereCover {
    pub fn nearest_distance(&self, u: &[f64]) -> f64 {
        self.directions
            .iter()
            .map(|c| linalg::distance(c, u))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from `samples` random unit vectors to the cover.
    pub fn audit(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let u = random_unit(&mut rng, self.dim);
                self.nearest_distance(&u)
            })
            .fold(0.0, f64::max)
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(u) = linalg::normalized(&g) {
            return u;
        }
    }
}
