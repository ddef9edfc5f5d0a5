//! Quasi-quadratic pieces and their pointwise maximum.
//!
//! A piece centered at `x_i` is
//! `r + ⟨v, Δ⟩ + ½ ΔᵀΣΔ − (L/6)|Δ|³` with `Δ = x − x_i`, where `L` is the
//! stored `cubic_l`. Taylor models with a `−(L/3)|Δ|³` correction are
//! stored with `cubic_l = 2L`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex_sets::BodyDescription;
use crate::cutting_plane::FunctionView;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, norm};

/// Absolute tolerance for ties in the pointwise maximum.
pub const TIE_TOLERANCE: f64 = 1e-12;

const FORMAT_TAG: &str = "regsynth-regularizer/1";

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiQuadraticPiece {
    pub center: Vec<f64>,
    pub r: f64,
    pub v: Vec<f64>,
    /// Symmetric by construction.
    pub sigma: DMatrix<f64>,
    pub cubic_l: f64,
}

impl QuasiQuadraticPiece {
    pub fn new(center: Vec<f64>, r: f64, v: Vec<f64>, sigma: DMatrix<f64>, cubic_l: f64) -> Result<Self> {
        let d = center.len();
        check_dim(d, v.len())?;
        check_dim(d, sigma.nrows())?;
        check_dim(d, sigma.ncols())?;
        if !(cubic_l >= 0.0) || !cubic_l.is_finite() {
            return Err(Error::Input(format!("cubic coefficient must be >= 0, got {cubic_l}")));
        }
        Ok(QuasiQuadraticPiece {
            center,
            r,
            v,
            sigma: linalg::symmetrize(&sigma),
            cubic_l,
        })
    }

    /// Second-order Taylor model of a function with `lipschitz`-Lipschitz
    /// Hessian, corrected by `−(lipschitz/3)|Δ|³`.
    pub fn from_taylor(
        center: Vec<f64>,
        value: f64,
        grad: Vec<f64>,
        hess: DMatrix<f64>,
        lipschitz: f64,
    ) -> Result<Self> {
        Self::new(center, value, grad, hess, 2.0 * lipschitz)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let delta = linalg::sub(x, &self.center);
        let n = norm(&delta);
        self.r + dot(&self.v, &delta) + 0.5 * linalg::quad_form(&self.sigma, &delta)
            - self.cubic_l / 6.0 * n * n * n
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.grad_unchecked(x))
    }

    fn grad_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let delta = linalg::sub(x, &self.center);
        let n = norm(&delta);
        let sd = linalg::mat_vec(&self.sigma, &delta);
        self.v
            .iter()
            .zip(&sd)
            .zip(&delta)
            .map(|((v, s), dl)| v + s - 0.5 * self.cubic_l * n * dl)
            .collect()
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.hessian_unchecked(x))
    }

    fn hessian_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let delta = linalg::sub(x, &self.center);
        let n = norm(&delta);
        if n == 0.0 {
            return self.sigma.clone();
        }
        let l = self.cubic_l;
        DMatrix::from_fn(d, d, |i, j| {
            let eye = if i == j { 1.0 } else { 0.0 };
            self.sigma[(i, j)] - 0.5 * l * (n * eye + delta[i] * delta[j] / n)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseRegularizer {
    pieces: Vec<QuasiQuadraticPiece>,
    /// Claimed strong-convexity modulus with respect to the dual norm of
    /// `loss_body`.
    pub alpha: f64,
    pub loss_body: Option<BodyDescription>,
    /// Digest of the configuration that produced the pieces.
    pub provenance: String,
}

impl PiecewiseRegularizer {
    pub fn new(
        pieces: Vec<QuasiQuadraticPiece>,
        alpha: f64,
        loss_body: Option<BodyDescription>,
        provenance: String,
    ) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::Input("a regularizer needs at least one piece".into()))?;
        let (d, l) = (first.dim(), first.cubic_l);
        for p in &pieces {
            check_dim(d, p.dim())?;
            if p.cubic_l != l {
                return Err(Error::Input("pieces must share the cubic coefficient".into()));
            }
        }
        if let Some(b) = &loss_body {
            check_dim(d, b.dim)?;
        }
        Ok(PiecewiseRegularizer {
            pieces,
            alpha,
            loss_body,
            provenance,
        })
    }

    pub fn pieces(&self) -> &[QuasiQuadraticPiece] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn cubic_l(&self) -> f64 {
        self.pieces[0].cubic_l
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.max_value(x))
    }

    fn max_value(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval_unchecked(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of pieces within [`TIE_TOLERANCE`] of the maximum, ascending.
    pub fn argmax_piece(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_dim(self.dim(), x.len())?;
        let values: Vec<f64> = self.pieces.iter().map(|p| p.eval_unchecked(x)).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= max - TIE_TOLERANCE)
            .map(|(i, _)| i)
            .collect())
    }

    fn first_argmax(&self, x: &[f64]) -> usize {
        let values: Vec<f64> = self.pieces.iter().map(|p| p.eval_unchecked(x)).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        values
            .iter()
            .position(|&v| v >= max - TIE_TOLERANCE)
            .unwrap_or(0)
    }

    /// Gradient of the lowest-index maximizing piece.
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.pieces[self.first_argmax(x)].grad_unchecked(x))
    }

    /// Largest piece value at the piece centers.
    pub fn max_center_value(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| self.max_value(&p.center))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_toml_string(&self) -> String {
        let file = RegularizerFile {
            format: FORMAT_TAG.into(),
            dim: self.dim(),
            cubic_l: self.cubic_l(),
            alpha: self.alpha,
            provenance: self.provenance.clone(),
            piece_count: self.pieces.len(),
            loss_body: self.loss_body.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceFile {
                    center: p.center.clone(),
                    r: p.r,
                    v: p.v.clone(),
                    sigma: linalg::upper_triangle(&p.sigma),
                })
                .collect(),
        };
        toml::to_string(&file).expect("regularizer files always serialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RegularizerFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(Error::Parse(format!(
                "unknown format tag `{}`, expected `{FORMAT_TAG}`",
                file.format
            )));
        }
        if file.pieces.is_empty() {
            return Err(Error::Parse("regularizer has no pieces".into()));
        }
        if file.pieces.len() != file.piece_count {
            return Err(Error::Parse(format!(
                "piece_count is {} but {} pieces are present (truncated file?)",
                file.piece_count,
                file.pieces.len()
            )));
        }
        let d = file.dim;
        let mut pieces = Vec::with_capacity(file.pieces.len());
        for (i, p) in file.pieces.into_iter().enumerate() {
            let sigma = linalg::from_upper_triangle(d, &p.sigma).ok_or_else(|| {
                Error::Parse(format!("pieces[{i}].sigma has length {}, expected {}", p.sigma.len(), d * (d + 1) / 2))
            })?;
            if p.center.len() != d || p.v.len() != d {
                return Err(Error::Parse(format!("pieces[{i}] has wrong dimension, expected {d}")));
            }
            pieces.push(
                QuasiQuadraticPiece::new(p.center, p.r, p.v, sigma, file.cubic_l)
                    .map_err(|e| Error::Parse(format!("pieces[{i}]: {e}")))?,
            );
        }
        Self::new(pieces, file.alpha, file.loss_body, file.provenance)
            .map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

impl FunctionView for PiecewiseRegularizer {
    fn dim(&self) -> usize {
        PiecewiseRegularizer::dim(self)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.max_value(x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.pieces[self.first_argmax(x)].grad_unchecked(x)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.pieces[self.first_argmax(x)].hessian_unchecked(x))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegularizerFile {
    format: String,
    dim: usize,
    #[serde(rename = "cubic_L")]
    cubic_l: f64,
    alpha: f64,
    provenance: String,
    piece_count: usize,
    loss_body: Option<BodyDescription>,
    pieces: Vec<PieceFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceFile {
    center: Vec<f64>,
    r: f64,
    v: Vec<f64>,
    /// Row-major upper triangle.
    sigma: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn piece(center: &[f64], r: f64, v: &[f64], sigma: &[f64], l: f64) -> QuasiQuadraticPiece {
        let d = center.len();
        QuasiQuadraticPiece::new(
            center.to_vec(),
            r,
            v.to_vec(),
            DMatrix::from_row_slice(d, d, sigma),
            l,
        )
        .unwrap()
    }

    #[test]
    fn piece_eval_examples() {
        let p = piece(&[0.0, 0.0], 0.0, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 0.0);
        assert_eq!(p.eval(&[3.0, 4.0]).unwrap(), 12.5);
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 0.0);
        let p = piece(&[0.0, 0.0], 1.0, &[1.0, 0.0], &[2.0, 0.0, 0.0, 2.0], 6.0);
        assert_eq!(p.eval(&[1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(p.eval(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn piece_grad_examples() {
        let p = piece(&[0.5, -0.5], 2.0, &[1.0, 2.0], &[1.0, 0.3, 0.3, 1.0], 3.0);
        assert_eq!(p.grad(&[0.5, -0.5]).unwrap(), vec![1.0, 2.0]);
        let p = piece(&[0.0, 0.0], 0.0, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 0.0);
        assert_eq!(p.grad(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let p = piece(&[0.0, 0.0], 0.0, &[0.0, 0.0], &[0.0; 4], 6.0);
        assert_eq!(p.grad(&[1.0, 0.0]).unwrap(), vec![-3.0, 0.0]);
    }

    #[test]
    fn piece_hessian_examples() {
        let p = piece(&[0.0, 0.0], 0.0, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 6.0);
        assert_eq!(p.hessian(&[0.0, 0.0]).unwrap(), p.sigma);
        // Σ − (L/2)(|Δ|I + ΔΔᵀ/|Δ|) with L = 6.
        let h = p.hessian(&[1.0, 0.0]).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[-5.0, 0.0, 0.0, -2.0]));
    }

    #[test]
    fn taylor_constructor_doubles_the_cubic() {
        let p = QuasiQuadraticPiece::from_taylor(vec![0.0], 0.0, vec![0.0], DMatrix::zeros(1, 1), 3.0).unwrap();
        assert_eq!(p.cubic_l, 6.0);
        assert_eq!(p.eval(&[1.0]).unwrap(), -1.0);
    }

    #[test]
    fn max_and_ties() {
        let a = piece(&[-1.0], 0.0, &[0.0], &[1.0], 0.0);
        let b = piece(&[1.0], 0.0, &[0.0], &[1.0], 0.0);
        let g = PiecewiseRegularizer::new(vec![a.clone()], 1.0, None, String::new()).unwrap();
        assert_eq!(g.eval(&[0.3]).unwrap(), a.eval(&[0.3]).unwrap());
        assert_eq!(g.argmax_piece(&[0.3]).unwrap(), vec![0]);
        let g = PiecewiseRegularizer::new(vec![a, b], 1.0, None, String::new()).unwrap();
        assert_eq!(g.argmax_piece(&[0.0]).unwrap(), vec![0, 1]);
        assert_eq!(g.subgradient(&[0.0]).unwrap(), vec![1.0]);

        let lo = piece(&[0.0], 1.0, &[0.0], &[0.0], 0.0);
        let hi = piece(&[0.0], 2.0, &[0.0], &[0.0], 0.0);
        let g = PiecewiseRegularizer::new(vec![lo, hi], 1.0, None, String::new()).unwrap();
        assert_eq!(g.eval(&[0.7]).unwrap(), 2.0);
    }

    #[test]
    fn empty_and_truncated_files_fail_to_parse() {
        let p = piece(&[0.0, 0.0], 0.5, &[0.1, 0.2], &[1.0, 0.1, 0.1, 2.0], 1.5);
        let g = PiecewiseRegularizer::new(vec![p.clone(), p], 0.5, None, "abc".into()).unwrap();
        let text = g.to_toml_string();
        let cut = text.rfind("[[pieces]]").unwrap();
        assert!(matches!(
            PiecewiseRegularizer::from_toml_str(&text[..cut]),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            PiecewiseRegularizer::from_toml_str(&text[..text.len() - 9]),
            Err(Error::Parse(_))
        ));
        let empty = "format = \"regsynth-regularizer/1\"\ndim = 1\ncubic_L = 0.0\nalpha = 1.0\nprovenance = \"\"\npiece_count = 0\npieces = []\n";
        assert!(matches!(PiecewiseRegularizer::from_toml_str(empty), Err(Error::Parse(_))));
        let err = PiecewiseRegularizer::from_toml_str("dim = [").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn round_trip_keeps_the_loss_body() {
        let p = piece(&[0.0, 0.0], 0.0, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 0.0);
        let g = PiecewiseRegularizer::new(
            vec![p],
            0.5,
            Some(BodyDescription::ellipsoid_axes(&[1.0, 10.0])),
            "digest".into(),
        )
        .unwrap();
        assert_eq!(PiecewiseRegularizer::from_toml_str(&g.to_toml_string()).unwrap(), g);
        assert_relative_eq!(g.max_center_value(), 0.0);
    }

    fn arb_float() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            -10.0..10.0f64,
            Just(-0.0),
        ]
    }

    proptest! {
        #[test]
        fn serialization_round_trip_is_bit_exact(
            d in 1usize..4,
            n in 1usize..4,
            seed in proptest::collection::vec(arb_float(), 64),
            l in 0.0..100.0f64,
            alpha in arb_float(),
        ) {
            let mut it = seed.iter().cycle().copied();
            let mut next = || it.next().unwrap();
            let pieces: Vec<QuasiQuadraticPiece> = (0..n).map(|_| {
                let center: Vec<f64> = (0..d).map(|_| next()).collect();
                let v: Vec<f64> = (0..d).map(|_| next()).collect();
                let tri: Vec<f64> = (0..d * (d + 1) / 2).map(|_| next()).collect();
                QuasiQuadraticPiece::new(center, next(), v, linalg::from_upper_triangle(d, &tri).unwrap(), l).unwrap()
            }).collect();
            let g = PiecewiseRegularizer::new(pieces, alpha, None, "p".into()).unwrap();
            let back = PiecewiseRegularizer::from_toml_str(&g.to_toml_string()).unwrap();
            prop_assert_eq!(back.pieces().len(), g.pieces().len());
            for (a, b) in back.pieces().iter().zip(g.pieces()) {
                for (x, y) in a.center.iter().chain(&a.v).chain(a.sigma.iter()).chain([&a.r, &a.cubic_l])
                    .zip(b.center.iter().chain(&b.v).chain(b.sigma.iter()).chain([&b.r, &b.cubic_l])) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            prop_assert_eq!(back.alpha.to_bits(), g.alpha.to_bits());
        }

        #[test]
        fn max_of_pieces_is_midpoint_convex_for_convex_pieces(
            x in proptest::collection::vec(-1.0..1.0f64, 2),
            y in proptest::collection::vec(-1.0..1.0f64, 2),
        ) {
            let a = piece(&[0.3, 0.0], 0.1, &[0.2, -0.1], &[2.0, 0.5, 0.5, 1.0], 0.0);
            let b = piece(&[-0.4, 0.2], 0.0, &[0.0, 0.3], &[1.0, 0.0, 0.0, 1.5], 0.0);
            let g = PiecewiseRegularizer::new(vec![a, b], 1.0, None, String::new()).unwrap();
            let m = linalg::scale(&linalg::add(&x, &y), 0.5);
            prop_assert!(g.eval(&m).unwrap() <= 0.5 * (g.eval(&x).unwrap() + g.eval(&y).unwrap()) + 1e-12);
        }
    }
}
