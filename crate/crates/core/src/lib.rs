//! Synthesis of piecewise quasi-quadratic regularizers for online linear
//! optimization, together with an FTRL runner, baselines and a sampled
//! verifier.
//!
//! The pipeline is: describe the action set and the loss set as
//! [`ConvexBody`] values, solve the cut-generated program in [`synthesis`],
//! assemble a [`PiecewiseRegularizer`] and run it with [`ftrl`] or compare
//! it against baselines with [`bench`].

pub mod bench;
pub mod config;
pub mod convex_sets;
pub mod cutting_plane;
pub mod error;
pub mod ftrl;
pub mod linalg;
pub mod lp;
pub mod regularizer;
pub mod synthesis;
pub mod verify;

pub use convex_sets::{BodyDescription, BodyMetadata, ConvexBody, Separation, SphereCover};
pub use cutting_plane::FunctionView;
pub use error::{Error, InfeasibilityCertificate, Result};
pub use regularizer::{PiecewiseRegularizer, QuasiQuadraticPiece};
