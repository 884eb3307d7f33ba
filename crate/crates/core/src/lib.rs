//! Degenerate Hessian structures on radiant manifolds.
//!
//! Potentials `Φ = −S` are parsed from small expression documents, differentiated
//! with truncated Taylor jets, and probed for the radiant/Hessian structure:
//! metric kernel, Euler and Gibbs–Duhem identities, Codazzi symmetry,
//! involutivity, and the Riemannian and dual Hessian geometry of linear slices.

// `!(a > b)` is used on purpose so that NaN lands on the failing side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod models;
pub mod scalar;
pub mod submanifold;

pub use error::{Error, Result};
pub use models::{builtin, load_model, load_model_file, Builtin, PotentialModel};
pub use scalar::{Field, Real};

pub type Jet64 = jet::Jet<f64>;
pub type Jet32 = jet::Jet<f32>;
pub type Mat64 = linalg::Mat<f64>;
pub type RationalMat = linalg::Mat<num_rational::BigRational>;
pub type MetricField64 = geometry::MetricField<f64>;
pub type SliceSpec64 = submanifold::SliceSpec<f64>;
pub type RationalSlice = submanifold::SliceSpec<num_rational::BigRational>;
pub type PullbackMetric64 = submanifold::PullbackMetric<f64>;
pub type CurvatureReport64 = submanifold::CurvatureReport<f64>;
