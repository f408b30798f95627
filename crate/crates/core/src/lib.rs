//! Semi-discrete unbalanced optimal transport and unbalanced quantization
//! between a rasterized diffuse measure and finitely many sites.
//!
//! The building blocks are the entropy-transport [`models`], the
//! generalized Laguerre tessellations in [`laguerre`], the concave dual
//! solver in [`dual`], the quantization energy and its minimizers in
//! [`quantization`], and the hexagonal cell problem with the asymptotic
//! point density in [`asymptotics`].

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod dual;
pub mod error;
pub mod geometry;
pub mod io;
pub mod laguerre;
pub mod lbfgs;
pub mod models;
pub mod presets;
pub mod quantization;

pub use error::{Result, UotError};
pub use geometry::{DiscreteMeasure, Domain, GridDensity, Point};
pub use models::{EntropyModel, ModelKind};
