//! Globally convergent reconstruction for quasilinear PDEs with lateral
//! Cauchy data, by minimizing a Carleman-weighted Tikhonov functional.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod functional;
pub mod grid;
pub mod harness;
pub mod level;
pub mod mask;
pub mod operator;
pub mod optimizer;
pub mod registry;
pub mod riesz;
pub mod sobolev;
pub mod sparse;
pub mod weights;

pub use error::{Error, ErrorClass, Result};
pub use field::Field;
pub use grid::{build_grid, Grid, Side};
pub use level::{level_value, LevelFamily, LevelSpec};
pub use mask::{classify_nodes, DomainMask, Label};
pub use weights::{shifted_weight_sq, weight_extrema, WeightSpec};
