//! Nested level set segmentation of a 2D grid into `n` disjoint regions.
//!
//! A single level set function `phi` with `n - 1` increasing levels
//! `c_1 < ... < c_{n-1}` partitions the image: region 1 lies below `c_1`,
//! region `i` between `c_{i-1}` and `c_i`, region `n` above `c_{n-1}`.
//! Region costs come from per-pixel probability maps (`f_i = -log P_i`) and
//! boundary length is weighted by an edge probability map (`g = P_E`).
//!
//! Pipeline: [`feature::features_from_probabilities`] ->
//! [`sdf::initialize_phi`] -> [`solver::evolve`] -> [`metrics::label_from_phi`].
//! [`pipeline::segment`] runs all four steps.

pub mod error;
pub mod feature;
pub mod field;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod regularize;
pub mod sdf;
pub mod solver;

pub use error::{Error, Result};
pub use feature::{FeatureSet, PhantomSpec, ProbabilityStack};
pub use field::{GridShape, LabelMap, ScalarField};
pub use loss::{EdgeLabelMap, LossParams};
pub use metrics::DiceReport;
pub use regularize::{Levels, Smoothing};
pub use sdf::BinaryMask;
pub use solver::{SolveReport, SolverParams};
