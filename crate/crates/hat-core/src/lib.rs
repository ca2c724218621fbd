//! Tree-based aggregation testing with false-split-rate (FSR) control.
//!
//! The library decides which branches of a known rooted tree should be
//! treated as single aggregated entities and which should be split apart,
//! by testing the per-node null hypothesis "all leaves under this node
//! share one parameter value" in a top-down step-up sweep.
//!
//! Modules:
//!
//! - [`tree`]: rooted directed trees, Newick/JSON parsing, structural queries.
//! - [`metrics`]: contiguous leaf partitions, barrier-vector duality, and the
//!   false-split-proportion / true-positive-proportion machinery.
//! - [`hat`]: the hierarchical aggregation testing procedure with its
//!   threshold families, plus the Lynch-Guo step-up baseline.
//! - [`pvalues`]: one-way ANOVA node p-values with known noise level and
//!   Simes subtree combination.
//! - [`regression`]: the tree-regularized rare-feature estimator, scaled-lasso
//!   noise estimation, and debiased quadratic-form node p-values.
//! - [`sim`]: scenario generators and the Monte-Carlo driver estimating FSR
//!   and power.
//! - [`special`]: the special functions the above need (regularized
//!   incomplete gamma/beta, normal CDF).

pub mod error;
pub mod hat;
pub mod metrics;
pub mod pvalues;
pub mod regression;
pub mod sim;
pub mod special;
pub mod testutil;
pub mod tree;

pub use error::{HatError, Result};
