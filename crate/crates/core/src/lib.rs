//! Multi-output learning with self-bounding Lipschitz losses.
//!
//! The crate is organised around the objects a risk certificate needs:
//!
//! - [`losses`]: the loss catalogue, declared `(lambda, theta, B)` parameters
//!   and a randomized falsifier for the self-bounding Lipschitz inequality.
//! - [`trees`]: axis-aligned multi-output trees whose leaves live in the
//!   l1-ball of radius `tau` intersected with the unit box.
//! - [`boosting`]: functional gradient boosting with a total-weight budget.
//! - [`complexity`]: Rademacher complexity estimators and analytic bounds.
//! - [`bounds`]: generalization-bound formulas and certificate assembly.
//! - [`minimax`]: the finite lower-bound construction and learner simulator.
//! - [`data`]: datasets and CSV ingestion.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosting;
pub mod bounds;
pub mod complexity;
pub mod data;
mod error;
pub mod losses;
pub mod minimax;
pub(crate) mod rng;
pub mod trees;

pub use boosting::{Ensemble, Model, TrainConfig};
pub use bounds::{BoundInputs, Certificate};
pub use complexity::{EvalGrid, RadEstimate};
pub use data::{Dataset, TaskKind};
pub use error::{Error, ErrorClass, Result};
pub use losses::{Label, LossKind, SblParams, SblReport};
pub use minimax::{LearnerKind, MinimaxInstance};
pub use trees::{MultiTree, TreeConfig};

/// Toolkit version recorded in certificates.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
