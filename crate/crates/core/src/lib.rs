//! Exogenous peer effects estimated from randomly sampled networks.
//!
//! The crate simulates networked populations, draws random node samples,
//! fits the peer-effects regression on the incomplete observed network,
//! rescales the attenuated peer coefficient by the empirical degree ratio, and
//! runs Monte Carlo studies of bias, RMSE and interval coverage. The
//! [`identification`] module builds explicit pairs of observationally
//! equivalent completions showing the parameters are not identified from the
//! sample alone.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Small dense matrices in tests read best with explicit indices.
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod cli;
pub mod estimation;
pub mod graph;
pub mod identification;
pub mod json;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod sampling;

pub use estimation::{FitResult, ObservedDesign};
pub use graph::{Graph, VertexSet};
pub use model::ModelParams;
pub use montecarlo::{CellReport, ExperimentCell};
pub use sampling::RecruitmentSample;
