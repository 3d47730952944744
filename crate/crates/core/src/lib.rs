//! Numerical core for probabilistic forecasting of a sovereign yield spread.
//!
//! The crate is `no_std` (with `alloc`): it holds every algorithm of the
//! pipeline and none of the IO. File formats, HTTP, the CLI and the
//! orchestration layer live in the `spreadcast` companion crate.
//!
//! Modules, in pipeline order:
//!
//! * [`gkg`]: GDELT GKG 2.1 record parsing, article filtering, trading-day
//!   assignment and daily aggregation.
//! * [`features`]: the feature funnel (dictionary exclusion, missing-value and
//!   variance filters, normalisation, correlation pruning).
//! * [`term_structure`]: spreads, log-difference target, robust scaling and
//!   Nelson-Siegel factors.
//! * [`dimreduce`]: Ward clustering with silhouette model selection, and PCA.
//! * [`deepar`]: stacked LSTM with a parametric head, trained by BPTT + Adam.
//! * [`gbm`]: gradient-boosted regression trees with grid-search CV.
//! * [`evaluation`]: check loss, point metrics, Diebold-Mariano and
//!   fluctuation tests, rolling backtests and Kernel SHAP.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod deepar;
pub mod dimreduce;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gbm;
pub mod gkg;
pub mod rng;
pub mod stats;
pub mod term_structure;

pub use error::{Error, Result};
