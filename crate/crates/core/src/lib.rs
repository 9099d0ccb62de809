//! Bayesian neighborhood selection for Gaussian graphical models, for single
//! datasets and for locus x period grids of datasets coupled through a
//! Markov random field prior on the edge indicators.
//!
//! The pieces:
//! - [`model`] / [`hyper`]: dataset containers, validation, centering, and
//!   hyperparameter resolution.
//! - [`single`]: the blocked Gibbs sampler for one graph.
//! - [`mrf`]: the pairwise-interaction field over one edge's indicator grid,
//!   its pseudolikelihood, and the Metropolis-Hastings coupling updates.
//! - [`joint`]: the grid-coupled sampler.
//! - [`simgen`]: synthetic experiment generators with known ground truth.
//! - [`eval`]: ROC/partial-AUC scoring, top-K selection, and
//!   threshold-refit-BIC model selection.
//! - [`oracle`]: exact enumeration posteriors for tiny instances, used to
//!   verify the samplers.
//! - [`io`]: the CSV/TOML/JSON file formats shared with the CLI.
//!
//! Every random draw is keyed to a run seed and a logical task path
//! ([`rng::substream`]), so results are reproducible bit-for-bit under any
//! worker count.

// `!(x > 0.0)` deliberately treats NaN as invalid; `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod graph;
pub mod hyper;
pub mod io;
pub mod joint;
pub mod model;
pub mod mrf;
pub mod oracle;
pub mod rng;
pub mod simgen;
pub mod single;
mod util;

pub use error::{Error, Result};
pub use util::{log_sum_exp, logistic};
