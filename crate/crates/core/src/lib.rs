//! Bayesian mixture estimation of threshold effects under bunching.
//!
//! Customers who strategically move their spending just past an incentive
//! threshold `K` produce excess mass in a neighbourhood `N_K = [K - a, K + a]`.
//! Observed spending inside `N_K` is modelled as a mixture of a bunching
//! (skew-normal) and a non-bunching (Singh-Maddala) distribution, and the
//! threshold effect is the difference of their conditional means on `N_K`.
//!
//! Estimation runs in two steps: the non-bunching distribution is fitted on
//! observations outside every neighbourhood with a truncation-adjusted
//! likelihood, frozen at its posterior mean, and then the mixing weight and
//! bunching parameters are fitted on observations inside each neighbourhood.
//! The hierarchical variant shares strength across customer groups through
//! random effects on every group-level parameter.
//!
//! Module map:
//!
//! - [`distributions`]: the four parametric families with analytic gradients
//! - [`model`]: data partitioning, priors and the log-posterior objectives
//! - [`sampler`]: multi-chain NUTS with warmup adaptation and diagnostics
//! - [`estimands`]: the threshold effect, HDIs and bunching-region checks
//! - [`pipeline`]: end-to-end single-group and hierarchical fits
//! - [`simgen`]: synthetic multi-group datasets with known ground truth
//! - [`baseline`]: boundary-corrected KDE density-jump estimator
//! - [`eval`]: accuracy and interval metrics and replication studies
//! - [`io`]: CSV/JSON ingestion and output

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod distributions;
pub mod error;
pub mod estimands;
pub mod eval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod quadrature;
pub mod sampler;
pub mod simgen;
pub mod special;

pub use error::{Error, Result};
