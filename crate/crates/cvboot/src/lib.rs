//! Cross-validation estimates of model performance with statistically
//! valid uncertainty.
//!
//! Repeated random-split cross-validation yields a point estimate of how
//! well a training procedure performs at a given training size. This crate
//! attaches a standard error and confidence interval to that estimate via
//! a fast weighted bootstrap: bootstrap samples are realized as integer
//! row weights over disjoint train/test folds, and the bootstrap variance
//! is extracted as the between-bootstrap component of a random-effects
//! decomposition, so only a handful of splits per bootstrap are needed.
//!
//! ```
//! use cvboot::engine::{fast_bootstrap, RunConfig};
//! use cvboot::learners::{LearnerKind, LearnerSpec};
//! use cvboot::metrics::Metric;
//! use cvboot::sim::{generate, GeneratorKind, GeneratorSpec};
//! use cvboot::streams::rng_for;
//!
//! let spec = GeneratorSpec::new(GeneratorKind::LinearLowDim);
//! let data = generate(&spec, &mut rng_for(7, &[0]));
//! let cfg = RunConfig::new(80)
//!     .with_budget(40, 10)
//!     .with_point_splits(50)
//!     .with_seed(7);
//! let learner = LearnerSpec::new(LearnerKind::Ols);
//! let (_grid, report) = fast_bootstrap(&data, &learner, &Metric::Mape, &cfg).unwrap();
//! assert!(report.ci_adj.lo <= report.point && report.point <= report.ci_adj.hi);
//! assert!(report.se_adj <= report.se);
//! ```

pub mod dataset;
pub mod engine;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod report;
pub mod resample;
pub mod sim;
pub mod streams;
pub mod variance;

pub use dataset::{Dataset, OutcomeKind, WeightedView};
pub use error::{Error, Result};
pub use report::{CalibratedInterval, FitBudget, InferenceReport, Interval};

#[cfg(doctest)]
mod book;
