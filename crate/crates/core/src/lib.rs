//! Adaptively weighted Benjamini-Hochberg procedures for grouped p-values.
//!
//! The main entry points are [`addow::addow`] (data-driven optimal weights
//! under an estimated budget), [`stabilize::saddow`] (the same guarded by a
//! weak-signal pre-test) and the comparison procedures in [`stepup`] and
//! [`classic`]. [`harness`] runs paired Monte Carlo comparisons on the
//! one-sided Gaussian model from [`oracle`].

pub mod addow;
pub mod classic;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod model;
pub mod oracle;
pub mod stabilize;
pub mod stepup;

pub use addow::{addow, addow_lcm, ihw, CostVector, MinCostProfile};
pub use error::{Error, Result};
pub use estimation::{NullEstimates, Pi0Mode};
pub use model::{load_dataset, GroupedPValues, Hypothesis, RejectionSet};
pub use stabilize::{saddow, NullQuantileTable};
pub use stepup::{bh, wbh, StepUpOutcome, WeightVector};
