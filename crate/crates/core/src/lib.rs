//! Learning sets of treatment policies that trade off benefit against cost
//! when every action's outcome is observed for every unit.
//!
//! Three families of learners share one data model:
//!
//! * thresholding of per-action effectiveness models, searched under cost budgets;
//! * expected-reward maximization over a sweep of preference weights;
//! * direct optimization of a linear policy under a convex surrogate, with an
//!   optional "defer to the clinician" action.
//!
//! [`evaluation`] turns policies into frontier points; [`synthetic`] provides
//! environments with a known Bayes-optimal rule.

pub mod actions;
pub mod baselines;
pub mod cohort;
pub mod direct;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod experiment;
pub mod indirect;
pub mod matrix;
pub mod optim;
pub mod outcome;
pub mod policy;
pub mod reward;
pub mod roc;
pub mod saved;
pub mod seed;
pub mod standardize;
pub mod synthetic;

pub use actions::{Action, ActionSet};
pub use cohort::{load_cohort, parse_cohort, save_cohort, write_cohort, Cohort};
pub use error::{Error, ErrorClass, Result};
pub use matrix::Matrix;
pub use policy::{apply_policy, Decision, Policy};
pub use reward::{build_rewards, RewardSpec, RewardTable};
