//! A serializable union of every trained policy type.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::baselines::{ConstrainedPolicy, UnconstrainedPolicy};
use crate::direct::LinearPolicy;
use crate::error::Result;
use crate::indirect::{RewardMaxPolicy, ThresholdPolicy};
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SavedPolicy {
    Linear(LinearPolicy),
    Threshold(ThresholdPolicy),
    RewardMax(RewardMaxPolicy),
    Unconstrained(UnconstrainedPolicy),
    Constrained(ConstrainedPolicy),
}

impl SavedPolicy {
    fn inner(&self) -> &dyn Policy {
        match self {
            Self::Linear(p) => p,
            Self::Threshold(p) => p,
            Self::RewardMax(p) => p,
            Self::Unconstrained(p) => p,
            Self::Constrained(p) => p,
        }
    }

    pub fn actions(&self) -> &ActionSet {
        match self {
            Self::Linear(p) => &p.actions,
            Self::Threshold(p) => &p.actions,
            Self::RewardMax(p) => &p.actions,
            Self::Unconstrained(p) => &p.actions,
            Self::Constrained(p) => &p.actions,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Linear(_) => "linear",
            Self::Threshold(_) => "threshold",
            Self::RewardMax(_) => "reward-max",
            Self::Unconstrained(_) => "unconstrained",
            Self::Constrained(_) => "constrained",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Policy for SavedPolicy {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }
    fn n_choices(&self) -> usize {
        self.inner().n_choices()
    }
    fn defer_index(&self) -> Option<usize> {
        self.inner().defer_index()
    }
    fn decide(&self, x: &[f64]) -> usize {
        self.inner().decide(x)
    }
}
