use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One treatment option and its cost in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub label: String,
    pub cost: f64,
}

/// Ordered set of actions. Label order is the canonical tie-break order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActionSetRepr", into = "ActionSetRepr")]
pub struct ActionSet {
    actions: Vec<Action>,
}

#[derive(Serialize, Deserialize)]
struct ActionSetRepr {
    actions: Vec<Action>,
}

impl TryFrom<ActionSetRepr> for ActionSet {
    type Error = Error;
    fn try_from(r: ActionSetRepr) -> Result<Self> {
        ActionSet::new(r.actions)
    }
}

impl From<ActionSet> for ActionSetRepr {
    fn from(a: ActionSet) -> Self {
        ActionSetRepr { actions: a.actions }
    }
}

impl ActionSet {
    pub fn new(actions: Vec<Action>) -> Result<Self> {
        if actions.len() < 2 {
            return Err(Error::Config("an action set needs at least two actions".into()));
        }
        let mut seen = HashSet::new();
        for a in &actions {
            if a.label.is_empty() {
                return Err(Error::Config("empty action label".into()));
            }
            if !seen.insert(a.label.as_str()) {
                return Err(Error::Config(format!("duplicate action label `{}`", a.label)));
            }
            if !(0.0..=1.0).contains(&a.cost) {
                return Err(Error::Config(format!(
                    "cost of `{}` must lie in [0, 1], got {}",
                    a.label, a.cost
                )));
            }
        }
        Ok(Self { actions })
    }

    /// Convenience constructor from `(label, cost)` pairs.
    pub fn from_pairs(pairs: &[(&str, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(l, c)| Action {
                    label: (*l).to_string(),
                    cost: *c,
                })
                .collect(),
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn label(&self, a: usize) -> &str {
        &self.actions[a].label
    }

    pub fn labels(&self) -> Vec<String> {
        self.actions.iter().map(|a| a.label.clone()).collect()
    }

    pub fn cost(&self, a: usize) -> f64 {
        self.actions[a].cost
    }

    pub fn costs(&self) -> Vec<f64> {
        self.actions.iter().map(|a| a.cost).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.label == label)
    }

    /// Lowest-index action with minimal cost.
    pub fn cheapest(&self) -> usize {
        argmin(&self.costs())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}
