use crate::error::{Error, Result};
use crate::exec;
use crate::matrix::Matrix;

/// A deterministic map from a feature row to a decision index.
///
/// Decisions `0..K` are real actions in action-set order; a deferring
/// policy uses index `K` for "defer to the clinician".
pub trait Policy: Send + Sync {
    fn n_features(&self) -> usize;

    /// `K`, or `K + 1` for deferring policies.
    fn n_choices(&self) -> usize;

    fn defer_index(&self) -> Option<usize> {
        None
    }

    fn decide(&self, x: &[f64]) -> usize;
}

/// What a policy did for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Act(usize),
    Defer,
}

/// Always returns the same action.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub action: usize,
    pub n_features: usize,
    pub n_actions: usize,
}

impl Policy for ConstantPolicy {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn n_choices(&self) -> usize {
        self.n_actions
    }
    fn decide(&self, _x: &[f64]) -> usize {
        self.action
    }
}

/// Applies `policy` to every row of `x`.
pub fn apply_policy<P: Policy + ?Sized>(policy: &P, x: &Matrix) -> Result<Vec<usize>> {
    if x.cols() != policy.n_features() {
        return Err(Error::Shape {
            expected: policy.n_features(),
            found: x.cols(),
        });
    }
    Ok(exec::map_range(x.rows(), |i| policy.decide(x.row(i))))
}

/// Applies `policy` and classifies each output as an action or a deferral.
pub fn decide_all<P: Policy + ?Sized>(policy: &P, x: &Matrix) -> Result<Vec<Decision>> {
    let defer = policy.defer_index();
    Ok(apply_policy(policy, x)?
        .into_iter()
        .map(|d| if Some(d) == defer { Decision::Defer } else { Decision::Act(d) })
        .collect())
}
