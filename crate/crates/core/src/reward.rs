//! Scalarized rewards `r = omega * Y + (1 - omega) * (1 - C)` with an optional
//! deferral column worth the clinician's reward plus a bonus.

use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Preference weight and deferral bonus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub omega: f64,
    pub lambda_defer: f64,
    /// Append a defer column even when `lambda_defer == 0`.
    #[serde(default)]
    pub force_defer_column: bool,
}

impl RewardSpec {
    pub fn new(omega: f64, lambda_defer: f64) -> Result<Self> {
        let spec = Self {
            omega,
            lambda_defer,
            force_defer_column: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_defer_column(mut self) -> Self {
        self.force_defer_column = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config(format!("omega must lie in [0, 1], got {}", self.omega)));
        }
        if !(self.lambda_defer >= 0.0 && self.lambda_defer.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_defer must be finite and nonnegative, got {}",
                self.lambda_defer
            )));
        }
        Ok(())
    }

    pub fn defers(&self) -> bool {
        self.lambda_defer > 0.0 || self.force_defer_column
    }

    /// Reward of taking action `a` given its outcome.
    #[inline]
    pub fn action_reward(&self, y: u8, cost: f64) -> f64 {
        self.omega * f64::from(y) + (1.0 - self.omega) * (1.0 - cost)
    }
}

/// Per-unit rewards, `n x K` or `n x (K + 1)` when the last column is defer.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    values: Matrix,
    has_defer: bool,
}

impl RewardTable {
    /// Wraps a raw reward matrix after checking it is nonnegative and finite.
    pub fn new(values: Matrix, has_defer: bool) -> Result<Self> {
        for i in 0..values.rows() {
            for (j, &v) in values.row(i).iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::NegativeReward {
                        unit: i,
                        column: j,
                        value: v,
                    });
                }
            }
        }
        Ok(Self { values, has_defer })
    }

    /// Skips the sign check. Only for probing what breaks without it.
    #[doc(hidden)]
    pub fn new_unchecked(values: Matrix, has_defer: bool) -> Self {
        Self { values, has_defer }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.cols()
    }

    pub fn has_defer(&self) -> bool {
        self.has_defer
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Replaces each entry with `max_row - r`, turning rewards into regrets.
    pub fn regrets(&self) -> Self {
        let mut out = self.values.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in row.iter_mut() {
                *v = max - *v;
            }
        }
        Self {
            values: out,
            has_defer: self.has_defer,
        }
    }
}

/// Builds the reward table for `cohort` under `spec`.
pub fn build_rewards(cohort: &Cohort, actions: &ActionSet, spec: &RewardSpec) -> Result<RewardTable> {
    spec.validate()?;
    cohort.check_actions(actions)?;
    let k = actions.len();
    let doctor = if spec.defers() {
        Some(cohort.doctor_action().ok_or_else(|| {
            Error::Config("deferral requested but the cohort has no doctor_action column".into())
        })?)
    } else {
        None
    };
    let cols = k + usize::from(doctor.is_some());
    let mut values = Matrix::zeros(cohort.n(), cols);
    for i in 0..cohort.n() {
        let row = values.row_mut(i);
        for (a, slot) in row.iter_mut().take(k).enumerate() {
            *slot = spec.action_reward(cohort.y(i, a), actions.cost(a));
        }
        if let Some(d) = doctor {
            row[k] = row[d[i]] + spec.lambda_defer;
        }
    }
    RewardTable::new(values, doctor.is_some())
}
