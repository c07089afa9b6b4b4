//! First-order minimization with L1/L2 penalties and optional early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PlainGradient,
    AdaptiveMoment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    #[serde(default)]
    pub l2_penalty: f64,
    #[serde(default)]
    pub l1_penalty: f64,
    pub max_epochs: usize,
    /// `None` means full batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for OptimizerConfig {
    /// Adam, learning rate 1e-4, L2 3e-3, 50 full-batch epochs.
    fn default() -> Self {
        Self {
            method: Method::AdaptiveMoment,
            learning_rate: 1e-4,
            l2_penalty: 3e-3,
            l1_penalty: 0.0,
            max_epochs: 50,
            batch_size: None,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l1_penalty >= 0.0) {
            return Err(Error::Config("penalties must be nonnegative".into()));
        }
        if self.l2_penalty > 0.0 && self.l1_penalty > 0.0 {
            return Err(Error::Config("at most one of l1_penalty and l2_penalty may be nonzero".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMetric {
    ValidationMeanReward,
    ValidationLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMode {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopRule {
    pub metric: StopMetric,
    pub patience: usize,
    pub mode: StopMode,
}

impl EarlyStopRule {
    pub fn mean_reward(patience: usize) -> Self {
        Self {
            metric: StopMetric::ValidationMeanReward,
            patience,
            mode: StopMode::Maximize,
        }
    }

    fn improves(&self, candidate: f64, best: f64) -> bool {
        match self.mode {
            StopMode::Maximize => candidate > best,
            StopMode::Minimize => candidate < best,
        }
    }
}

/// A differentiable loss averaged over units.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Units available for mini-batching.
    fn n_units(&self) -> usize {
        1
    }

    /// Mean loss over `units` (all units when `None`); overwrites `grad`.
    fn loss_grad(&self, params: &[f64], units: Option<&[usize]>, grad: &mut [f64]) -> f64;

    /// Whether coordinate `index` is subject to regularization.
    fn is_penalized(&self, _index: usize) -> bool {
        true
    }

    fn loss(&self, params: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.loss_grad(params, None, &mut g)
    }
}

/// Objective defined by a closure over the full parameter vector.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss_grad(&self, params: &[f64], _units: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        (self.f)(params, grad)
    }
}

/// Adds `l2 * |w|^2 + l1 * |w|_1` over penalized coordinates.
pub struct Penalized<'a, O: ?Sized> {
    inner: &'a O,
    l2: f64,
    l1: f64,
}

impl<'a, O: Objective + ?Sized> Penalized<'a, O> {
    pub fn new(inner: &'a O, l2: f64, l1: f64) -> Self {
        Self { inner, l2, l1 }
    }
}

impl<O: Objective + ?Sized> Objective for Penalized<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn n_units(&self) -> usize {
        self.inner.n_units()
    }

    fn loss_grad(&self, params: &[f64], units: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        let mut loss = self.inner.loss_grad(params, units, grad);
        if self.l2 == 0.0 && self.l1 == 0.0 {
            return loss;
        }
        for (i, (&w, g)) in params.iter().zip(grad.iter_mut()).enumerate() {
            if !self.inner.is_penalized(i) {
                continue;
            }
            loss += self.l2 * w * w + self.l1 * w.abs();
            // subgradient of |w| taken as 0 at w = 0
            let sign = if w > 0.0 {
                1.0
            } else if w < 0.0 {
                -1.0
            } else {
                0.0
            };
            *g += 2.0 * self.l2 * w + self.l1 * sign;
        }
        loss
    }

    fn is_penalized(&self, index: usize) -> bool {
        self.inner.is_penalized(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean penalized training loss over the epoch's steps.
    pub loss: f64,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub trace: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned; 0 means the initial point.
    pub best_epoch: usize,
}

enum Stepper {
    Plain,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Stepper {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Stepper::Plain => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Stepper::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for i in 0..params.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Early-stop rule plus the callback that scores a parameter vector.
pub struct EarlyStop<'a> {
    pub rule: EarlyStopRule,
    pub evaluate: &'a mut dyn FnMut(&[f64]) -> f64,
}

/// Minimizes `objective` plus the configured penalty from `init`.
///
/// With early stopping, returns the parameters of the best-scoring epoch and
/// stops once `patience` consecutive epochs fail to improve on it.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    init: Vec<f64>,
    config: &OptimizerConfig,
    mut stop: Option<EarlyStop<'_>>,
) -> Result<FitResult> {
    config.validate()?;
    if init.len() != objective.dim() {
        return Err(Error::Config(format!(
            "initial point has {} coordinates, objective expects {}",
            init.len(),
            objective.dim()
        )));
    }
    let penalized = Penalized::new(objective, config.l2_penalty, config.l1_penalty);
    let dim = init.len();
    let mut params = init;
    let mut grad = vec![0.0; dim];

    let initial = penalized.loss_grad(&params, None, &mut grad);
    if !initial.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { epoch: 0 });
    }

    let mut stepper = match config.method {
        Method::PlainGradient => Stepper::Plain,
        Method::AdaptiveMoment => Stepper::Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        },
    };

    let n_units = objective.n_units();
    let batch = config.batch_size.filter(|b| *b < n_units);
    let mut order: Vec<usize> = (0..n_units).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut trace = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        match batch {
            None => {
                let loss = penalized.loss_grad(&params, None, &mut grad);
                check_finite(loss, &grad, epoch)?;
                stepper.step(&mut params, &grad, config.learning_rate);
                loss_sum += loss;
                steps += 1;
            }
            Some(b) => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(b) {
                    let loss = penalized.loss_grad(&params, Some(chunk), &mut grad);
                    check_finite(loss, &grad, epoch)?;
                    stepper.step(&mut params, &grad, config.learning_rate);
                    loss_sum += loss;
                    steps += 1;
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }

        let metric = stop.as_mut().map(|s| (s.evaluate)(&params));
        trace.push(EpochRecord {
            epoch,
            loss: loss_sum / steps as f64,
            metric,
        });

        if let (Some(s), Some(value)) = (stop.as_ref(), metric) {
            let improved = match &best {
                None => true,
                Some((b, _, _)) => s.rule.improves(value, *b),
            };
            if improved {
                best = Some((value, params.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > s.rule.patience {
                    break;
                }
            }
        }
    }

    Ok(match best {
        Some((_, p, epoch)) => FitResult {
            params: p,
            trace,
            best_epoch: epoch,
        },
        None => {
            let last = trace.len();
            FitResult {
                params,
                trace,
                best_epoch: last,
            }
        }
    })
}

fn check_finite(loss: f64, grad: &[f64], epoch: usize) -> Result<()> {
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { epoch });
    }
    Ok(())
}

/// Largest relative error between the analytic gradient and central differences.
pub fn check_gradient<O: Objective + ?Sized>(objective: &O, point: &[f64], step: f64) -> f64 {
    let dim = objective.dim();
    let mut analytic = vec![0.0; dim];
    objective.loss_grad(point, None, &mut analytic);
    let mut scratch = vec![0.0; dim];
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..dim {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = objective.loss_grad(&probe, None, &mut scratch);
        probe[i] = orig - step;
        let down = objective.loss_grad(&probe, None, &mut scratch);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + 1e-8);
        worst = worst.max(err);
    }
    worst
}
