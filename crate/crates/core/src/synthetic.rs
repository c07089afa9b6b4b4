//! Synthetic environments with known structure.
//!
//! [`SyntheticSpec`] draws `X ~ N(0, I_m)` and, for three actions,
//! `Y(a) ~ Bernoulli(sigmoid(X_a + g(X)))` where the shared nonlinear term
//! `g(X) = sum_i alpha_i X_i^2 + sum_(i,j) beta_ij X_i X_j` cancels in the
//! argmax, so the Bayes-optimal rule is `argmax(X_0, X_1, X_2)`.
//!
//! [`RateTargetedSpec`] is a linear-logistic environment whose intercepts are
//! solved so each action hits a target marginal effectiveness rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::actions::{argmax, ActionSet};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::exec;
use crate::matrix::Matrix;
use crate::outcome::sigmoid;
use crate::seed::derive_seed;

const GEN_CHUNK: usize = 4096;
/// Probe size used to check and calibrate marginal outcome rates.
pub const PROBE_SIZE: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareTerm {
    /// 0-based feature index, at least 3.
    pub feature: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub squares: Vec<SquareTerm>,
    pub pairs: Vec<PairTerm>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Ten features; `alpha = +-1.5` alternating on features 4..10 and
    /// `beta = +-2` alternating on pairs (4,5), (6,7), (8,9) (1-based).
    fn default() -> Self {
        let squares = (3..10)
            .enumerate()
            .map(|(k, feature)| SquareTerm {
                feature,
                alpha: if k % 2 == 0 { 1.5 } else { -1.5 },
            })
            .collect();
        let pairs = [(3, 4), (5, 6), (7, 8)]
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| PairTerm {
                i,
                j,
                beta: if k % 2 == 0 { 2.0 } else { -2.0 },
            })
            .collect();
        Self {
            m: 10,
            squares,
            pairs,
            seed: 0,
        }
    }
}

/// Marginal rates measured on the generation-time probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub n: usize,
    pub mean_outcome: Vec<f64>,
}

impl SyntheticSpec {
    /// Same structure with no nonlinear terms: `P(Y(a) = 1 | X) = sigmoid(X_a)`.
    pub fn linear_only(m: usize, seed: u64) -> Self {
        Self {
            m,
            squares: Vec::new(),
            pairs: Vec::new(),
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_actions(&self) -> usize {
        3
    }

    pub fn actions() -> ActionSet {
        ActionSet::from_pairs(&[("A1", 0.0), ("A2", 0.0), ("A3", 0.0)]).expect("valid labels")
    }

    fn check_structure(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::Config("synthetic environment needs m >= 3".into()));
        }
        for t in &self.squares {
            if t.feature < 3 || t.feature >= self.m {
                return Err(Error::Config(format!("square term on feature {} out of range", t.feature)));
            }
            if t.alpha.abs() <= 1.0 {
                return Err(Error::Config(format!("|alpha| must exceed 1, got {}", t.alpha)));
            }
        }
        for p in &self.pairs {
            if p.i == p.j || p.i >= self.m || p.j >= self.m {
                return Err(Error::Config(format!("invalid pair ({}, {})", p.i, p.j)));
            }
            if p.beta.abs() <= 1.0 {
                return Err(Error::Config(format!("|beta| must exceed 1, got {}", p.beta)));
            }
        }
        Ok(())
    }

    /// Shared nonlinear part of every action's logit.
    pub fn shared_term(&self, x: &[f64]) -> f64 {
        let sq: f64 = self.squares.iter().map(|t| t.alpha * x[t.feature] * x[t.feature]).sum();
        let pr: f64 = self.pairs.iter().map(|p| p.beta * x[p.i] * x[p.j]).sum();
        sq + pr
    }

    /// `P(Y(a) = 1 | x)`.
    pub fn probability(&self, x: &[f64], a: usize) -> f64 {
        sigmoid(x[a] + self.shared_term(x))
    }

    /// Mean `P(Y(a) = 1)` per action over a Gaussian probe; must lie in `[0.4, 0.6]`.
    pub fn probe(&self) -> Result<ProbeStats> {
        self.check_structure()?;
        let sums = exec::map_chunks(PROBE_SIZE, GEN_CHUNK, |range| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "probe", range.start as u64));
            let mut x = vec![0.0; self.m];
            let mut acc = [0.0; 3];
            for _ in range {
                x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let g = self.shared_term(&x);
                for (a, s) in acc.iter_mut().enumerate() {
                    *s += sigmoid(x[a] + g);
                }
            }
            acc
        });
        let mut mean = vec![0.0; 3];
        for s in sums {
            for a in 0..3 {
                mean[a] += s[a];
            }
        }
        mean.iter_mut().for_each(|v| *v /= PROBE_SIZE as f64);
        for (a, &v) in mean.iter().enumerate() {
            if !(0.4..=0.6).contains(&v) {
                return Err(Error::Calibration(format!(
                    "mean outcome of action A{} is {v:.4}, outside [0.4, 0.6]",
                    a + 1
                )));
            }
        }
        Ok(ProbeStats {
            n: PROBE_SIZE,
            mean_outcome: mean,
        })
    }
}

/// Draws `n` units given a per-unit outcome probability function.
fn sample_cohort<F>(n: usize, m: usize, seed: u64, labels: Vec<String>, prob: F) -> Result<Cohort>
where
    F: Fn(&[f64], usize) -> f64 + Sync,
{
    let k = labels.len();
    let chunks = exec::map_chunks(n, GEN_CHUNK, |range| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "generate", range.start as u64));
        let mut xs = Vec::with_capacity(range.len() * m);
        let mut ys = Vec::with_capacity(range.len() * k);
        let mut x = vec![0.0; m];
        for _ in range {
            x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for a in 0..k {
                let u: f64 = rng.random();
                ys.push(u8::from(u < prob(&x, a)));
            }
            xs.extend_from_slice(&x);
        }
        (xs, ys)
    });
    let mut xs = Vec::with_capacity(n * m);
    let mut ys = Vec::with_capacity(n * k);
    for (cx, cy) in chunks {
        xs.extend(cx);
        ys.extend(cy);
    }
    Cohort::new(
        (0..n).map(|i| format!("u{i}")).collect(),
        (1..=m).map(|j| format!("x{j}")).collect(),
        labels,
        Matrix::new(n, m, xs)?,
        ys,
        None,
    )
}

/// Draws a cohort of `n` units; deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticSpec, n: usize) -> Result<Cohort> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    spec.probe()?;
    sample_cohort(n, spec.m, spec.seed, SyntheticSpec::actions().labels(), |x, a| {
        spec.probability(x, a)
    })
}

/// `argmax(x_0, x_1, x_2)`, lowest index on ties.
pub fn bayes_policy(x: &[f64]) -> usize {
    argmax(&x[..3])
}

/// Whether unit `i` has at least one effective and one ineffective action.
pub fn is_nonuniform(cohort: &Cohort, i: usize) -> bool {
    let row = cohort.y_row(i);
    row.contains(&1) && row.contains(&0)
}

/// Mean outcome with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Mean realized outcome of `decisions` over the non-uniform units of `cohort`.
pub fn nonuniform_mean_outcome(cohort: &Cohort, decisions: &[usize]) -> McEstimate {
    let vals: Vec<f64> = (0..cohort.n())
        .filter(|&i| is_nonuniform(cohort, i))
        .map(|i| f64::from(cohort.y(i, decisions[i])))
        .collect();
    mean_and_se(&vals)
}

fn mean_and_se(vals: &[f64]) -> McEstimate {
    let n = vals.len();
    if n == 0 {
        return McEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            n: 0,
        };
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        n,
    }
}

/// Monte Carlo value of the Bayes rule on the non-uniform subset.
pub fn bayes_value(spec: &SyntheticSpec, n_mc: usize, seed: u64) -> Result<McEstimate> {
    let cohort = generate(&spec.clone().with_seed(seed), n_mc)?;
    let decisions: Vec<usize> = cohort.x().iter_rows().map(bayes_policy).collect();
    Ok(nonuniform_mean_outcome(&cohort, &decisions))
}

/// How a simulated clinician picks an action before noise is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClinicianRule {
    Fixed { action: usize },
    /// `argmax` over the listed feature columns; position `p` maps to action `p`.
    FeatureArgmax { features: Vec<usize> },
    /// Draws actions independently of features with the given probabilities.
    Prescribing { probabilities: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicianSim {
    pub rule: ClinicianRule,
    /// Probability of replacing the rule's choice with a uniform random action.
    pub noise_rate: f64,
    pub seed: u64,
}

impl ClinicianSim {
    /// Clinician that follows `argmax(x_0, x_1, x_2)`.
    pub fn bayes(noise_rate: f64, seed: u64) -> Self {
        Self {
            rule: ClinicianRule::FeatureArgmax {
                features: vec![0, 1, 2],
            },
            noise_rate,
            seed,
        }
    }
}

/// Fills (or overwrites) `doctor_action` with simulated clinician choices.
pub fn simulate_clinician(sim: &ClinicianSim, cohort: Cohort) -> Result<Cohort> {
    let k = cohort.n_actions();
    if !(0.0..=1.0).contains(&sim.noise_rate) {
        return Err(Error::Config("noise_rate must lie in [0, 1]".into()));
    }
    let cumulative = match &sim.rule {
        ClinicianRule::Fixed { action } if *action >= k => {
            return Err(Error::Config(format!("fixed action {action} out of range")));
        }
        ClinicianRule::FeatureArgmax { features } => {
            if features.len() != k || features.iter().any(|&f| f >= cohort.m()) {
                return Err(Error::Config("feature-argmax needs one valid feature per action".into()));
            }
            None
        }
        ClinicianRule::Prescribing { probabilities } => {
            let total: f64 = probabilities.iter().sum();
            if probabilities.len() != k || probabilities.iter().any(|p| *p < 0.0) || total <= 0.0 {
                return Err(Error::Config("prescribing probabilities must be nonnegative, one per action".into()));
            }
            let mut acc = 0.0;
            Some(
                probabilities
                    .iter()
                    .map(|p| {
                        acc += p / total;
                        acc
                    })
                    .collect::<Vec<f64>>(),
            )
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut doctor = Vec::with_capacity(cohort.n());
    for i in 0..cohort.n() {
        let noisy = rng.random::<f64>() < sim.noise_rate;
        let draw: f64 = rng.random();
        let a = if noisy {
            ((draw * k as f64) as usize).min(k - 1)
        } else {
            match &sim.rule {
                ClinicianRule::Fixed { action } => *action,
                ClinicianRule::FeatureArgmax { features } => {
                    let vals: Vec<f64> = features.iter().map(|&f| cohort.x().get(i, f)).collect();
                    argmax(&vals)
                }
                ClinicianRule::Prescribing { .. } => {
                    let cum = cumulative.as_ref().expect("computed above");
                    cum.iter().position(|c| draw < *c).unwrap_or(k - 1)
                }
            }
        };
        doctor.push(a);
    }
    cohort.with_doctor_action(doctor)
}

/// Linear-logistic outcomes with intercepts solved to hit target marginal rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTargetedSpec {
    pub m: usize,
    pub actions: ActionSet,
    pub target_rates: Vec<f64>,
    /// Per-action feature loadings (`K x m`).
    pub loadings: Vec<Vec<f64>>,
    pub seed: u64,
}

/// A calibrated [`RateTargetedSpec`] ready for sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTargetedEnv {
    pub spec: RateTargetedSpec,
    pub intercepts: Vec<f64>,
    pub probe: ProbeStats,
}

impl RateTargetedSpec {
    /// Four actions (two cheap, two costly) with marginal effectiveness
    /// 0.890 / 0.804 / 0.936 / 0.935; the costly pair shares its loadings.
    pub fn antibiotic_like(m: usize, seed: u64) -> Self {
        let actions =
            ActionSet::from_pairs(&[("NIT", 0.0), ("SXT", 0.0), ("CIP", 1.0), ("LVX", 1.0)]).expect("valid");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "loadings", 0));
        let mut draw = || -> Vec<f64> { (0..m).map(|_| 0.8 * rng.sample::<f64, _>(StandardNormal)).collect() };
        let nit = draw();
        let sxt = draw();
        let fq = draw();
        Self {
            m,
            actions,
            target_rates: vec![0.890, 0.804, 0.936, 0.935],
            loadings: vec![nit, sxt, fq.clone(), fq],
            seed,
        }
    }

    fn probe_x(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "probe", 0));
        (0..PROBE_SIZE * self.m).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Solves each intercept by bisection on the probe sample.
    pub fn calibrate(&self) -> Result<RateTargetedEnv> {
        let k = self.actions.len();
        if self.target_rates.len() != k || self.loadings.len() != k {
            return Err(Error::Config("one target rate and loading vector per action required".into()));
        }
        if self.loadings.iter().any(|l| l.len() != self.m) {
            return Err(Error::Config("loading vectors must have length m".into()));
        }
        if self.target_rates.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::Config("target rates must lie in (0, 1)".into()));
        }
        let xs = self.probe_x();
        let linear: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                xs.chunks(self.m)
                    .map(|x| x.iter().zip(&self.loadings[a]).map(|(u, w)| u * w).sum())
                    .collect()
            })
            .collect();
        let rate = |a: usize, b: f64| linear[a].iter().map(|l| sigmoid(b + l)).sum::<f64>() / PROBE_SIZE as f64;
        let intercepts: Vec<f64> = exec::map_range(k, |a| {
            let (mut lo, mut hi) = (-30.0, 30.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if rate(a, mid) < self.target_rates[a] {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        });
        let mean_outcome = (0..k).map(|a| rate(a, intercepts[a])).collect();
        Ok(RateTargetedEnv {
            spec: self.clone(),
            intercepts,
            probe: ProbeStats {
                n: PROBE_SIZE,
                mean_outcome,
            },
        })
    }
}

impl RateTargetedEnv {
    pub fn probability(&self, x: &[f64], a: usize) -> f64 {
        let l: f64 = x.iter().zip(&self.spec.loadings[a]).map(|(u, w)| u * w).sum();
        sigmoid(self.intercepts[a] + l)
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Cohort> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        sample_cohort(n, self.spec.m, seed, self.spec.actions.labels(), |x, a| self.probability(x, a))
    }
}
