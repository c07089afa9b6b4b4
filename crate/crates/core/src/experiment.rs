//! End-to-end runs shared by the command-line tool and the test suites.
//!
//! Every stochastic step draws its seed from [`ExperimentConfig::seed`]
//! through [`derive_seed`], so a config fully determines its outputs.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::baselines::{calibrate_to_cohort, ConstrainedPolicy, UnconstrainedPolicy};
use crate::cohort::Cohort;
use crate::direct::{train_direct, tune_direct, DirectConfig, DirectTuning, LinearPolicy};
use crate::error::{Error, Result};
use crate::evaluation::{
    assemble_frontier, decision_cohort_analysis, doctor_eval, evaluate_policy, DecisionCohort, FrontierMethod,
    FrontierPoint, FrontierReport, DEFAULT_BOOTSTRAP,
};
use crate::exec;
use crate::indirect::{
    default_omega_grid, normalize_unit_grid, search_thresholds_cv, sweep_omega, BudgetGrid, RewardMaxPolicy,
    ThresholdGrid,
};
use crate::optim::{EarlyStopRule, Method, OptimizerConfig};
use crate::outcome::{
    default_outcome_optimizer, random_splits, tune_outcome_models, TunedOutcomeModels, TuningPlan,
};
use crate::policy::apply_policy;
use crate::reward::RewardSpec;
use crate::saved::SavedPolicy;
use crate::seed::derive_seed;
use crate::synthetic::{self, ClinicianSim, RateTargetedSpec, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Thresholding,
    RewardMax,
    Direct,
    Baseline,
}

impl MethodKind {
    pub fn all() -> Vec<Self> {
        vec![Self::Thresholding, Self::RewardMax, Self::Direct, Self::Baseline]
    }
}

/// Settings for the direct learner inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectSettings {
    pub optimizer: OptimizerConfig,
    /// Held-out part of the training cohort used for early stopping.
    pub early_stop: Option<EarlyStopRule>,
    pub validation_fraction: f64,
    /// When set, the penalty is chosen by held-out reward instead of taken from `optimizer`.
    pub tuning: Option<DirectTuning>,
    pub regret_transform: bool,
}

impl Default for DirectSettings {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig {
                batch_size: Some(32),
                ..OptimizerConfig::default()
            },
            early_stop: Some(EarlyStopRule::mean_reward(5)),
            validation_fraction: 0.2,
            tuning: None,
            regret_transform: false,
        }
    }
}

impl DirectSettings {
    /// Full-batch gradient descent with held-out penalty selection, as used
    /// for the synthetic comparison.
    pub fn synthetic() -> Self {
        Self {
            optimizer: OptimizerConfig {
                method: Method::PlainGradient,
                learning_rate: 0.5,
                l2_penalty: 0.0,
                l1_penalty: 0.0,
                max_epochs: 500,
                batch_size: None,
                seed: 0,
            },
            early_stop: None,
            validation_fraction: 0.2,
            tuning: Some(DirectTuning::default()),
            regret_transform: false,
        }
    }
}

/// Which generator `synth-gen` uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Nonlinear { spec: SyntheticSpec },
    RateTargeted { spec: RateTargetedSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGenConfig {
    pub generator: GeneratorSpec,
    pub n: usize,
    #[serde(default)]
    pub clinician: Option<ClinicianSim>,
}

/// What `train` fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum TrainTarget {
    Thresholding { budget: f64 },
    RewardMax { omega: f64 },
    Direct { omega: f64, lambda_defer: f64 },
    BaselineUnconstrained,
    BaselineConstrained,
}

fn default_methods() -> Vec<MethodKind> {
    MethodKind::all()
}
fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}
fn default_threshold_grid() -> ThresholdGrid {
    ThresholdGrid::with_default_levels(Vec::new())
}
fn default_defer_omega() -> f64 {
    0.9
}
fn default_trials() -> usize {
    1
}

/// 21 evenly spaced deferral bonuses in `[0, 0.10]`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=20).map(|i| (i as f64 * 0.005 * 1e6).round() / 1e6).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub actions: ActionSet,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodKind>,
    #[serde(default)]
    pub tuning: TuningPlan,
    #[serde(default = "default_outcome_optimizer")]
    pub outcome_optimizer: OptimizerConfig,
    #[serde(default)]
    pub direct: DirectSettings,
    #[serde(default = "default_omega_grid")]
    pub omega_grid: Vec<f64>,
    #[serde(default = "BudgetGrid::default_grid")]
    pub budget_grid: BudgetGrid,
    #[serde(default = "default_threshold_grid")]
    pub threshold_grid: ThresholdGrid,
    /// Fallback action for thresholding; defaults to the cheapest action.
    #[serde(default)]
    pub default_action: Option<usize>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_defer_omega")]
    pub defer_omega: f64,
    #[serde(default = "default_trials")]
    pub defer_trials: usize,
    #[serde(default = "default_bootstrap")]
    pub n_bootstrap: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthGenConfig>,
    #[serde(default)]
    pub train_target: Option<TrainTarget>,
    #[serde(default)]
    pub policy: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(actions: ActionSet) -> Self {
        Self {
            actions,
            train: None,
            test: None,
            methods: default_methods(),
            tuning: TuningPlan::default(),
            outcome_optimizer: default_outcome_optimizer(),
            direct: DirectSettings::default(),
            omega_grid: default_omega_grid(),
            budget_grid: BudgetGrid::default_grid(),
            threshold_grid: default_threshold_grid(),
            default_action: None,
            lambda_grid: default_lambda_grid(),
            defer_omega: default_defer_omega(),
            defer_trials: default_trials(),
            n_bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
            out_dir: None,
            synth: None,
            train_target: None,
            policy: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Grids non-empty and in range; called before any run.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        normalize_unit_grid(&self.omega_grid, "omega grid")?;
        normalize_unit_grid(&self.lambda_grid, "lambda grid")?;
        BudgetGrid::new(self.budget_grid.values().to_vec())?;
        if self.threshold_grid.fnr_levels.is_empty() {
            return Err(Error::Config("fnr_levels is empty".into()));
        }
        self.threshold_grid.cardinality(self.actions.len())?;
        if self.defer_trials == 0 {
            return Err(Error::Config("defer_trials must be positive".into()));
        }
        if let Some(a) = self.default_action {
            if a >= self.actions.len() {
                return Err(Error::Config(format!("default_action {a} out of range")));
            }
        }
        RewardSpec::new(self.defer_omega, 0.0)?;
        self.outcome_optimizer.validate()?;
        self.direct.optimizer.validate()?;
        Ok(())
    }

    fn default_action(&self) -> usize {
        self.default_action.unwrap_or_else(|| self.actions.cheapest())
    }

    fn tuning_plan(&self) -> TuningPlan {
        TuningPlan {
            seed: derive_seed(self.seed, "outcome-splits", 0),
            ..self.tuning.clone()
        }
    }

    fn bootstrap_seed(&self) -> u64 {
        derive_seed(self.seed, "bootstrap", 0)
    }
}

/// Fits outcome models with the config's tuning plan.
pub fn fit_models(cfg: &ExperimentConfig, train: &Cohort) -> Result<TunedOutcomeModels> {
    let mut opt = cfg.outcome_optimizer.clone();
    opt.seed = derive_seed(cfg.seed, "outcome-optimizer", 0);
    tune_outcome_models(train, &cfg.actions, &cfg.tuning_plan(), &opt)
}

/// Trains one direct policy for `(omega, lambda)` using the config's settings.
pub fn fit_direct(cfg: &ExperimentConfig, train: &Cohort, reward: RewardSpec, job: u64) -> Result<LinearPolicy> {
    let s = &cfg.direct;
    let mut optimizer = s.optimizer.clone();
    optimizer.seed = derive_seed(cfg.seed, "direct-optimizer", job);
    let config = DirectConfig {
        reward,
        optimizer,
        early_stop: s.early_stop,
        regret_transform: s.regret_transform,
    };
    if let Some(t) = &s.tuning {
        let tuning = DirectTuning {
            seed: derive_seed(cfg.seed, "direct-splits", job),
            ..t.clone()
        };
        return Ok(tune_direct(train, &cfg.actions, &config, &tuning)?.policy);
    }
    if config.early_stop.is_some() {
        let split = random_splits(
            train.n(),
            1,
            s.validation_fraction,
            derive_seed(cfg.seed, "direct-splits", job),
        )?
        .remove(0);
        let fit_part = train.subset(&split.train);
        let val_part = train.subset(&split.val);
        train_direct(&fit_part, &cfg.actions, &config, Some(&val_part))
    } else {
        train_direct(train, &cfg.actions, &config, None)
    }
}

/// A frontier report plus the policy behind each learned point.
#[derive(Debug, Clone)]
pub struct FrontierRun {
    pub report: FrontierReport,
    /// Keyed by the `policy_ref` recorded on each point.
    pub policies: Vec<(String, SavedPolicy)>,
}

fn with_context<T>(method: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{method}: {m}")),
        other => other,
    })
}

/// Trains every selected method on `train` and evaluates all points on `test`.
pub fn run_frontier(cfg: &ExperimentConfig, train: &Cohort, test: &Cohort) -> Result<FrontierRun> {
    cfg.validate()?;
    train.check_actions(&cfg.actions)?;
    test.check_actions(&cfg.actions)?;
    let actions = &cfg.actions;
    let boot = cfg.bootstrap_seed();
    let wants = |m: MethodKind| cfg.methods.contains(&m);
    let mut learned: Vec<(FrontierMethod, Option<f64>, Option<String>, SavedPolicy)> = Vec::new();

    let needs_models = wants(MethodKind::Thresholding) || wants(MethodKind::RewardMax) || wants(MethodKind::Baseline);
    let tuned = if needs_models {
        Some(with_context("outcome models", fit_models(cfg, train))?)
    } else {
        None
    };

    if wants(MethodKind::Thresholding) {
        let tuned = tuned.as_ref().expect("fitted above");
        let search = with_context(
            "thresholding",
            search_thresholds_cv(
                tuned,
                train,
                &cfg.threshold_grid,
                &cfg.budget_grid,
                actions,
                cfg.default_action(),
            ),
        )?;
        for choice in search.choices {
            learned.push((
                FrontierMethod::Thresholding,
                Some(choice.budget),
                None,
                SavedPolicy::Threshold(choice.policy),
            ));
        }
    }
    if wants(MethodKind::RewardMax) {
        let tuned = tuned.as_ref().expect("fitted above");
        let omegas = normalize_unit_grid(&cfg.omega_grid, "omega grid")?;
        for p in with_context("reward-max", sweep_omega(&tuned.models, &omegas, actions))? {
            learned.push((FrontierMethod::RewardMax, Some(p.omega), None, SavedPolicy::RewardMax(p)));
        }
    }
    if wants(MethodKind::Direct) {
        let omegas = normalize_unit_grid(&cfg.omega_grid, "omega grid")?;
        let fits = exec::map_range(omegas.len(), |j| {
            fit_direct(cfg, train, RewardSpec::new(omegas[j], 0.0)?, j as u64)
        });
        for (j, fit) in fits.into_iter().enumerate() {
            let p = with_context("direct", fit)?;
            learned.push((FrontierMethod::Direct, Some(omegas[j]), None, SavedPolicy::Linear(p)));
        }
    }
    if wants(MethodKind::Baseline) {
        let tuned = tuned.as_ref().expect("fitted above");
        learned.push((
            FrontierMethod::Baseline,
            None,
            Some("unconstrained".into()),
            SavedPolicy::Unconstrained(UnconstrainedPolicy {
                models: Arc::clone(&tuned.models),
                actions: actions.clone(),
            }),
        ));
        if train.doctor_action().is_some() {
            let costs = with_context(
                "baseline",
                calibrate_to_cohort(&tuned.models, train, actions, None, None, None, None),
            )?;
            learned.push((
                FrontierMethod::Baseline,
                None,
                Some("constrained".into()),
                SavedPolicy::Constrained(ConstrainedPolicy {
                    models: Arc::clone(&tuned.models),
                    actions: actions.clone(),
                    costs,
                }),
            ));
        }
    }

    let evals = exec::map_slice(&learned, |(_, _, _, p)| evaluate_policy(p, test, actions, cfg.n_bootstrap, boot));
    let mut points = Vec::with_capacity(learned.len() + 1);
    let mut policies = Vec::with_capacity(learned.len());
    for (idx, ((method, param, variant, policy), eval)) in learned.into_iter().zip(evals).enumerate() {
        let handle = format!("policy-{idx:03}-{}", method.as_str());
        points.push(FrontierPoint {
            method,
            param,
            variant,
            eval: eval?,
            policy_ref: Some(handle.clone()),
        });
        policies.push((handle, policy));
    }
    if test.doctor_action().is_some() {
        points.push(FrontierPoint {
            method: FrontierMethod::Doctor,
            param: None,
            variant: None,
            eval: doctor_eval(test, actions, cfg.n_bootstrap, boot)?,
            policy_ref: None,
        });
    }
    Ok(FrontierRun {
        report: assemble_frontier(points),
        policies,
    })
}

/// One row of the deferral sweep, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferRow {
    pub lambda: f64,
    pub trials: usize,
    pub defer_rate: f64,
    /// Trials whose decision cohort was empty; excluded from the rate averages below.
    pub empty_trials: usize,
    pub n_decided: f64,
    pub doctor_iat: Option<f64>,
    pub policy_iat: Option<f64>,
    pub doctor_cost: Option<f64>,
    pub policy_cost: Option<f64>,
}

pub const DEFER_CSV_HEADER: &str =
    "lambda,trials,defer_rate,empty_trials,n_decided,doctor_iat,policy_iat,doctor_cost,policy_cost";

/// Trains deferring direct policies over the lambda grid and compares them
/// with the clinician on each decision cohort.
pub fn run_defer_sweep(cfg: &ExperimentConfig, train: &Cohort, test: &Cohort) -> Result<Vec<DeferRow>> {
    cfg.validate()?;
    if train.doctor_action().is_none() || test.doctor_action().is_none() {
        return Err(Error::Config("defer sweep needs doctor_action in both cohorts".into()));
    }
    train.check_actions(&cfg.actions)?;
    test.check_actions(&cfg.actions)?;
    let lambdas = normalize_unit_grid(&cfg.lambda_grid, "lambda grid")?;
    let trials = cfg.defer_trials;
    let jobs = exec::map_range(lambdas.len() * trials, |job| -> Result<DecisionCohort> {
        let (l, t) = (job / trials, job % trials);
        let spec = RewardSpec::new(cfg.defer_omega, lambdas[l])?;
        let policy = fit_direct(cfg, train, spec, derive_seed(t as u64, "defer-trial", l as u64))?;
        decision_cohort_analysis(&policy, test, &cfg.actions)
    });
    let jobs: Vec<DecisionCohort> = jobs.into_iter().collect::<Result<_>>()?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let group = &jobs[l * trials..(l + 1) * trials];
            let defer_rate = group.iter().map(|d| d.defer_rate()).sum::<f64>() / trials as f64;
            let paired: Vec<_> = group
                .iter()
                .filter_map(|d| match d {
                    DecisionCohort::Paired {
                        n_decided,
                        doctor,
                        policy,
                        ..
                    } => Some((*n_decided, doctor, policy)),
                    DecisionCohort::Empty { .. } => None,
                })
                .collect();
            let avg = |f: &dyn Fn(&(usize, &crate::evaluation::PolicyEval, &crate::evaluation::PolicyEval)) -> f64| {
                (!paired.is_empty()).then(|| paired.iter().map(f).sum::<f64>() / paired.len() as f64)
            };
            DeferRow {
                lambda,
                trials,
                defer_rate,
                empty_trials: trials - paired.len(),
                n_decided: group
                    .iter()
                    .map(|d| match d {
                        DecisionCohort::Paired { n_decided, .. } => *n_decided as f64,
                        DecisionCohort::Empty { .. } => 0.0,
                    })
                    .sum::<f64>()
                    / trials as f64,
                doctor_iat: avg(&|p| p.1.iat_rate),
                policy_iat: avg(&|p| p.2.iat_rate),
                doctor_cost: avg(&|p| p.1.cost_rate),
                policy_cost: avg(&|p| p.2.cost_rate),
            }
        })
        .collect())
}

pub fn write_defer_csv<W: std::io::Write>(rows: &[DeferRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(DEFER_CSV_HEADER.split(','))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            format!("{}", r.lambda),
            r.trials.to_string(),
            format!("{}", r.defer_rate),
            r.empty_trials.to_string(),
            format!("{}", r.n_decided),
            opt(r.doctor_iat),
            opt(r.policy_iat),
            opt(r.doctor_cost),
            opt(r.policy_cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fits the single policy described by `target`.
pub fn run_train(cfg: &ExperimentConfig, train: &Cohort, target: TrainTarget) -> Result<SavedPolicy> {
    cfg.validate()?;
    train.check_actions(&cfg.actions)?;
    let actions = &cfg.actions;
    match target {
        TrainTarget::Direct { omega, lambda_defer } => Ok(SavedPolicy::Linear(fit_direct(
            cfg,
            train,
            RewardSpec::new(omega, lambda_defer)?,
            0,
        )?)),
        TrainTarget::RewardMax { omega } => {
            let tuned = fit_models(cfg, train)?;
            RewardSpec::new(omega, 0.0)?;
            Ok(SavedPolicy::RewardMax(RewardMaxPolicy {
                models: tuned.models,
                omega,
                actions: actions.clone(),
            }))
        }
        TrainTarget::Thresholding { budget } => {
            let tuned = fit_models(cfg, train)?;
            let budgets = BudgetGrid::new(vec![budget])?;
            let mut search = search_thresholds_cv(
                &tuned,
                train,
                &cfg.threshold_grid,
                &budgets,
                actions,
                cfg.default_action(),
            )?;
            Ok(SavedPolicy::Threshold(search.choices.remove(0).policy))
        }
        TrainTarget::BaselineUnconstrained => {
            let tuned = fit_models(cfg, train)?;
            Ok(SavedPolicy::Unconstrained(UnconstrainedPolicy {
                models: tuned.models,
                actions: actions.clone(),
            }))
        }
        TrainTarget::BaselineConstrained => {
            let tuned = fit_models(cfg, train)?;
            let costs = calibrate_to_cohort(&tuned.models, train, actions, None, None, None, None)?;
            Ok(SavedPolicy::Constrained(ConstrainedPolicy {
                models: tuned.models,
                actions: actions.clone(),
                costs,
            }))
        }
    }
}

/// Draws the cohort described by `synth`, with clinician actions when requested.
pub fn run_synth_gen(synth: &SynthGenConfig, seed: u64) -> Result<(Cohort, serde_json::Value)> {
    let (cohort, probe) = match &synth.generator {
        GeneratorSpec::Nonlinear { spec } => {
            let spec = spec.clone().with_seed(derive_seed(seed, "synthetic", 0));
            let probe = spec.probe()?;
            (synthetic::generate(&spec, synth.n)?, serde_json::to_value(&probe)?)
        }
        GeneratorSpec::RateTargeted { spec } => {
            let env = spec.calibrate()?;
            let cohort = env.generate(synth.n, derive_seed(seed, "synthetic", 0))?;
            (
                cohort,
                serde_json::json!({ "probe": env.probe, "intercepts": env.intercepts }),
            )
        }
    };
    let cohort = match &synth.clinician {
        Some(sim) => {
            let sim = ClinicianSim {
                seed: derive_seed(seed, "clinician", sim.seed),
                ..sim.clone()
            };
            synthetic::simulate_clinician(&sim, cohort)?
        }
        None => cohort,
    };
    Ok((cohort, probe))
}

/// Mean non-uniform-subset outcome of the direct and indirect learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n_train: usize,
    pub seeds: usize,
    pub direct: f64,
    pub indirect: f64,
    pub direct_per_seed: Vec<f64>,
    pub indirect_per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPlan {
    pub spec: SyntheticSpec,
    pub sizes: Vec<usize>,
    pub seeds: usize,
    pub test_size: usize,
    pub tuning: TuningPlan,
    pub direct: DirectSettings,
    pub seed: u64,
}

impl Default for ComparisonPlan {
    fn default() -> Self {
        Self {
            spec: SyntheticSpec::default(),
            sizes: vec![100, 1000, 10_000],
            seeds: 25,
            test_size: 100_000,
            tuning: TuningPlan {
                n_splits: 5,
                ..TuningPlan::default()
            },
            direct: DirectSettings::synthetic(),
            seed: 0,
        }
    }
}

/// Trains both learners on the same training sets per size and scores them
/// on one shared test set. Returns the rows and the Bayes rule's value there.
pub fn run_synthetic_comparison(plan: &ComparisonPlan) -> Result<(Vec<ComparisonRow>, synthetic::McEstimate)> {
    let actions = SyntheticSpec::actions();
    let test_spec = plan.spec.clone().with_seed(derive_seed(plan.seed, "test-set", 0));
    let test = synthetic::generate(&test_spec, plan.test_size)?;
    let bayes: Vec<usize> = test.x().iter_rows().map(synthetic::bayes_policy).collect();
    let bayes_value = synthetic::nonuniform_mean_outcome(&test, &bayes);
    let mut cfg = ExperimentConfig::new(actions.clone());
    cfg.tuning = plan.tuning.clone();
    cfg.direct = plan.direct.clone();
    let mut rows = Vec::with_capacity(plan.sizes.len());
    for &n in &plan.sizes {
        let mut d = Vec::with_capacity(plan.seeds);
        let mut ind = Vec::with_capacity(plan.seeds);
        for s in 0..plan.seeds {
            let run_seed = derive_seed(plan.seed, "train-set", (n as u64) << 20 | s as u64);
            let train = synthetic::generate(&plan.spec.clone().with_seed(run_seed), n)?;
            cfg.seed = run_seed;
            let direct = fit_direct(&cfg, &train, RewardSpec::new(1.0, 0.0)?, 0)?;
            d.push(synthetic::nonuniform_mean_outcome(&test, &apply_policy(&direct, test.x())?).mean);
            let tuned = fit_models(&cfg, &train)?;
            let indirect = RewardMaxPolicy {
                models: tuned.models,
                omega: 1.0,
                actions: actions.clone(),
            };
            ind.push(synthetic::nonuniform_mean_outcome(&test, &apply_policy(&indirect, test.x())?).mean);
        }
        rows.push(ComparisonRow {
            n_train: n,
            seeds: plan.seeds,
            direct: d.iter().sum::<f64>() / d.len() as f64,
            indirect: ind.iter().sum::<f64>() / ind.len() as f64,
            direct_per_seed: d,
            indirect_per_seed: ind,
        });
    }
    Ok((rows, bayes_value))
}
