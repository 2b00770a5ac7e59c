//! Multi-run, multi-filter experiment orchestration.
//!
//! Seeds: run `r` uses `derive_seed(base_seed, r + 1)`. Within a run the
//! observation noise, the contamination and the filters each draw from a
//! labelled child of that seed, and every filter receives the same filter
//! key. The state trajectory comes from a separate truth key and is shared by
//! all runs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use betasmc::filters::{run_filter, FilterKind, FilterSpec, ResampleTrigger, ResamplingScheme};
use betasmc::kalman::{kalman_filter, rts_smoother, GaussianBelief};
use betasmc::metrics::{coverage_from_bands, nmse, predictive_medae, rows, RunMetrics};
use betasmc::models::{GeneralisedLikelihood, LikelihoodFamily, NoiseModel, StateSpaceModel};
use betasmc::rng::{derive_seed, Purpose, StreamKey};
use betasmc::selection::{
    select_beta, BetaSelectionConfig, DimensionWeighting, SelectionResult,
};
use betasmc::simulators::{
    build_matern52, contaminate, observe, simulate_states, ContaminationSpec, TanConfig, WienerNoise,
    WienerVelocityConfig,
};
use betasmc::smoothing::ffbs;

use crate::config::{
    ContaminationConfig, ExperimentConfig, ExperimentKind, FilterConfig, FilterKindConfig, LikelihoodConfig,
    ResamplingConfig, RuleConfig, SmootherConfig, WeightingConfig,
};
use crate::io::ingest_csv;
use crate::CliError;

const TRUTH: u64 = 0x7472_7574;
const OBSERVE: u64 = 1;
const CONTAMINATE: u64 = 2;
const FILTER: u64 = 3;
const SMOOTH: u64 = 4;
const TUNING: u64 = 0x7475_6e65;

/// Two-sided 90% standard normal quantile.
const Z90: f64 = 1.644_853_626_951_472_2;

/// Everything shared by the runs of one experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ExperimentKind,
    /// Dynamics with the simulator's own likelihood.
    pub model: StateSpaceModel,
    /// Noise model used to draw observations.
    pub simulator_likelihood: LikelihoodFamily,
    pub contamination: ContaminationSpec,
    /// Simulated latent states (empty for external data).
    pub states: Vec<DVector<f64>>,
    /// Scored coordinates of the truth, `T × k`; `None` when unknown.
    pub truth: Option<DMatrix<f64>>,
    /// State coordinates compared against `truth`.
    pub eval_dims: Vec<usize>,
    /// Observations reused by every run (GP experiment).
    pub fixed_observations: Option<(Vec<DVector<f64>>, Vec<bool>)>,
    pub steps: usize,
}

pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    derive_seed(base_seed, run as u64 + 1)
}

fn contamination_spec(c: &ContaminationConfig) -> ContaminationSpec {
    match *c {
        ContaminationConfig::None => ContaminationSpec::None,
        ContaminationConfig::AdditiveGaussian { p, scale } => ContaminationSpec::AdditiveGaussian { p, scale },
        ContaminationConfig::AdditiveStudentT { p, dof, scale } => ContaminationSpec::AdditiveStudentT { p, dof, scale },
        ContaminationConfig::MultiplicativeExponential { p, scale } => {
            ContaminationSpec::MultiplicativeExponential { p, scale }
        }
    }
}

fn fixed_len<const N: usize>(v: &Option<Vec<f64>>, default: [f64; N], what: &str) -> Result<[f64; N], CliError> {
    match v {
        None => Ok(default),
        Some(x) => x
            .as_slice()
            .try_into()
            .map_err(|_| CliError::Config(format!("{what} must have {N} entries, got {}", x.len()))),
    }
}

fn wiener_config(cfg: &ExperimentConfig) -> Result<WienerVelocityConfig, CliError> {
    let s = &cfg.simulator;
    let mut w = match cfg.experiment {
        ExperimentKind::AsymmetricWiener => WienerVelocityConfig::asymmetric(),
        _ => WienerVelocityConfig::default(),
    };
    w.dt = s.dt.unwrap_or(w.dt);
    w.steps = s.steps.unwrap_or(w.steps);
    w.x0 = fixed_len(&s.x0, w.x0, "x0")?;
    w.noise = match w.noise {
        WienerNoise::Gaussian { variance } => WienerNoise::Gaussian { variance: s.obs_variance.unwrap_or(variance) },
        WienerNoise::Asymmetric { sigma_left, sigma_right } => WienerNoise::Asymmetric {
            sigma_left: s.sigma_left.unwrap_or(sigma_left),
            sigma_right: s.sigma_right.unwrap_or(sigma_right),
        },
    };
    if let Some(c) = &cfg.contamination {
        w.contamination = contamination_spec(c);
    }
    w.validate()?;
    Ok(w)
}

fn tan_config(cfg: &ExperimentConfig) -> Result<TanConfig, CliError> {
    let s = &cfg.simulator;
    let mut t = TanConfig::default();
    t.dt = s.dt.unwrap_or(t.dt);
    t.steps = s.steps.unwrap_or(t.steps);
    t.x0 = fixed_len(&s.x0, t.x0, "x0")?;
    t.obs_variance = s.obs_variance.unwrap_or(t.obs_variance);
    match &cfg.contamination {
        Some(c) => t.contamination = contamination_spec(c),
        // outliers share the observation noise scale
        None => t.contamination = ContaminationSpec::AdditiveStudentT { p: 0.05, dof: 1.0, scale: t.obs_variance.sqrt() },
    }
    t.validate()?;
    Ok(t)
}

pub fn build_scenario(cfg: &ExperimentConfig) -> Result<Scenario, CliError> {
    let truth_key = StreamKey::new(cfg.base_seed).child(TRUTH);
    match cfg.experiment {
        ExperimentKind::Wiener | ExperimentKind::AsymmetricWiener => {
            let w = wiener_config(cfg)?;
            let lik = w.likelihood()?;
            let model = w.model(lik.clone())?;
            let states = simulate_states(model.transition(), &w.x0, w.steps, &truth_key)?;
            Ok(Scenario {
                kind: cfg.experiment,
                truth: Some(rows(&states)),
                eval_dims: (0..4).collect(),
                model,
                simulator_likelihood: lik,
                contamination: w.contamination,
                steps: w.steps,
                states,
                fixed_observations: None,
            })
        }
        ExperimentKind::Tan => {
            let t = tan_config(cfg)?;
            let lik = t.likelihood()?;
            let model = t.model(lik.clone())?;
            let states = simulate_states(model.transition(), &t.x0, t.steps, &truth_key)?;
            Ok(Scenario {
                kind: cfg.experiment,
                truth: Some(rows(&states)),
                eval_dims: (0..6).collect(),
                model,
                simulator_likelihood: lik,
                contamination: t.contamination,
                steps: t.steps,
                states,
                fixed_observations: None,
            })
        }
        ExperimentKind::Gp => gp_scenario(cfg, &truth_key),
    }
}

fn gp_scenario(cfg: &ExperimentConfig, truth_key: &StreamKey) -> Result<Scenario, CliError> {
    let s = &cfg.simulator;
    let gp = build_matern52(
        s.lengthscale.unwrap_or(0.03),
        s.signal_variance.unwrap_or(32.0),
        s.dt.unwrap_or(0.005),
        s.obs_variance.unwrap_or(1.0),
    )?;
    let lik = gp.likelihood()?;
    let model = gp.model(lik.clone())?;
    let contamination = cfg
        .contamination
        .as_ref()
        .map(contamination_spec)
        .unwrap_or(ContaminationSpec::AdditiveGaussian { p: 0.1, scale: 10.0 });
    contamination.validate()?;

    if let Some(data) = &cfg.data {
        if s.steps.is_some() {
            return Err(CliError::Config("simulator.steps conflicts with [data]".into()));
        }
        let series = ingest_csv(&data.path, &data.time_column, &data.value_column, data.truth_column.as_deref())?;
        let ys = series.observations();
        let truth = series.truth.as_ref().map(|t| DMatrix::from_column_slice(t.len(), 1, t));
        return Ok(Scenario {
            kind: ExperimentKind::Gp,
            model,
            simulator_likelihood: lik,
            contamination: ContaminationSpec::None,
            states: Vec::new(),
            truth,
            eval_dims: vec![0],
            steps: ys.len(),
            fixed_observations: Some((ys, vec![false; series.len()])),
        });
    }

    let steps = s.steps.unwrap_or(200);
    if steps == 0 {
        return Err(CliError::Config("simulator.steps must be at least 1".into()));
    }
    let mut x0 = vec![0.0; 3];
    model.prior().sample_into(&mut truth_key.stream(0, Purpose::Init), &mut x0);
    let states = simulate_states(model.transition(), &x0, steps, truth_key)?;
    let (signal, clean) = observe(&lik, &states, &truth_key.child(OBSERVE))?;
    let (ys, flags) = contaminate(&signal, &clean, &contamination, &truth_key.child(CONTAMINATE))?;
    let truth = DMatrix::from_fn(steps, 1, |t, _| states[t][0]);
    Ok(Scenario {
        kind: ExperimentKind::Gp,
        model,
        simulator_likelihood: lik,
        contamination,
        states,
        truth: Some(truth),
        eval_dims: vec![0],
        steps,
        fixed_observations: Some((ys, flags)),
    })
}

impl Scenario {
    /// Observations and contamination flags of run `r`.
    pub fn observations(&self, base_seed: u64, run: usize) -> Result<(Vec<DVector<f64>>, Vec<bool>), CliError> {
        if let Some(fixed) = &self.fixed_observations {
            return Ok(fixed.clone());
        }
        let key = StreamKey::new(run_seed(base_seed, run));
        self.draw_observations(&key)
    }

    fn draw_observations(&self, key: &StreamKey) -> Result<(Vec<DVector<f64>>, Vec<bool>), CliError> {
        let (signal, clean) = observe(&self.simulator_likelihood, &self.states, &key.child(OBSERVE))?;
        Ok(contaminate(&signal, &clean, &self.contamination, &key.child(CONTAMINATE))?)
    }

    /// Alternative realisation used to tune β.
    pub fn tuning_observations(&self, base_seed: u64, run: usize) -> Result<Vec<DVector<f64>>, CliError> {
        if let Some((ys, _)) = &self.fixed_observations {
            return Ok(ys.clone());
        }
        let key = StreamKey::new(base_seed).child(TUNING).child(run as u64);
        Ok(self.draw_observations(&key)?.0)
    }
}

#[derive(Debug, Clone)]
pub enum Engine {
    Kalman,
    Particle(FilterKind),
}

/// A configured filter ready to run.
#[derive(Debug, Clone)]
pub struct FilterPlan {
    pub label: String,
    pub config: FilterConfig,
    pub engine: Engine,
    pub model: StateSpaceModel,
    pub gl: GeneralisedLikelihood,
    pub spec: FilterSpec,
}

fn filter_likelihood(cfg: &FilterConfig, scenario: &Scenario) -> Result<LikelihoodFamily, CliError> {
    let base = scenario.model.likelihood();
    match cfg.likelihood {
        LikelihoodConfig::Model => Ok(base.clone()),
        LikelihoodConfig::StudentT { scale, dof } => Ok(LikelihoodFamily::student_t(
            base.map().clone(),
            vec![scale; base.obs_dim()],
            dof,
        )?),
        LikelihoodConfig::OracleMixture => {
            let (ContaminationSpec::AdditiveGaussian { p, scale }, NoiseModel::Gaussian(noise)) =
                (scenario.contamination, base.noise())
            else {
                return Err(CliError::Config(
                    "the oracle mixture needs gaussian noise with additive gaussian contamination".into(),
                ));
            };
            let dy = base.obs_dim();
            let r = noise.covariance().clone();
            let wide = &r + DMatrix::identity(dy, dy) * (scale * scale);
            Ok(LikelihoodFamily::gaussian_mixture(
                base.map().clone(),
                vec![(1.0 - p, DVector::zeros(dy), r), (p, DVector::zeros(dy), wide)],
            )?)
        }
    }
}

pub fn build_plans(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<FilterPlan>, CliError> {
    cfg.filters
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let ctx = |e: CliError| match e {
                CliError::Config(m) => CliError::Config(format!("filters[{i}] ({}): {m}", f.label())),
                other => other,
            };
            let lik = filter_likelihood(f, scenario).map_err(ctx)?;
            let model = scenario.model.with_likelihood(lik.clone()).map_err(|e| ctx(e.into()))?;
            let gl = match (f.rule, f.beta) {
                (RuleConfig::Beta, Some(b)) => GeneralisedLikelihood::beta(lik, b).map_err(|e| ctx(e.into()))?,
                _ => GeneralisedLikelihood::standard(lik),
            };
            let engine = match f.kind {
                FilterKindConfig::Kalman => {
                    model.linear_gaussian_system().map_err(|e| ctx(e.into()))?;
                    Engine::Kalman
                }
                FilterKindConfig::Bpf => Engine::Particle(FilterKind::Bootstrap),
                FilterKindConfig::Apf => Engine::Particle(FilterKind::Auxiliary),
            };
            let mut spec = FilterSpec::new(f.particles)
                .with_resampling(match f.resampling {
                    ResamplingConfig::Multinomial => ResamplingScheme::Multinomial,
                    ResamplingConfig::Systematic => ResamplingScheme::Systematic,
                })
                .with_trigger(f.ess_threshold.map_or(ResampleTrigger::Always, ResampleTrigger::EssBelow))
                .with_stabiliser(f.apf_stabiliser)
                .with_predictive_draws(f.predictive_draws);
            if f.smoother == Some(SmootherConfig::Ffbs) {
                spec = spec.storing_ensembles();
            }
            spec.validate().map_err(|e| ctx(e.into()))?;
            Ok(FilterPlan {
                label: f.label(),
                config: f.clone(),
                engine,
                model,
                gl,
                spec,
            })
        })
        .collect()
}

/// Per-step estimates restricted to the scored coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub means: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub metrics: RunMetrics,
    /// Empty for the Kalman filter.
    pub ess: Vec<f64>,
    pub summary: StepSummary,
}

fn columns(m: &DMatrix<f64>, dims: &[usize]) -> DMatrix<f64> {
    m.select_columns(dims)
}

/// Run one filter on one observation sequence and score it.
pub fn run_plan(plan: &FilterPlan, scenario: &Scenario, ys: &[DVector<f64>], key: &StreamKey) -> Result<FilterRun, CliError> {
    let (means, lower, upper, predictive, ess) = match plan.engine {
        Engine::Kalman => {
            let sys = plan.model.linear_gaussian_system()?;
            let prior = GaussianBelief::new(plan.model.prior().mean().clone(), plan.model.prior().covariance().clone())?;
            let out = kalman_filter(&sys, &prior, ys)?;
            let beliefs = match plan.config.smoother {
                Some(SmootherConfig::Rts) => rts_smoother(&out, &sys.a)?,
                _ => out.filtered.clone(),
            };
            let d = sys.a.nrows();
            let means = DMatrix::from_fn(beliefs.len(), d, |t, j| beliefs[t].mean[j]);
            let sd = DMatrix::from_fn(beliefs.len(), d, |t, j| beliefs[t].cov[(j, j)].max(0.0).sqrt());
            let lower = &means - &sd * Z90;
            let upper = &means + &sd * Z90;
            (means, lower, upper, rows(&out.predictive_means), Vec::new())
        }
        Engine::Particle(kind) => {
            let out = run_filter(kind, &plan.model, &plan.gl, &plan.spec, ys, key)?;
            let (means, lower, upper) = match plan.config.smoother {
                Some(SmootherConfig::Ffbs) => {
                    let traj = ffbs(&out, plan.model.transition(), plan.config.trajectories, &key.child(SMOOTH))?;
                    (traj.means(), traj.quantiles(0.05), traj.quantiles(0.95))
                }
                _ => (out.means.clone(), out.lower.clone(), out.upper.clone()),
            };
            (means, lower, upper, out.predictive_means.clone(), out.ess.clone())
        }
    };
    let summary = StepSummary {
        means: columns(&means, &scenario.eval_dims),
        lower: columns(&lower, &scenario.eval_dims),
        upper: columns(&upper, &scenario.eval_dims),
    };
    let k = scenario.eval_dims.len();
    let (nmse_v, cov_v) = match &scenario.truth {
        Some(truth) => (nmse(truth, &summary.means)?, coverage_from_bands(truth, &summary.lower, &summary.upper)?),
        None => (vec![f64::NAN; k], vec![f64::NAN; k]),
    };
    let medae = predictive_medae(ys, &predictive)?;
    let (min_ess, mean_ess) = if ess.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            ess.iter().copied().fold(f64::INFINITY, f64::min),
            ess.iter().sum::<f64>() / ess.len() as f64,
        )
    };
    Ok(FilterRun {
        metrics: RunMetrics::new(nmse_v, cov_v, medae, min_ess, mean_ess),
        ess,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub filter: usize,
    /// Error message for a failed run.
    pub outcome: Result<FilterRun, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: ExperimentKind,
    pub base_seed: u64,
    pub runs: usize,
    pub plans: Vec<FilterPlan>,
    pub records: Vec<RunRecord>,
    pub scenario: Scenario,
}

impl ExperimentResult {
    /// Successful runs of filter `i`.
    pub fn metrics_of(&self, i: usize) -> Vec<&RunMetrics> {
        self.records
            .iter()
            .filter(|r| r.filter == i)
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| &o.metrics))
            .collect()
    }

    pub fn filter_index(&self, label: &str) -> Option<usize> {
        self.plans.iter().position(|p| p.label == label)
    }
}

pub fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

/// Simulate, filter and score every `(run, filter)` pair. Runs that fail
/// numerically are recorded and the experiment continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, CliError> {
    cfg.validate()?;
    if cfg.filters.is_empty() {
        return Err(CliError::Config("no filters configured".into()));
    }
    let scenario = build_scenario(cfg)?;
    let plans = build_plans(cfg, &scenario)?;
    let pool = thread_pool(cfg.workers)?;
    let nested: Vec<Result<Vec<RunRecord>, CliError>> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| {
                let seed = run_seed(cfg.base_seed, run);
                let (ys, _) = scenario.observations(cfg.base_seed, run)?;
                let key = StreamKey::new(seed).child(FILTER);
                Ok(plans
                    .par_iter()
                    .enumerate()
                    .map(|(i, plan)| RunRecord {
                        run_id: run,
                        seed,
                        filter: i,
                        outcome: run_plan(plan, &scenario, &ys, &key).map_err(|e| e.to_string()),
                    })
                    .collect())
            })
            .collect()
    });
    let mut records = Vec::with_capacity(cfg.runs * plans.len());
    for r in nested {
        records.extend(r?);
    }
    Ok(ExperimentResult {
        experiment: cfg.experiment,
        base_seed: cfg.base_seed,
        runs: cfg.runs,
        plans,
        records,
        scenario,
    })
}

/// Grid search for β on alternative realisations of the experiment.
pub fn run_selection(cfg: &ExperimentConfig) -> Result<SelectionResult, CliError> {
    cfg.validate()?;
    let sel = cfg
        .selection
        .clone()
        .ok_or_else(|| CliError::Config("missing [selection] table".into()))?;
    let scenario = build_scenario(cfg)?;
    let config = BetaSelectionConfig {
        grid: sel.grid.clone(),
        predictive_draws: sel.predictive_draws,
        weighting: match sel.weighting {
            WeightingConfig::InverseMedian => DimensionWeighting::InverseMedian,
            WeightingConfig::None => DimensionWeighting::None,
        },
    };
    config.validate()?;
    let kind = match sel.filter {
        FilterKindConfig::Apf => FilterKind::Auxiliary,
        _ => FilterKind::Bootstrap,
    };
    let tuning: Vec<Vec<DVector<f64>>> = (0..sel.runs)
        .map(|r| {
            let ys = scenario.tuning_observations(cfg.base_seed, r)?;
            let keep = ((ys.len() as f64 * sel.fraction).ceil() as usize).clamp(1, ys.len());
            Ok(ys[..keep].to_vec())
        })
        .collect::<Result<_, CliError>>()?;
    let spec = FilterSpec::new(sel.particles);
    spec.validate()?;
    let key = StreamKey::new(cfg.base_seed).child(TUNING).child(FILTER);
    let pool = thread_pool(cfg.workers)?;
    pool.install(|| select_beta(kind, &scenario.model, &spec, &tuning, &config, &key))
        .map_err(CliError::from)
}
