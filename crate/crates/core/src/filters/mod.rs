//! Particle filters for generalised likelihoods.
//!
//! All filters share one time convention: the prior describes `x_0`, and
//! observation `ys[t-1]` is assimilated at step `t = 1..=T` after a transition.
//! An observation containing a NaN is treated as missing and the step only
//! propagates.

mod auxiliary;
mod bootstrap;
mod generic;
mod resample;
mod weights;

pub use auxiliary::{apf_first_stage_probabilities, run_apf};
pub use bootstrap::run_bpf;
pub use generic::{run_generic_pf, Proposal};
pub use resample::{resample, ResamplingScheme};
pub use weights::{effective_sample_size, normalise_log_weights};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::models::{GeneralisedLikelihood, LikelihoodFamily, StateSpaceModel, TransitionKernel};
use crate::rng::{Purpose, StreamKey};
use crate::stats;

/// Quantile levels of the stored credible band.
pub const BAND_LOWER: f64 = 0.05;
pub const BAND_UPPER: f64 = 0.95;

const PAR_MIN_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Bootstrap,
    Auxiliary,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ResampleTrigger {
    #[default]
    Always,
    /// Resample when ESS / N falls below the fraction.
    EssBelow(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub particles: usize,
    pub resampling: ResamplingScheme,
    pub trigger: ResampleTrigger,
    /// Fraction `c` in `G̃(x) = G(μ(x)) + c · sup G` for the auxiliary filter.
    pub apf_stabiliser: f64,
    /// Predictive observation draws stored per step.
    pub predictive_draws: usize,
    /// Keep the weighted pre-resampling ensembles (needed for smoothing).
    pub store_ensembles: bool,
}

impl FilterSpec {
    pub fn new(particles: usize) -> Self {
        Self {
            particles,
            resampling: ResamplingScheme::Multinomial,
            trigger: ResampleTrigger::Always,
            apf_stabiliser: 0.05,
            predictive_draws: 0,
            store_ensembles: false,
        }
    }

    pub fn with_resampling(mut self, scheme: ResamplingScheme) -> Self {
        self.resampling = scheme;
        self
    }

    pub fn with_trigger(mut self, trigger: ResampleTrigger) -> Self {
        self.trigger = trigger;
        self
    }

    pub fn with_stabiliser(mut self, fraction: f64) -> Self {
        self.apf_stabiliser = fraction;
        self
    }

    pub fn with_predictive_draws(mut self, draws: usize) -> Self {
        self.predictive_draws = draws;
        self
    }

    pub fn storing_ensembles(mut self) -> Self {
        self.store_ensembles = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config(format!("need at least 2 particles, got {}", self.particles)));
        }
        if let ResampleTrigger::EssBelow(f) = self.trigger {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("ESS threshold must lie in (0, 1], got {f}")));
            }
        }
        if !(self.apf_stabiliser >= 0.0 && self.apf_stabiliser.is_finite()) {
            return Err(Error::Config("APF stabiliser fraction must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Weighted particle cloud at one time step.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// Row-major `N × dim`.
    pub states: Vec<f64>,
    /// Normalised log weights.
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
    /// Index of each particle's parent in the previous ensemble.
    pub ancestors: Vec<usize>,
    pub time_index: usize,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.states.chunks_exact(self.dim).map(|p| p[j]).collect()
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.states.chunks_exact(self.dim).zip(&self.weights) {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }
}

/// Predictive observation draws, `T × M × d_y` row-major.
#[derive(Debug, Clone, Default)]
pub struct PredictiveSamples {
    pub draws: usize,
    pub obs_dim: usize,
    pub data: Vec<f64>,
}

impl PredictiveSamples {
    pub fn steps(&self) -> usize {
        if self.draws == 0 || self.obs_dim == 0 {
            0
        } else {
            self.data.len() / (self.draws * self.obs_dim)
        }
    }

    pub fn sample(&self, t: usize, m: usize) -> &[f64] {
        let start = (t * self.draws + m) * self.obs_dim;
        &self.data[start..start + self.obs_dim]
    }
}

/// Per-step results of a particle filter run.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// Filtering means, `T × d_x`.
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
    /// 5% and 95% marginal quantiles of the (resampled) particles.
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// ESS of the weights after the weighting step.
    pub ess: Vec<f64>,
    pub resampled: Vec<bool>,
    pub log_normalising_increments: Vec<f64>,
    /// Mean of the one-step-ahead predictive `p(y_t | y_{1:t-1})`, `T × d_y`.
    pub predictive_means: DMatrix<f64>,
    pub predictive_samples: PredictiveSamples,
    /// Weighted ensembles before resampling, one per step.
    pub ensembles: Option<Vec<ParticleEnsemble>>,
    pub particles: usize,
}

impl FilterOutput {
    pub fn steps(&self) -> usize {
        self.ess.len()
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_normalising_increments.iter().sum()
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_ess(&self) -> f64 {
        stats::mean(&self.ess)
    }
}

pub fn run_filter(
    kind: FilterKind,
    model: &StateSpaceModel,
    gl: &GeneralisedLikelihood,
    spec: &FilterSpec,
    ys: &[DVector<f64>],
    key: &StreamKey,
) -> Result<FilterOutput> {
    match kind {
        FilterKind::Bootstrap => run_bpf(model, gl, spec, ys, key),
        FilterKind::Auxiliary => run_apf(model, gl, spec, ys, key),
    }
}

pub(crate) fn is_missing(y: &DVector<f64>) -> bool {
    y.iter().any(|v| v.is_nan())
}

pub(crate) fn validate_inputs(
    model: &StateSpaceModel,
    gl: &GeneralisedLikelihood,
    spec: &FilterSpec,
    ys: &[DVector<f64>],
) -> Result<()> {
    spec.validate()?;
    if ys.is_empty() {
        return Err(Error::Config("observation sequence is empty".into()));
    }
    check_dim("generalised likelihood state", model.state_dim(), gl.base().state_dim())?;
    for y in ys {
        check_dim("observation", gl.base().obs_dim(), y.len())?;
    }
    if let crate::models::NoiseModel::Gaussian(g) = gl.base().noise() {
        if g.is_degenerate() {
            return Err(Error::Config("filtering needs a non-singular likelihood covariance".into()));
        }
    }
    Ok(())
}

pub(crate) fn initial_states(model: &StateSpaceModel, n: usize, key: &StreamKey) -> Vec<f64> {
    let d = model.state_dim();
    let mut states = vec![0.0; n * d];
    states
        .par_chunks_mut(d)
        .with_min_len(PAR_MIN_LEN)
        .enumerate()
        .for_each(|(i, out)| {
            let mut rng = key.particle(0, Purpose::Init, i);
            model.prior().sample_into(&mut rng, out);
        });
    states
}

/// Propagate each row of `from` through the transition with per-particle streams.
pub(crate) fn propagate(
    transition: &TransitionKernel,
    from: &[f64],
    parents: Option<&[usize]>,
    to: &mut [f64],
    step: usize,
    purpose: Purpose,
    key: &StreamKey,
) {
    let d = transition.dim();
    to.par_chunks_mut(d)
        .with_min_len(PAR_MIN_LEN)
        .enumerate()
        .for_each(|(i, out)| {
            let src = parents.map_or(i, |p| p[i]);
            let mut rng = key.particle(step, purpose, i);
            transition.sample_into(&from[src * d..(src + 1) * d], &mut rng, out);
        });
}

pub(crate) fn log_potentials(gl: &GeneralisedLikelihood, states: &[f64], d: usize, y: &[f64]) -> Vec<f64> {
    states
        .par_chunks(d)
        .with_min_len(PAR_MIN_LEN)
        .map(|x| gl.log_potential(x, y))
        .collect()
}

/// Collects per-step summaries into a [`FilterOutput`].
pub(crate) struct Recorder {
    n: usize,
    d: usize,
    dy: usize,
    means: DMatrix<f64>,
    variances: DMatrix<f64>,
    lower: DMatrix<f64>,
    upper: DMatrix<f64>,
    ess: Vec<f64>,
    resampled: Vec<bool>,
    increments: Vec<f64>,
    predictive_means: DMatrix<f64>,
    predictive: PredictiveSamples,
    ensembles: Option<Vec<ParticleEnsemble>>,
}

impl Recorder {
    pub(crate) fn new(spec: &FilterSpec, steps: usize, d: usize, dy: usize) -> Self {
        Self {
            n: spec.particles,
            d,
            dy,
            means: DMatrix::zeros(steps, d),
            variances: DMatrix::zeros(steps, d),
            lower: DMatrix::zeros(steps, d),
            upper: DMatrix::zeros(steps, d),
            ess: Vec::with_capacity(steps),
            resampled: Vec::with_capacity(steps),
            increments: Vec::with_capacity(steps),
            predictive_means: DMatrix::zeros(steps, dy),
            predictive: PredictiveSamples {
                draws: spec.predictive_draws,
                obs_dim: dy,
                data: Vec::with_capacity(steps * spec.predictive_draws * dy),
            },
            ensembles: spec.store_ensembles.then(|| Vec::with_capacity(steps)),
        }
    }

    /// Record the one-step predictive from `states` weighted by `weights`
    /// (the previous filtering weights).
    pub(crate) fn predictive(
        &mut self,
        row: usize,
        lik: &LikelihoodFamily,
        states: &[f64],
        weights: &[f64],
        step: usize,
        key: &StreamKey,
    ) {
        let d = self.d;
        let dy = self.dy;
        let mut point = vec![0.0; dy];
        let mut buf = vec![0.0; dy];
        for (x, w) in states.chunks_exact(d).zip(weights) {
            lik.point_prediction_into(x, &mut buf);
            for (p, b) in point.iter_mut().zip(&buf) {
                *p += w * b;
            }
        }
        for (j, p) in point.iter().enumerate() {
            self.predictive_means[(row, j)] = *p;
        }
        let m = self.predictive.draws;
        if m > 0 {
            let mut rng = key.stream(step, Purpose::Predict);
            let picks = resample(weights, m, ResamplingScheme::Multinomial, &mut rng);
            for k in picks {
                lik.sample_into(&states[k * d..(k + 1) * d], &mut rng, &mut buf);
                self.predictive.data.extend_from_slice(&buf);
            }
        }
    }

    pub(crate) fn weights(&mut self, ess: f64, increment: f64, resampled: bool) {
        self.ess.push(ess);
        self.increments.push(increment);
        self.resampled.push(resampled);
    }

    pub(crate) fn store(&mut self, ensemble: impl FnOnce() -> ParticleEnsemble) {
        if let Some(list) = self.ensembles.as_mut() {
            list.push(ensemble());
        }
    }

    /// Moments and band of the ensemble; `weights = None` means equally weighted.
    pub(crate) fn summarise(&mut self, row: usize, states: &[f64], weights: Option<&[f64]>) {
        let d = self.d;
        let n = self.n;
        let mut column = vec![0.0; n];
        let mut order: Vec<usize> = (0..n).collect();
        for j in 0..d {
            for (c, p) in column.iter_mut().zip(states.chunks_exact(d)) {
                *c = p[j];
            }
            let (mean, var) = match weights {
                None => {
                    let m = stats::mean(&column);
                    let v = column.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n as f64;
                    (m, v)
                }
                Some(w) => {
                    let m: f64 = column.iter().zip(w).map(|(c, wi)| c * wi).sum();
                    let v: f64 = column.iter().zip(w).map(|(c, wi)| wi * (c - m) * (c - m)).sum();
                    (m, v)
                }
            };
            let (lo, hi) = match weights {
                None => {
                    column.sort_by(f64::total_cmp);
                    (
                        stats::quantile_sorted(&column, BAND_LOWER),
                        stats::quantile_sorted(&column, BAND_UPPER),
                    )
                }
                Some(w) => {
                    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
                    (
                        stats::weighted_quantile_ordered(&column, w, &order, BAND_LOWER),
                        stats::weighted_quantile_ordered(&column, w, &order, BAND_UPPER),
                    )
                }
            };
            self.means[(row, j)] = mean;
            self.variances[(row, j)] = var;
            self.lower[(row, j)] = lo;
            self.upper[(row, j)] = hi;
        }
    }

    pub(crate) fn finish(self) -> FilterOutput {
        FilterOutput {
            means: self.means,
            variances: self.variances,
            lower: self.lower,
            upper: self.upper,
            ess: self.ess,
            resampled: self.resampled,
            log_normalising_increments: self.increments,
            predictive_means: self.predictive_means,
            predictive_samples: self.predictive,
            ensembles: self.ensembles,
            particles: self.n,
        }
    }
}

/// Resampling decision for the configured trigger.
pub(crate) fn should_resample(spec: &FilterSpec, ess: f64) -> bool {
    match spec.trigger {
        ResampleTrigger::Always => true,
        ResampleTrigger::EssBelow(f) => ess < f * spec.particles as f64,
    }
}

pub(crate) fn gather(states: &[f64], d: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        out.extend_from_slice(&states[i * d..(i + 1) * d]);
    }
    out
}

pub(crate) fn draw_ancestors(
    weights: &[f64],
    spec: &FilterSpec,
    step: usize,
    key: &StreamKey,
) -> Vec<usize> {
    let mut rng = key.stream(step, Purpose::Resample);
    resample(weights, spec.particles, spec.resampling, &mut rng)
}

/// `ln(N w_i)` for normalised weights: zero for a uniform ensemble.
pub(crate) fn relative_log_weights(weights: &[f64]) -> Vec<f64> {
    let ln_n = (weights.len() as f64).ln();
    weights.iter().map(|w| w.ln() + ln_n).collect()
}

pub(crate) fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
