//! Benchmark data generators.

mod matern;
mod tan;
mod wiener;

pub use matern::{build_matern52, matern52_kernel, Matern52StateSpace};
pub use tan::{dem_elevation, peaks, tan_observe, DemParams, TanConfig, TerrainObservation};
pub use wiener::{WienerNoise, WienerVelocityConfig};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal, StudentT};

use crate::error::{check_dim, Error, Result};
use crate::models::{LikelihoodFamily, TransitionKernel};
use crate::rng::{Purpose, StreamKey};

/// Simulated states with their noiseless and noisy observations.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    /// `x_1..x_T`.
    pub states: Vec<DVector<f64>>,
    /// `h(x_t)`.
    pub signal: Vec<DVector<f64>>,
    /// `h(x_t) + ε_t` before contamination.
    pub clean_obs: Vec<DVector<f64>>,
}

impl SimulatedData {
    pub fn steps(&self) -> usize {
        self.states.len()
    }
}

/// Roll the transition forward from `x0` for `steps` steps.
pub fn simulate_states(
    transition: &TransitionKernel,
    x0: &[f64],
    steps: usize,
    key: &StreamKey,
) -> Result<Vec<DVector<f64>>> {
    check_dim("initial state", transition.dim(), x0.len())?;
    let mut prev = x0.to_vec();
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let mut rng = key.stream(t, Purpose::Simulate);
        let mut next = vec![0.0; prev.len()];
        transition.sample_into(&prev, &mut rng, &mut next);
        out.push(DVector::from_column_slice(&next));
        prev = next;
    }
    Ok(out)
}

/// Draw one observation per state. Returns `(signal, observations)`.
pub fn observe(
    likelihood: &LikelihoodFamily,
    states: &[DVector<f64>],
    key: &StreamKey,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let dy = likelihood.obs_dim();
    let mut signal = Vec::with_capacity(states.len());
    let mut obs = Vec::with_capacity(states.len());
    for (row, x) in states.iter().enumerate() {
        check_dim("simulated state", likelihood.state_dim(), x.len())?;
        let mut rng = key.stream(row + 1, Purpose::Observe);
        let mut s = vec![0.0; dy];
        likelihood.map().apply(x.as_slice(), &mut s);
        let mut y = vec![0.0; dy];
        likelihood.sample_into(x.as_slice(), &mut rng, &mut y);
        signal.push(DVector::from_vec(s));
        obs.push(DVector::from_vec(y));
    }
    Ok((signal, obs))
}

pub fn simulate_lgssm(
    transition: &TransitionKernel,
    x0: &[f64],
    likelihood: &LikelihoodFamily,
    steps: usize,
    key: &StreamKey,
) -> Result<SimulatedData> {
    let states = simulate_states(transition, x0, steps, key)?;
    let (signal, clean_obs) = observe(likelihood, &states, key)?;
    Ok(SimulatedData { states, signal, clean_obs })
}

/// Outlier process applied to whole observation vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContaminationSpec {
    None,
    /// Adds `N(0, scale²)` to every coordinate.
    AdditiveGaussian { p: f64, scale: f64 },
    /// Adds `scale · t_ν` to every coordinate.
    AdditiveStudentT { p: f64, dof: f64, scale: f64 },
    /// Multiplies the noise `y − h(x)` by `ξ ~ Exp` with mean `scale`.
    MultiplicativeExponential { p: f64, scale: f64 },
}

impl ContaminationSpec {
    pub fn probability(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::AdditiveGaussian { p, .. }
            | Self::AdditiveStudentT { p, .. }
            | Self::MultiplicativeExponential { p, .. } => p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.probability();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("contamination probability {p} outside [0, 1]")));
        }
        let ok = match *self {
            Self::None => true,
            Self::AdditiveGaussian { scale, .. } | Self::MultiplicativeExponential { scale, .. } => {
                scale > 0.0 && scale.is_finite()
            }
            Self::AdditiveStudentT { dof, scale, .. } => scale > 0.0 && dof > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid contamination parameters {self:?}")))
        }
    }
}

/// Corrupt each observation vector with probability `p`. One Bernoulli flag
/// is drawn per time step.
pub fn contaminate(
    signal: &[DVector<f64>],
    clean_obs: &[DVector<f64>],
    spec: &ContaminationSpec,
    key: &StreamKey,
) -> Result<(Vec<DVector<f64>>, Vec<bool>)> {
    spec.validate()?;
    check_dim("signal length", clean_obs.len(), signal.len())?;
    let mut obs = Vec::with_capacity(clean_obs.len());
    let mut flags = Vec::with_capacity(clean_obs.len());
    for (row, (s, y)) in signal.iter().zip(clean_obs).enumerate() {
        let mut rng = key.stream(row + 1, Purpose::Contaminate);
        let hit = spec.probability() > 0.0 && rng.random::<f64>() < spec.probability();
        let mut out = y.clone();
        if hit {
            corrupt(spec, s, &mut out, &mut rng);
        }
        obs.push(out);
        flags.push(hit);
    }
    Ok((obs, flags))
}

fn corrupt<R: Rng + ?Sized>(spec: &ContaminationSpec, signal: &DVector<f64>, y: &mut DVector<f64>, rng: &mut R) {
    match *spec {
        ContaminationSpec::None => {}
        ContaminationSpec::AdditiveGaussian { scale, .. } => {
            for v in y.iter_mut() {
                *v += scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        ContaminationSpec::AdditiveStudentT { dof, scale, .. } => {
            let t = StudentT::new(dof).expect("validated");
            for v in y.iter_mut() {
                *v += scale * t.sample(rng);
            }
        }
        ContaminationSpec::MultiplicativeExponential { scale, .. } => {
            let xi = Exp::new(1.0 / scale).expect("validated").sample(rng);
            for (v, s) in y.iter_mut().zip(signal.iter()) {
                *v = s + xi * (*v - s);
            }
        }
    }
}
