use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;

use super::bootstrap::run_sequential;
use super::*;
use crate::models::{GeneralisedLikelihood, StateSpaceModel, TransitionKernel};
use crate::rng::StreamKey;

/// Proposal kernel `q_t(x | x_{t-1}, y_t)`.
pub trait Proposal: Send + Sync {
    fn dim(&self) -> usize;

    fn sample_into(&self, step: usize, prev: &[f64], y: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]);

    fn log_density(&self, step: usize, x: &[f64], prev: &[f64], y: &[f64]) -> Result<f64>;
}

impl Proposal for TransitionKernel {
    fn dim(&self) -> usize {
        TransitionKernel::dim(self)
    }

    fn sample_into(&self, _step: usize, prev: &[f64], _y: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        TransitionKernel::sample_into(self, prev, rng, out);
    }

    fn log_density(&self, _step: usize, x: &[f64], prev: &[f64], _y: &[f64]) -> Result<f64> {
        TransitionKernel::log_density(self, x, prev)
    }
}

/// Generalised particle filter with an explicit proposal. Weights are
/// `G(y | x) f(x | x_{t-1}) / q(x | x_{t-1}, y)`; steps with a missing
/// observation propagate through the transition.
pub fn run_generic_pf(
    model: &StateSpaceModel,
    gl: &GeneralisedLikelihood,
    proposal: &dyn Proposal,
    spec: &FilterSpec,
    ys: &[DVector<f64>],
    key: &StreamKey,
) -> Result<FilterOutput> {
    validate_inputs(model, gl, spec, ys)?;
    check_dim("proposal", model.state_dim(), proposal.dim())?;
    if !model.transition().has_density() {
        return Err(Error::Config(
            "importance weights need a transition density (positive definite Q)".into(),
        ));
    }
    run_sequential(model, gl, spec, ys, key, Some(proposal))
}
