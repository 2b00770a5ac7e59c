//! Forward-filtering backward-sampling over stored particle ensembles.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{FilterOutput, ParticleEnsemble};
use crate::models::TransitionKernel;
use crate::rng::{Purpose, StreamKey};
use crate::stats;

pub const DEFAULT_TRAJECTORIES: usize = 1000;

/// `M` sampled trajectories of length `T`, stored row-major as `M × T × d`.
#[derive(Debug, Clone)]
pub struct SmoothedTrajectories {
    pub count: usize,
    pub steps: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    /// Particle count of the forward filter.
    pub particles: usize,
    /// Transition density evaluations performed by the backward pass.
    pub kernel_evaluations: u64,
}

impl SmoothedTrajectories {
    pub fn state(&self, m: usize, t: usize) -> &[f64] {
        let start = (m * self.steps + t) * self.dim;
        &self.data[start..start + self.dim]
    }

    fn column(&self, t: usize, j: usize) -> Vec<f64> {
        (0..self.count).map(|m| self.state(m, t)[j]).collect()
    }

    /// Per-step means, `T × d`.
    pub fn means(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.steps, self.dim, |t, j| stats::mean(&self.column(t, j)))
    }

    pub fn variances(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.steps, self.dim, |t, j| {
            let c = self.column(t, j);
            let m = stats::mean(&c);
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64
        })
    }

    /// Per-step marginal quantile, `T × d`.
    pub fn quantiles(&self, p: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.steps, self.dim, |t, j| stats::quantile(&self.column(t, j), p))
    }
}

/// Backward simulation: `x_T` is drawn from the final weighted ensemble and
/// `x_t` with probability `∝ w_t^i f(x_{t+1} | x_t^i)`.
pub fn ffbs(
    filter: &FilterOutput,
    transition: &TransitionKernel,
    trajectories: usize,
    key: &StreamKey,
) -> Result<SmoothedTrajectories> {
    let ensembles = filter.ensembles.as_deref().ok_or_else(|| {
        Error::Config("smoothing needs a filter run that stored its ensembles".into())
    })?;
    ffbs_ensembles(ensembles, transition, trajectories, key)
}

pub fn ffbs_ensembles(
    ensembles: &[ParticleEnsemble],
    transition: &TransitionKernel,
    trajectories: usize,
    key: &StreamKey,
) -> Result<SmoothedTrajectories> {
    if ensembles.is_empty() || trajectories == 0 {
        return Err(Error::Config("smoothing needs at least one step and one trajectory".into()));
    }
    let d = transition.dim();
    let n = ensembles[0].len();
    let steps = ensembles.len();
    for e in ensembles {
        crate::error::check_dim("ensemble state", d, e.dim)?;
        crate::error::check_dim("ensemble size", n, e.len())?;
    }
    let log_norm = if steps > 1 {
        transition.log_norm().ok_or_else(|| {
            Error::Config("backward kernel needs a positive definite transition covariance".into())
        })?
    } else {
        0.0
    };

    // whitened means L⁻¹ A x_t^i for every stored particle except the last step
    let whitened: Vec<Vec<f64>> = ensembles[..steps - 1]
        .par_iter()
        .map(|e| {
            let mut out = vec![0.0; n * d];
            for (x, z) in e.states.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                transition.mean_into(x, z);
                transition.whiten(z).expect("density checked above");
            }
            out
        })
        .collect();

    let evaluations = AtomicU64::new(0);
    let mut data = vec![0.0; trajectories * steps * d];
    data.par_chunks_mut(steps * d)
        .enumerate()
        .try_for_each(|(m, path)| -> Result<()> {
            let mut rng = key.particle(0, Purpose::Backward, m);
            let mut logw = vec![0.0; n];
            let mut u = vec![0.0; d];
            let last = &ensembles[steps - 1];
            let mut idx = categorical(&last.weights, &mut rng);
            path[(steps - 1) * d..].copy_from_slice(last.particle(idx));
            for t in (0..steps - 1).rev() {
                let e = &ensembles[t];
                u.copy_from_slice(&path[(t + 1) * d..(t + 2) * d]);
                transition.whiten(&mut u)?;
                for (i, (lw, z)) in logw.iter_mut().zip(whitened[t].chunks_exact(d)).enumerate() {
                    let sq: f64 = u.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                    *lw = e.log_weights[i] + log_norm - 0.5 * sq;
                }
                let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY || max.is_nan() {
                    return Err(Error::DegenerateBackwardKernel { step: e.time_index });
                }
                for lw in logw.iter_mut() {
                    *lw = (*lw - max).exp();
                }
                idx = categorical(&logw, &mut rng);
                path[t * d..(t + 1) * d].copy_from_slice(e.particle(idx));
            }
            evaluations.fetch_add(((steps - 1) * n) as u64, Ordering::Relaxed);
            Ok(())
        })?;

    Ok(SmoothedTrajectories {
        count: trajectories,
        steps,
        dim: d,
        data,
        particles: n,
        kernel_evaluations: evaluations.into_inner(),
    })
}

/// Draw from unnormalised non-negative weights.
fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}
