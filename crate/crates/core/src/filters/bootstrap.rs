use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::*;
use crate::models::{GeneralisedLikelihood, StateSpaceModel};
use crate::rng::{Purpose, StreamKey};

/// Bootstrap particle filter: propose from the transition, weight by the
/// generalised potential.
pub fn run_bpf(
    model: &StateSpaceModel,
    gl: &GeneralisedLikelihood,
    spec: &FilterSpec,
    ys: &[DVector<f64>],
    key: &StreamKey,
) -> Result<FilterOutput> {
    validate_inputs(model, gl, spec, ys)?;
    run_sequential(model, gl, spec, ys, key, None)
}

/// Shared loop of the bootstrap and generic filters. With `proposal = None`
/// the transition is the proposal and no density ratio is formed.
pub(super) fn run_sequential(
    model: &StateSpaceModel,
    gl: &GeneralisedLikelihood,
    spec: &FilterSpec,
    ys: &[DVector<f64>],
    key: &StreamKey,
    proposal: Option<&dyn Proposal>,
) -> Result<FilterOutput> {
    let n = spec.particles;
    let d = model.state_dim();
    let dy = gl.base().obs_dim();
    let transition = model.transition();
    let mut rec = Recorder::new(spec, ys.len(), d, dy);

    let mut prev = initial_states(model, n, key);
    let mut prev_weights = uniform(n);
    // ln(N w_{t-1})
    let mut carried = vec![0.0; n];
    let mut parents: Vec<usize> = (0..n).collect();
    let mut next = vec![0.0; n * d];

    for (row, y) in ys.iter().enumerate() {
        let step = row + 1;
        let missing = is_missing(y);
        let y = y.as_slice();

        let log_ratio = match (proposal, missing) {
            (Some(q), false) => Some(propose(q, transition, &prev, &mut next, y, step, key)?),
            _ => {
                propagate(transition, &prev, None, &mut next, step, Purpose::Propose, key);
                None
            }
        };

        rec.predictive(row, gl.base(), &next, &prev_weights, step, key);

        if missing {
            rec.weights(effective_sample_size(&prev_weights), 0.0, false);
            rec.store(|| ensemble(d, &next, &prev_weights, &parents, step));
            rec.summarise(row, &next, Some(&prev_weights));
            std::mem::swap(&mut prev, &mut next);
            parents = (0..n).collect();
            continue;
        }

        let lp = log_potentials(gl, &next, d, y);
        let logw: Vec<f64> = match &log_ratio {
            None => carried.iter().zip(&lp).map(|(c, l)| c + l).collect(),
            Some(r) => carried.iter().zip(&lp).zip(r).map(|((c, l), q)| c + l + q).collect(),
        };
        let (w, increment) = normalise_log_weights(&logw, step)?;
        let ess = effective_sample_size(&w);
        rec.store(|| ensemble(d, &next, &w, &parents, step));

        if should_resample(spec, ess) {
            let ancestors = draw_ancestors(&w, spec, step, key);
            prev = gather(&next, d, &ancestors);
            rec.summarise(row, &prev, None);
            carried.iter_mut().for_each(|c| *c = 0.0);
            prev_weights = uniform(n);
            parents = ancestors;
            rec.weights(ess, increment, true);
        } else {
            rec.summarise(row, &next, Some(&w));
            carried = relative_log_weights(&w);
            std::mem::swap(&mut prev, &mut next);
            prev_weights = w;
            parents = (0..n).collect();
            rec.weights(ess, increment, false);
        }
    }
    Ok(rec.finish())
}

/// Sample from `q` into `next`; returns `log f − log q` per particle.
fn propose(
    q: &dyn Proposal,
    transition: &crate::models::TransitionKernel,
    prev: &[f64],
    next: &mut [f64],
    y: &[f64],
    step: usize,
    key: &StreamKey,
) -> Result<Vec<f64>> {
    let d = transition.dim();
    next.par_chunks_mut(d)
        .zip(prev.par_chunks(d))
        .with_min_len(256)
        .enumerate()
        .map(|(i, (out, x))| {
            let mut rng: ChaCha8Rng = key.particle(step, Purpose::Propose, i);
            q.sample_into(step, x, y, &mut rng, out);
            let lf = transition.log_density(out, x)?;
            let lq = q.log_density(step, out, x, y)?;
            // exact zero when q coincides with f
            Ok(if lf == lq { 0.0 } else { lf - lq })
        })
        .collect()
}

pub(super) fn ensemble(d: usize, states: &[f64], w: &[f64], parents: &[usize], step: usize) -> ParticleEnsemble {
    ParticleEnsemble {
        dim: d,
        states: states.to_vec(),
        log_weights: w.iter().map(|v| v.ln()).collect(),
        weights: w.to_vec(),
        ancestors: parents.to_vec(),
        time_index: step,
    }
}
