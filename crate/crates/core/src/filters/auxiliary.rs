use nalgebra::DVector;
use rayon::prelude::*;

use super::bootstrap::ensemble;
use super::*;
use crate::models::{GeneralisedLikelihood, StateSpaceModel, TransitionKernel};
use crate::rng::{Purpose, StreamKey};

/// `log G̃(x) = log(G(μ(x)) + c · sup G)` for every particle.
fn look_ahead_log_potentials(
    gl: &GeneralisedLikelihood,
    transition: &TransitionKernel,
    states: &[f64],
    y: &[f64],
    stabiliser: f64,
) -> Vec<f64> {
    let d = transition.dim();
    let ln_c = if stabiliser > 0.0 {
        stabiliser.ln() + gl.log_potential_sup()
    } else {
        f64::NEG_INFINITY
    };
    states
        .par_chunks(d)
        .with_min_len(256)
        .map(|x| {
            let mut mu = [0.0_f64; 16];
            let lp = if d <= 16 {
                transition.mean_into(x, &mut mu[..d]);
                gl.log_potential(&mu[..d], y)
            } else {
                let mut v = vec![0.0; d];
                transition.mean_into(x, &mut v);
                gl.log_potential(&v, y)
            };
            log_add_exp(lp, ln_c)
        })
        .collect()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// First-stage selection probabilities `∝ w_{t-1} G̃(x_{t-1})`.
pub fn apf_first_stage_probabilities(
    gl: &GeneralisedLikelihood,
    transition: &TransitionKernel,
    states: &[f64],
    weights: &[f64],
    y: &[f64],
    stabiliser: f64,
) -> Result<Vec<f64>> {
    check_dim("first-stage states", weights.len() * transition.dim(), states.len())?;
    let lg = look_ahead_log_potentials(gl, transition, states, y, stabiliser);
    let logits: Vec<f64> = lg.iter().zip(weights).map(|(l, w)| l + w.ln()).collect();
    Ok(normalise_log_weights(&logits, 0)?.0)
}

/// Auxiliary particle filter with the transition as proposal and the
/// stabilised look-ahead `G̃ = G(μ(x)) + c · sup G`. Second-stage weights are
/// carried into the next step without a further resample.
pub fn run_apf(
    model: &StateSpaceModel,
    gl: &GeneralisedLikelihood,
    spec: &FilterSpec,
    ys: &[DVector<f64>],
    key: &StreamKey,
) -> Result<FilterOutput> {
    validate_inputs(model, gl, spec, ys)?;
    let n = spec.particles;
    let d = model.state_dim();
    let dy = gl.base().obs_dim();
    let transition = model.transition();
    let mut rec = Recorder::new(spec, ys.len(), d, dy);

    let mut prev = initial_states(model, n, key);
    let mut prev_weights = uniform(n);
    let mut carried = vec![0.0; n];
    let mut next = vec![0.0; n * d];
    let mut lookahead_draw = vec![0.0; n * d];

    for (row, y) in ys.iter().enumerate() {
        let step = row + 1;
        let y_slice = y.as_slice();

        // predictive from an independent propagation of the previous cloud
        propagate(transition, &prev, None, &mut lookahead_draw, step, Purpose::Auxiliary, key);
        rec.predictive(row, gl.base(), &lookahead_draw, &prev_weights, step, key);

        if is_missing(y) {
            propagate(transition, &prev, None, &mut next, step, Purpose::Propose, key);
            let identity: Vec<usize> = (0..n).collect();
            rec.weights(effective_sample_size(&prev_weights), 0.0, false);
            rec.store(|| ensemble(d, &next, &prev_weights, &identity, step));
            rec.summarise(row, &next, Some(&prev_weights));
            std::mem::swap(&mut prev, &mut next);
            continue;
        }

        let lg = look_ahead_log_potentials(gl, transition, &prev, y_slice, spec.apf_stabiliser);
        let first: Vec<f64> = carried.iter().zip(&lg).map(|(c, l)| c + l).collect();
        let (lambda, first_increment) = normalise_log_weights(&first, step)?;
        let ancestors = draw_ancestors(&lambda, spec, step, key);
        propagate(transition, &prev, Some(&ancestors), &mut next, step, Purpose::Propose, key);

        let lp = log_potentials(gl, &next, d, y_slice);
        let second: Vec<f64> = lp.iter().zip(&ancestors).map(|(l, &k)| l - lg[k]).collect();
        let (w, second_increment) = normalise_log_weights(&second, step)?;
        let ess = effective_sample_size(&w);
        rec.store(|| ensemble(d, &next, &w, &ancestors, step));
        rec.summarise(row, &next, Some(&w));
        rec.weights(ess, first_increment + second_increment, true);

        carried = relative_log_weights(&w);
        prev_weights = w;
        std::mem::swap(&mut prev, &mut next);
    }
    Ok(rec.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianDensity, LikelihoodFamily};
    use nalgebra::{dmatrix, dvector};

    fn gaussian_gl(beta: Option<f64>) -> GeneralisedLikelihood {
        let fam = LikelihoodFamily::gaussian(dmatrix![1.0], dmatrix![1.0]).unwrap();
        match beta {
            None => GeneralisedLikelihood::standard(fam),
            Some(b) => GeneralisedLikelihood::beta(fam, b).unwrap(),
        }
    }

    #[test]
    fn first_stage_matches_hand_computation() {
        // Q = 0 so μ(x) = 2x exactly.
        let f = TransitionKernel::new(dmatrix![2.0], dmatrix![0.0]).unwrap();
        let gl = gaussian_gl(Some(0.5));
        let states = [0.0, 0.5, 2.0];
        let w = [0.2, 0.3, 0.5];
        let y = [1.0];
        let c = 0.05;
        let p = apf_first_stage_probabilities(&gl, &f, &states, &w, &y, c).unwrap();

        let g = |r: f64| (-0.5 * r * r).exp() / (2.0 * std::f64::consts::PI).sqrt();
        // Drop-constant β potential: exp((g^β − 1)/β)
        let pot = |r: f64| ((g(r).powf(0.5) - 1.0) / 0.5).exp();
        let sup = pot(0.0);
        let raw: Vec<f64> = states
            .iter()
            .zip(&w)
            .map(|(x, wi)| wi * (pot(2.0 * x - 1.0) + c * sup))
            .collect();
        let total: f64 = raw.iter().sum();
        for (pi, ri) in p.iter().zip(&raw) {
            assert!((pi - ri / total).abs() < 1e-12);
        }
    }

    #[test]
    fn stabiliser_dominates_in_flat_region() {
        let f = TransitionKernel::new(dmatrix![1.0], dmatrix![0.0]).unwrap();
        let gl = gaussian_gl(None);
        // far-off particles have vanishing potential; the floor c·sup G takes over
        let states = [1e3, 2e3, 3e3, 4e3];
        let p = apf_first_stage_probabilities(&gl, &f, &states, &[0.25; 4], &[0.0], 0.05).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn apf_tracks_bpf_on_clean_data() {
        let model = StateSpaceModel::new(
            GaussianDensity::new(dvector![0.0], dmatrix![1.0]).unwrap(),
            TransitionKernel::new(dmatrix![0.9], dmatrix![0.5]).unwrap(),
            LikelihoodFamily::gaussian(dmatrix![1.0], dmatrix![1.0]).unwrap(),
        )
        .unwrap();
        let gl = GeneralisedLikelihood::standard(model.likelihood().clone());
        let ys: Vec<_> = (0..15).map(|t| dvector![(t as f64 * 0.4).cos()]).collect();
        let spec = FilterSpec::new(20_000);
        let a = run_apf(&model, &gl, &spec, &ys, &StreamKey::new(1)).unwrap();
        let b = run_bpf(&model, &gl, &spec, &ys, &StreamKey::new(2)).unwrap();
        for t in 0..15 {
            let sd = b.variances[(t, 0)].sqrt();
            assert!((a.means[(t, 0)] - b.means[(t, 0)]).abs() < 0.1 * sd);
        }
        assert!((a.log_evidence() - b.log_evidence()).abs() < 0.1);
    }
}
