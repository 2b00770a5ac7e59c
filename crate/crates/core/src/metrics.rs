//! Evaluation metrics: NMSE, empirical coverage, predictive MedAE, ESS
//! summaries and the influence profile of a potential.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::filters::{FilterOutput, ParticleEnsemble, PredictiveSamples, BAND_LOWER, BAND_UPPER};
use crate::models::{GeneralisedLikelihood, NoiseModel};
use crate::stats;

/// Stack vectors as the rows of a matrix.
pub fn rows(vs: &[DVector<f64>]) -> DMatrix<f64> {
    let d = vs.first().map_or(0, |v| v.len());
    DMatrix::from_fn(vs.len(), d, |t, j| vs[t][j])
}

/// `Σ_t (x_tj − x̂_tj)² / Σ_t x_tj²` per dimension; NaN where the
/// denominator vanishes.
pub fn nmse(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dim("estimate rows", truth.nrows(), estimate.nrows())?;
    check_dim("estimate columns", truth.ncols(), estimate.ncols())?;
    Ok((0..truth.ncols())
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for t in 0..truth.nrows() {
                let x = truth[(t, j)];
                num += (x - estimate[(t, j)]).powi(2);
                den += x * x;
            }
            if den > 0.0 {
                num / den
            } else {
                f64::NAN
            }
        })
        .collect())
}

/// Mean over finite entries.
pub fn aggregate(per_dim: &[f64]) -> f64 {
    let finite: Vec<f64> = per_dim.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        f64::NAN
    } else {
        stats::mean(&finite)
    }
}

/// Fraction of steps whose true coordinate lies in `[lower, upper]`.
pub fn coverage_from_bands(truth: &DMatrix<f64>, lower: &DMatrix<f64>, upper: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dim("band rows", truth.nrows(), lower.nrows())?;
    check_dim("band rows", truth.nrows(), upper.nrows())?;
    check_dim("band columns", truth.ncols(), lower.ncols())?;
    let t_len = truth.nrows() as f64;
    Ok((0..truth.ncols())
        .map(|j| {
            (0..truth.nrows())
                .filter(|&t| lower[(t, j)] <= truth[(t, j)] && truth[(t, j)] <= upper[(t, j)])
                .count() as f64
                / t_len
        })
        .collect())
}

/// Coverage of the 5%–95% weighted quantile interval of stored ensembles.
pub fn empirical_coverage(truth: &DMatrix<f64>, ensembles: &[ParticleEnsemble]) -> Result<Vec<f64>> {
    check_dim("ensemble count", truth.nrows(), ensembles.len())?;
    let d = truth.ncols();
    let mut lower = DMatrix::zeros(truth.nrows(), d);
    let mut upper = DMatrix::zeros(truth.nrows(), d);
    for (t, e) in ensembles.iter().enumerate() {
        check_dim("ensemble state", d, e.dim)?;
        for j in 0..d {
            let c = e.coordinate(j);
            lower[(t, j)] = stats::weighted_quantile(&c, &e.weights, BAND_LOWER);
            upper[(t, j)] = stats::weighted_quantile(&c, &e.weights, BAND_UPPER);
        }
    }
    coverage_from_bands(truth, &lower, &upper)
}

/// Per-dimension median over steps of `|ŷ_t − y_t|`; missing observations
/// are skipped.
pub fn predictive_medae(ys: &[DVector<f64>], predictions: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dim("prediction rows", ys.len(), predictions.nrows())?;
    let dy = predictions.ncols();
    Ok((0..dy)
        .map(|j| {
            let errs: Vec<f64> = ys
                .iter()
                .enumerate()
                .filter(|(_, y)| !y[j].is_nan())
                .map(|(t, y)| (predictions[(t, j)] - y[j]).abs())
                .collect();
            if errs.is_empty() {
                f64::NAN
            } else {
                stats::median(&errs)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictiveDraw {
    /// The first stored draw at each step.
    #[default]
    Single,
    /// Average absolute error over all stored draws.
    MeanOverDraws,
}

/// MedAE from stored predictive samples.
pub fn predictive_medae_from_samples(
    ys: &[DVector<f64>],
    samples: &PredictiveSamples,
    draw: PredictiveDraw,
) -> Result<Vec<f64>> {
    if samples.draws == 0 {
        return Err(Error::Config("no predictive draws were stored".into()));
    }
    check_dim("predictive steps", ys.len(), samples.steps())?;
    let per_step = per_step_abs_errors(ys, samples, draw);
    Ok((0..samples.obs_dim)
        .map(|j| {
            let e: Vec<f64> = per_step.iter().filter_map(|r| r[j]).collect();
            if e.is_empty() {
                f64::NAN
            } else {
                stats::median(&e)
            }
        })
        .collect())
}

/// `E|ŷ − y|` per step and dimension (None for missing).
pub(crate) fn per_step_abs_errors(
    ys: &[DVector<f64>],
    samples: &PredictiveSamples,
    draw: PredictiveDraw,
) -> Vec<Vec<Option<f64>>> {
    let m = match draw {
        PredictiveDraw::Single => 1,
        PredictiveDraw::MeanOverDraws => samples.draws,
    };
    ys.iter()
        .enumerate()
        .map(|(t, y)| {
            (0..samples.obs_dim)
                .map(|j| {
                    if y[j].is_nan() {
                        return None;
                    }
                    let s: f64 = (0..m).map(|k| (samples.sample(t, k)[j] - y[j]).abs()).sum();
                    Some(s / m as f64)
                })
                .collect()
        })
        .collect()
}

/// `|∂/∂y log G(y | x)|` at `y = x + dσ` by central differences, for a
/// one-dimensional location family with identity map.
pub fn influence_profile(gl: &GeneralisedLikelihood, ds: &[f64], sigma: f64) -> Result<Vec<(f64, f64)>> {
    if gl.base().state_dim() != 1 || gl.base().obs_dim() != 1 {
        return Err(Error::Config("influence profile needs a one-dimensional likelihood".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config("influence profile needs a positive scale".into()));
    }
    let h = 1e-5 * sigma;
    let x = [0.0];
    ds.iter()
        .map(|&d| {
            let y = d * sigma;
            let up = gl.checked_log_potential(&x, &[y + h])?;
            let down = gl.checked_log_potential(&x, &[y - h])?;
            Ok((d, ((up - down) / (2.0 * h)).abs()))
        })
        .collect()
}

/// Natural residual scale of a one-dimensional noise model.
pub fn noise_scale(noise: &NoiseModel) -> Option<f64> {
    match noise {
        NoiseModel::Gaussian(g) if g.dim() == 1 => Some(g.covariance()[(0, 0)].sqrt()),
        NoiseModel::StudentT { scale, .. } if scale.len() == 1 => Some(scale[0]),
        NoiseModel::AsymmetricGaussian { dim: 1, sigma_left, sigma_right } => Some(0.5 * (sigma_left + sigma_right)),
        _ => None,
    }
}

/// Metrics of one filter on one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub nmse_per_dim: Vec<f64>,
    pub coverage_per_dim: Vec<f64>,
    pub medae_per_obs_dim: Vec<f64>,
    pub nmse: f64,
    pub coverage: f64,
    pub medae: f64,
    pub min_ess: f64,
    pub mean_ess: f64,
}

impl RunMetrics {
    pub fn new(
        nmse_per_dim: Vec<f64>,
        coverage_per_dim: Vec<f64>,
        medae_per_obs_dim: Vec<f64>,
        min_ess: f64,
        mean_ess: f64,
    ) -> Self {
        Self {
            nmse: aggregate(&nmse_per_dim),
            coverage: aggregate(&coverage_per_dim),
            medae: aggregate(&medae_per_obs_dim),
            nmse_per_dim,
            coverage_per_dim,
            medae_per_obs_dim,
            min_ess,
            mean_ess,
        }
    }

    pub fn from_filter(truth: &DMatrix<f64>, ys: &[DVector<f64>], out: &FilterOutput) -> Result<Self> {
        Ok(Self::new(
            nmse(truth, &out.means)?,
            coverage_from_bands(truth, &out.lower, &out.upper)?,
            predictive_medae(ys, &out.predictive_means)?,
            out.min_ess(),
            out.mean_ess(),
        ))
    }
}
