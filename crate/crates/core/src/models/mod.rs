//! State-space models, likelihood families and generalised likelihoods.

mod generalised;
mod likelihood;
mod transition;

pub use generalised::{ConstantMode, GeneralisedLikelihood, LossRule};
pub use likelihood::{
    log_sum_exp, GaussianNoise, LikelihoodFamily, MixtureComponent, NoiseModel, ObservationFunction,
    ObservationMap,
};
pub use transition::TransitionKernel;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, checked_covariance};

/// Gaussian over the initial state.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("prior covariance", mean.len(), cov.nrows())?;
        let cov = checked_covariance(&cov, "prior covariance")?;
        let factor = linalg::psd_factor(&cov);
        Ok(Self { mean, cov, factor })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim();
        out.copy_from_slice(self.mean.as_slice());
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for (j, zj) in z.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.factor[(i, j)] * zj;
            }
        }
    }
}

/// The `(π₀, f, g)` triple of a hidden Markov model.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    prior: GaussianDensity,
    transition: TransitionKernel,
    likelihood: LikelihoodFamily,
}

/// Matrices of a linear-Gaussian system, as consumed by the Kalman filter.
#[derive(Debug, Clone)]
pub struct LinearGaussianSystem {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(
        prior: GaussianDensity,
        transition: TransitionKernel,
        likelihood: LikelihoodFamily,
    ) -> Result<Self> {
        let n = transition.dim();
        check_dim("prior", n, prior.dim())?;
        check_dim("likelihood state", n, likelihood.state_dim())?;
        Ok(Self {
            prior,
            transition,
            likelihood,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.likelihood.obs_dim()
    }

    pub fn prior(&self) -> &GaussianDensity {
        &self.prior
    }

    pub fn transition(&self) -> &TransitionKernel {
        &self.transition
    }

    pub fn likelihood(&self) -> &LikelihoodFamily {
        &self.likelihood
    }

    /// Same dynamics with a different likelihood.
    pub fn with_likelihood(&self, likelihood: LikelihoodFamily) -> Result<Self> {
        Self::new(self.prior.clone(), self.transition.clone(), likelihood)
    }

    pub fn linear_gaussian_system(&self) -> Result<LinearGaussianSystem> {
        match (self.likelihood.map(), self.likelihood.noise()) {
            (ObservationMap::Linear(h), NoiseModel::Gaussian(noise)) => Ok(LinearGaussianSystem {
                a: self.transition.matrix().clone(),
                q: self.transition.covariance().clone(),
                h: h.clone(),
                r: noise.covariance().clone(),
            }),
            _ => Err(Error::Config(
                "exact filtering needs a linear map with gaussian noise".into(),
            )),
        }
    }
}
