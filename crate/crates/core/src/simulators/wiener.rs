use nalgebra::{dmatrix, DMatrix, DVector};

use super::{simulate_lgssm, ContaminationSpec, SimulatedData};
use crate::error::{Error, Result};
use crate::models::{GaussianDensity, LikelihoodFamily, ObservationMap, StateSpaceModel, TransitionKernel};
use crate::rng::StreamKey;

/// Observation noise of the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WienerNoise {
    /// `N(0, σ² I)`.
    Gaussian { variance: f64 },
    /// Two-piece normal with scales `σ_L` below zero and `σ_R` above.
    Asymmetric { sigma_left: f64, sigma_right: f64 },
}

/// Planar constant-velocity target, positions observed.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerVelocityConfig {
    pub dt: f64,
    pub steps: usize,
    pub x0: [f64; 4],
    pub noise: WienerNoise,
    pub contamination: ContaminationSpec,
}

impl Default for WienerVelocityConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            steps: 1000,
            x0: [140.0, 140.0, 50.0, 0.0],
            noise: WienerNoise::Gaussian { variance: 1.0 },
            contamination: ContaminationSpec::AdditiveGaussian { p: 0.1, scale: 100.0 },
        }
    }
}

impl WienerVelocityConfig {
    pub fn asymmetric() -> Self {
        Self {
            noise: WienerNoise::Asymmetric { sigma_left: 1.0, sigma_right: 10.0 },
            contamination: ContaminationSpec::MultiplicativeExponential { p: 0.1, scale: 1000.0 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.steps == 0 {
            return Err(Error::Config("wiener velocity needs dt > 0 and steps ≥ 1".into()));
        }
        self.contamination.validate()
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let dt = self.dt;
        dmatrix![
            1.0, 0.0, dt, 0.0;
            0.0, 1.0, 0.0, dt;
            0.0, 0.0, 1.0, 0.0;
            0.0, 0.0, 0.0, 1.0
        ]
    }

    pub fn transition_covariance(&self) -> DMatrix<f64> {
        let dt = self.dt;
        let (a, b, c) = (dt.powi(3) / 3.0, dt * dt / 2.0, dt);
        dmatrix![
            a, 0.0, b, 0.0;
            0.0, a, 0.0, b;
            b, 0.0, c, 0.0;
            0.0, b, 0.0, c
        ]
    }

    pub fn observation_matrix(&self) -> DMatrix<f64> {
        dmatrix![
            1.0, 0.0, 0.0, 0.0;
            0.0, 1.0, 0.0, 0.0
        ]
    }

    pub fn transition(&self) -> Result<TransitionKernel> {
        TransitionKernel::new(self.transition_matrix(), self.transition_covariance())
    }

    /// Likelihood matching the simulator noise.
    pub fn likelihood(&self) -> Result<LikelihoodFamily> {
        match self.noise {
            WienerNoise::Gaussian { variance } => {
                LikelihoodFamily::gaussian(self.observation_matrix(), DMatrix::identity(2, 2) * variance)
            }
            WienerNoise::Asymmetric { sigma_left, sigma_right } => LikelihoodFamily::asymmetric_gaussian(
                ObservationMap::Linear(self.observation_matrix()),
                sigma_left,
                sigma_right,
            ),
        }
    }

    /// Filter prior `N(x0, Q)`.
    pub fn prior(&self) -> Result<GaussianDensity> {
        GaussianDensity::new(DVector::from_column_slice(&self.x0), self.transition_covariance())
    }

    /// State-space model used by the filters, with the given likelihood.
    pub fn model(&self, likelihood: LikelihoodFamily) -> Result<StateSpaceModel> {
        StateSpaceModel::new(self.prior()?, self.transition()?, likelihood)
    }

    pub fn simulate(&self, key: &StreamKey) -> Result<SimulatedData> {
        self.validate()?;
        simulate_lgssm(&self.transition()?, &self.x0, &self.likelihood()?, self.steps, key)
    }
}
