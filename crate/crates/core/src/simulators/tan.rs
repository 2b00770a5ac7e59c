use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{simulate_lgssm, ContaminationSpec, SimulatedData};
use crate::error::{Error, Result};
use crate::models::{GaussianDensity, LikelihoodFamily, ObservationFunction, StateSpaceModel, TransitionKernel};
use crate::rng::StreamKey;

/// Synthetic terrain: a `peaks` surface plus sinusoidal ripples.
#[derive(Debug, Clone, PartialEq)]
pub struct DemParams {
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
    pub psi: Vec<f64>,
    /// Map scale applied to both coordinates.
    pub q: f64,
}

impl Default for DemParams {
    fn default() -> Self {
        Self {
            alpha: vec![300.0, 80.0, 60.0, 40.0, 20.0, 10.0],
            omega: vec![5.0, 10.0, 20.0, 30.0, 80.0, 150.0],
            psi: vec![4.0, 10.0, 20.0, 40.0, 90.0, 150.0],
            q: 3.0 / 2.96e4,
        }
    }
}

pub fn peaks(c: f64, d: f64) -> f64 {
    200.0
        * (3.0 * (1.0 - c).powi(2) * (-c * c - (d + 1.0).powi(2)).exp()
            - 10.0 * (c / 5.0 - c.powi(3) - d.powi(5)) * (-c * c - d * d).exp()
            - (-(c + 1.0).powi(2) - d * d).exp() / 3.0)
}

pub fn dem_elevation(a: f64, b: f64, params: &DemParams) -> f64 {
    let (qa, qb) = (params.q * a, params.q * b);
    let ripples: f64 = params
        .alpha
        .iter()
        .zip(&params.omega)
        .zip(&params.psi)
        .map(|((al, om), ps)| al * (om * qa).sin() * (ps * qb).cos())
        .sum();
    peaks(qa, qb) + ripples
}

/// `h(x) = [x₃ − DEM(x₁, x₂), ‖(x₁, x₂) − hub‖]`.
#[derive(Debug, Clone)]
pub struct TerrainObservation {
    pub dem: DemParams,
    pub hub: [f64; 2],
}

impl ObservationFunction for TerrainObservation {
    fn state_dim(&self) -> usize {
        6
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[2] - dem_elevation(x[0], x[1], &self.dem);
        out[1] = (x[0] - self.hub[0]).hypot(x[1] - self.hub[1]);
    }
}

/// Noisy terrain observation with `N(0, σ² I)` noise.
pub fn tan_observe<R: Rng + ?Sized>(x: &[f64], hub: [f64; 2], dem: &DemParams, rng: &mut R, sigma2: f64) -> [f64; 2] {
    let h = TerrainObservation { dem: dem.clone(), hub };
    let mut out = [0.0; 2];
    h.apply(x, &mut out);
    let s = sigma2.sqrt();
    for o in out.iter_mut() {
        *o += s * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TanConfig {
    pub dt: f64,
    pub steps: usize,
    pub x0: [f64; 6],
    /// Diagonal of the transition covariance.
    pub q_diag: [f64; 6],
    pub dem: DemParams,
    pub obs_variance: f64,
    pub contamination: ContaminationSpec,
}

impl Default for TanConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            steps: 2000,
            x0: [-7.5e3, 5e3, 1.1e3, 88.15, -60.53, 0.0],
            q_diag: [4.0, 4.0, 36.0, 0.0841, 0.207936, 5.29],
            dem: DemParams::default(),
            obs_variance: 400.0,
            contamination: ContaminationSpec::AdditiveStudentT { p: 0.05, dof: 1.0, scale: 20.0 },
        }
    }
}

impl TanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.steps == 0 || !(self.obs_variance > 0.0) {
            return Err(Error::Config("TAN needs dt > 0, steps ≥ 1 and positive noise variance".into()));
        }
        self.contamination.validate()
    }

    /// Horizontal position of the reference hub.
    pub fn hub(&self) -> [f64; 2] {
        [self.x0[0], self.x0[1]]
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::identity(6, 6);
        for i in 0..3 {
            a[(i, i + 3)] = self.dt;
        }
        a
    }

    pub fn transition_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.q_diag))
    }

    pub fn transition(&self) -> Result<TransitionKernel> {
        TransitionKernel::new(self.transition_matrix(), self.transition_covariance())
    }

    pub fn observation(&self) -> TerrainObservation {
        TerrainObservation { dem: self.dem.clone(), hub: self.hub() }
    }

    pub fn likelihood(&self) -> Result<LikelihoodFamily> {
        LikelihoodFamily::nonlinear_gaussian(Arc::new(self.observation()), DMatrix::identity(2, 2) * self.obs_variance)
    }

    pub fn prior(&self) -> Result<GaussianDensity> {
        GaussianDensity::new(DVector::from_column_slice(&self.x0), self.transition_covariance())
    }

    pub fn model(&self, likelihood: LikelihoodFamily) -> Result<StateSpaceModel> {
        StateSpaceModel::new(self.prior()?, self.transition()?, likelihood)
    }

    pub fn simulate(&self, key: &StreamKey) -> Result<SimulatedData> {
        self.validate()?;
        simulate_lgssm(&self.transition()?, &self.x0, &self.likelihood()?, self.steps, key)
    }
}
