use nalgebra::{dmatrix, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{checked_covariance, symmetrise};
use crate::models::{GaussianDensity, LikelihoodFamily, StateSpaceModel, TransitionKernel};

/// `k(τ) = σ²(1 + √5τ/l + 5τ²/(3l²)) exp(−√5τ/l)`.
pub fn matern52_kernel(tau: f64, lengthscale: f64, variance: f64) -> f64 {
    let r = 5f64.sqrt() * tau.abs() / lengthscale;
    variance * (1.0 + r + r * r / 3.0) * (-r).exp()
}

/// Discretised state-space form of a Matérn-5/2 Gaussian process observed
/// through its first coordinate.
#[derive(Debug, Clone)]
pub struct Matern52StateSpace {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub dt: f64,
    pub obs_variance: f64,
    pub lambda: f64,
    pub f: DMatrix<f64>,
    pub p_inf: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

pub fn build_matern52(lengthscale: f64, signal_variance: f64, dt: f64, obs_variance: f64) -> Result<Matern52StateSpace> {
    for (name, v) in [
        ("lengthscale", lengthscale),
        ("signal variance", signal_variance),
        ("step size", dt),
        ("observation variance", obs_variance),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("Matérn {name} must be positive, got {v}")));
        }
    }
    let lambda = 5f64.sqrt() / lengthscale;
    let s2 = signal_variance;
    let kappa = s2 * lambda * lambda / 3.0;
    let f = dmatrix![
        0.0, 1.0, 0.0;
        0.0, 0.0, 1.0;
        -lambda.powi(3), -3.0 * lambda * lambda, -3.0 * lambda
    ];
    let p_inf = dmatrix![
        s2, 0.0, -kappa;
        0.0, kappa, 0.0;
        -kappa, 0.0, s2 * lambda.powi(4)
    ];
    let a = (&f * dt).exp();
    let q = &p_inf - symmetrise(&(&a * &p_inf * a.transpose()));
    let q = checked_covariance(&q, "Matérn transition covariance")?;
    Ok(Matern52StateSpace {
        lengthscale,
        signal_variance,
        dt,
        obs_variance,
        lambda,
        f,
        p_inf,
        a,
        q,
        h: dmatrix![1.0, 0.0, 0.0],
    })
}

impl Matern52StateSpace {
    /// White-noise spectral density of the driving SDE.
    pub fn spectral_density(&self) -> f64 {
        16.0 / 3.0 * self.signal_variance * self.lambda.powi(5)
    }

    /// `‖A P∞ Aᵀ + Q − P∞‖_F`.
    pub fn stationarity_residual(&self) -> f64 {
        let apa = symmetrise(&(&self.a * &self.p_inf * self.a.transpose()));
        (apa + &self.q - &self.p_inf).norm()
    }

    pub fn transition(&self) -> Result<TransitionKernel> {
        TransitionKernel::new(self.a.clone(), self.q.clone())
    }

    pub fn likelihood(&self) -> Result<LikelihoodFamily> {
        LikelihoodFamily::gaussian(self.h.clone(), dmatrix![self.obs_variance])
    }

    /// Stationary prior `N(0, P∞)`.
    pub fn prior(&self) -> Result<GaussianDensity> {
        GaussianDensity::new(DVector::zeros(3), self.p_inf.clone())
    }

    pub fn model(&self, likelihood: LikelihoodFamily) -> Result<StateSpaceModel> {
        StateSpaceModel::new(self.prior()?, self.transition()?, likelihood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `F` has the triple eigenvalue `−λ`, so `N = F + λI` is nilpotent and
    /// `exp(tF) = e^{−λt}(I + tN + t²N²/2)` exactly.
    fn nilpotent_exp(f: &DMatrix<f64>, lambda: f64, t: f64) -> DMatrix<f64> {
        let eye = DMatrix::<f64>::identity(3, 3);
        let n = f + &eye * lambda;
        assert!((&n * &n * &n).norm() <= 1e-9 * n.norm().powi(3));
        (&eye + &n * t + &n * &n * (t * t / 2.0)) * (-lambda * t).exp()
    }

    /// Plain Taylor series, for well-scaled arguments only.
    fn series_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..60 {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn transition_matches_exact_exponential() {
        for (l, dt) in [(0.03, 0.005), (1.0, 0.1), (0.5, 0.01)] {
            let m = build_matern52(l, 32.0, dt, 1.0).unwrap();
            let oracle = nilpotent_exp(&m.f, m.lambda, dt);
            let rel = (&m.a - &oracle).norm() / oracle.norm();
            assert!(rel <= 1e-12, "l={l} rel={rel:e}");
        }
        // series agrees where it converges without cancellation
        let m = build_matern52(2.0, 1.0, 0.1, 1.0).unwrap();
        let rel = (&m.a - series_exp(&(&m.f * 0.1))).norm() / m.a.norm();
        assert!(rel <= 1e-13);
    }

    #[test]
    fn stationary_covariance_solves_lyapunov() {
        let m = build_matern52(0.03, 32.0, 0.005, 1.0).unwrap();
        let mut lyap = &m.f * &m.p_inf + &m.p_inf * m.f.transpose();
        lyap[(2, 2)] += m.spectral_density();
        assert!(lyap.norm() <= 1e-9 * m.p_inf.norm());
        assert!(m.stationarity_residual() <= 1e-8);
        assert_eq!(m.p_inf[(0, 0)], 32.0);
    }

    #[test]
    fn small_steps_shrink_to_identity() {
        let base = build_matern52(1.0, 2.0, 1e-3, 1.0).unwrap();
        let half = build_matern52(1.0, 2.0, 5e-4, 1.0).unwrap();
        let eye = DMatrix::<f64>::identity(3, 3);
        let (da, dh) = ((&base.a - &eye).norm(), (&half.a - &eye).norm());
        assert!((da / dh - 2.0).abs() < 0.01);
        let ratio = base.q.norm() / half.q.norm();
        assert!((ratio - 2.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn kernel_at_zero_is_the_variance() {
        assert_eq!(matern52_kernel(0.0, 0.3, 5.0), 5.0);
        assert!(matern52_kernel(1.0, 0.3, 5.0) < matern52_kernel(0.1, 0.3, 5.0));
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(build_matern52(0.0, 1.0, 0.1, 1.0).is_err());
        assert!(build_matern52(1.0, 1.0, -0.1, 1.0).is_err());
    }
}
