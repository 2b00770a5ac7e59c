use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, add_lower_mul, checked_covariance, forward_substitute, mat_vec};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Linear-Gaussian Markov kernel `x_t = A x_{t-1} + ν`, `ν ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
    density: Option<KernelDensity>,
}

#[derive(Debug, Clone)]
struct KernelDensity {
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl TransitionKernel {
    pub fn new(a: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Config("transition matrix must be square and non-empty".into()));
        }
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "transition covariance",
                expected: n,
                actual: q.nrows(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("transition matrix has non-finite entries".into()));
        }
        let q = checked_covariance(&q, "transition covariance")?;
        let noise_factor = linalg::psd_factor(&q);
        let density = q.clone().cholesky().map(|ch| {
            let chol = ch.l();
            let log_norm = -0.5 * (n as f64 * LN_2PI + linalg::log_det_from_cholesky(&chol));
            KernelDensity { chol, log_norm }
        });
        Ok(Self {
            a,
            q,
            noise_factor,
            density,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn has_density(&self) -> bool {
        self.density.is_some()
    }

    /// Mean map `μ(x) = A x`.
    #[inline]
    pub fn mean_into(&self, prev: &[f64], out: &mut [f64]) {
        mat_vec(&self.a, prev, out);
    }

    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, prev: &[f64], rng: &mut R, out: &mut [f64]) {
        self.mean_into(prev, out);
        self.add_noise(rng, out);
    }

    #[inline]
    pub fn add_noise<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim();
        let mut z = [0.0_f64; 16];
        if n <= 16 {
            for zi in z.iter_mut().take(n) {
                *zi = rng.sample(StandardNormal);
            }
            self.apply_factor(&z[..n], out);
        } else {
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            self.apply_factor(&z, out);
        }
    }

    fn apply_factor(&self, z: &[f64], out: &mut [f64]) {
        if self.density.is_some() {
            add_lower_mul(&self.noise_factor, z, out);
        } else {
            // eigen factor is dense
            for (j, &zj) in z.iter().enumerate() {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += self.noise_factor[(i, j)] * zj;
                }
            }
        }
    }

    /// `log f(x | prev)`. Requires a positive definite `Q`.
    pub fn log_density(&self, x: &[f64], prev: &[f64]) -> Result<f64> {
        let dens = self.density.as_ref().ok_or_else(|| {
            Error::Config("transition density requires a positive definite covariance".into())
        })?;
        let n = self.dim();
        let mut r = vec![0.0; n];
        self.mean_into(prev, &mut r);
        for (ri, xi) in r.iter_mut().zip(x) {
            *ri = xi - *ri;
        }
        forward_substitute(&dens.chol, &mut r);
        Ok(dens.log_norm - 0.5 * r.iter().map(|v| v * v).sum::<f64>())
    }

    /// Whitening operator `L⁻¹` applied to `v` in place, for backward kernels.
    pub(crate) fn whiten(&self, v: &mut [f64]) -> Result<()> {
        let dens = self.density.as_ref().ok_or_else(|| {
            Error::Config("whitening requires a positive definite transition covariance".into())
        })?;
        forward_substitute(&dens.chol, v);
        Ok(())
    }

    pub(crate) fn log_norm(&self) -> Option<f64> {
        self.density.as_ref().map(|d| d.log_norm)
    }
}
