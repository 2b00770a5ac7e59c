//! Exact filtering and smoothing for time-invariant linear-Gaussian models.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{checked_covariance, symmetrise};
use crate::models::LinearGaussianSystem;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("belief covariance", mean.len(), cov.nrows())?;
        let cov = checked_covariance(&cov, "belief covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

#[derive(Debug, Clone)]
pub struct KalmanOutput {
    /// `p(x_t | y_{1:t-1})` for `t = 1..=T`.
    pub predicted: Vec<GaussianBelief>,
    /// `p(x_t | y_{1:t})`.
    pub filtered: Vec<GaussianBelief>,
    /// `log p(y_t | y_{1:t-1})`, zero for missing observations.
    pub log_likelihoods: Vec<f64>,
    /// Predictive observation means `H m_{t|t-1}`.
    pub predictive_means: Vec<DVector<f64>>,
    pub predictive_covs: Vec<DMatrix<f64>>,
}

impl KalmanOutput {
    pub fn log_evidence(&self) -> f64 {
        self.log_likelihoods.iter().sum()
    }

    pub fn means(&self) -> DMatrix<f64> {
        stack(&self.filtered, |b| b.mean.clone())
    }

    pub fn variances(&self) -> DMatrix<f64> {
        stack(&self.filtered, |b| b.variances())
    }
}

pub(crate) fn stack(beliefs: &[GaussianBelief], f: impl Fn(&GaussianBelief) -> DVector<f64>) -> DMatrix<f64> {
    let d = beliefs.first().map_or(0, |b| b.mean.len());
    let mut m = DMatrix::zeros(beliefs.len(), d);
    for (t, b) in beliefs.iter().enumerate() {
        m.row_mut(t).copy_from(&f(b).transpose());
    }
    m
}

/// Kalman filter. `prior` describes `x_0`; each observation follows a
/// transition. Observations containing NaN skip the update.
pub fn kalman_filter(
    sys: &LinearGaussianSystem,
    prior: &GaussianBelief,
    ys: &[DVector<f64>],
) -> Result<KalmanOutput> {
    let n = sys.a.nrows();
    let m = sys.h.nrows();
    check_dim("transition matrix columns", n, sys.a.ncols())?;
    check_dim("transition covariance", n, sys.q.nrows())?;
    check_dim("observation matrix columns", n, sys.h.ncols())?;
    check_dim("observation covariance", m, sys.r.nrows())?;
    check_dim("prior", n, prior.mean.len())?;
    if sys.r.clone().cholesky().is_none() {
        return Err(Error::Config("observation covariance must be positive definite".into()));
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let mut out = KalmanOutput {
        predicted: Vec::with_capacity(ys.len()),
        filtered: Vec::with_capacity(ys.len()),
        log_likelihoods: Vec::with_capacity(ys.len()),
        predictive_means: Vec::with_capacity(ys.len()),
        predictive_covs: Vec::with_capacity(ys.len()),
    };
    let mut mean = prior.mean.clone();
    let mut cov = prior.cov.clone();

    for (row, y) in ys.iter().enumerate() {
        let step = row + 1;
        check_dim("observation", m, y.len())?;
        mean = &sys.a * &mean;
        cov = symmetrise(&(&sys.a * &cov * sys.a.transpose() + &sys.q));
        out.predicted.push(GaussianBelief { mean: mean.clone(), cov: cov.clone() });

        let y_hat = &sys.h * &mean;
        let s = symmetrise(&(&sys.h * &cov * sys.h.transpose() + &sys.r));
        out.predictive_means.push(y_hat.clone());
        out.predictive_covs.push(s.clone());

        if y.iter().any(|v| v.is_nan()) {
            out.log_likelihoods.push(0.0);
            out.filtered.push(GaussianBelief { mean: mean.clone(), cov: cov.clone() });
            continue;
        }

        let chol = s.clone().cholesky().ok_or(Error::Numerical {
            step,
            message: "innovation covariance is not positive definite".into(),
        })?;
        let innov = y - &y_hat;
        let solved = chol.solve(&innov);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        out.log_likelihoods
            .push(-0.5 * (m as f64 * LN_2PI + log_det + innov.dot(&solved)));

        // K = P Hᵀ S⁻¹
        let k = chol.solve(&(&sys.h * &cov)).transpose();
        mean += &k * innov;
        let i_kh = &eye - &k * &sys.h;
        cov = symmetrise(&(&i_kh * &cov * i_kh.transpose() + &k * &sys.r * k.transpose()));
        out.filtered.push(GaussianBelief { mean: mean.clone(), cov: cov.clone() });
    }
    Ok(out)
}

/// Rauch-Tung-Striebel smoother over a [`kalman_filter`] run.
pub fn rts_smoother(out: &KalmanOutput, a: &DMatrix<f64>) -> Result<Vec<GaussianBelief>> {
    let t_len = out.filtered.len();
    if t_len == 0 {
        return Ok(Vec::new());
    }
    check_dim("smoother transition", out.filtered[0].mean.len(), a.nrows())?;
    let mut smoothed = out.filtered.clone();
    for t in (0..t_len - 1).rev() {
        let filt = &out.filtered[t];
        let pred = &out.predicted[t + 1];
        // G = P_t Aᵀ P_{t+1|t}⁻¹, via a symmetric solve
        let cross = &filt.cov * a.transpose();
        let gain = match pred.cov.clone().cholesky() {
            Some(ch) => ch.solve(&cross.transpose()).transpose(),
            None => {
                let pinv = pred.cov.clone().pseudo_inverse(1e-12).map_err(|e| Error::Numerical {
                    step: t + 1,
                    message: format!("smoother gain: {e}"),
                })?;
                &cross * pinv
            }
        };
        let next = &smoothed[t + 1];
        let mean = &filt.mean + &gain * (&next.mean - &pred.mean);
        let cov = symmetrise(&(&filt.cov + &gain * (&next.cov - &pred.cov) * gain.transpose()));
        smoothed[t] = GaussianBelief { mean, cov };
    }
    Ok(smoothed)
}
