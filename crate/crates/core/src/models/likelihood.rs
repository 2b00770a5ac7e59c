use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, add_lower_mul, checked_covariance, forward_substitute, mat_vec};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const STACK: usize = 8;

/// Deterministic state-to-observation map `h(x)`.
pub trait ObservationFunction: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub enum ObservationMap {
    Linear(DMatrix<f64>),
    Nonlinear(Arc<dyn ObservationFunction>),
}

impl ObservationMap {
    pub fn state_dim(&self) -> usize {
        match self {
            Self::Linear(h) => h.ncols(),
            Self::Nonlinear(f) => f.state_dim(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Self::Linear(h) => h.nrows(),
            Self::Nonlinear(f) => f.obs_dim(),
        }
    }

    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Linear(h) => mat_vec(h, x, out),
            Self::Nonlinear(f) => f.apply(x, out),
        }
    }
}

/// Gaussian noise `N(0, Σ)`. Σ may be singular for simulation; densities then
/// evaluate to `-∞`.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    chol: Option<(DMatrix<f64>, f64)>,
}

impl GaussianNoise {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let cov = checked_covariance(&cov, "observation covariance")?;
        let factor = linalg::psd_factor(&cov);
        let chol = cov.clone().cholesky().map(|ch| {
            let l = ch.l();
            let log_norm = -0.5 * (cov.nrows() as f64 * LN_2PI + linalg::log_det_from_cholesky(&l));
            (l, log_norm)
        });
        Ok(Self { cov, factor, chol })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * variance)
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_degenerate(&self) -> bool {
        self.chol.is_none()
    }

    fn log_norm(&self) -> Option<f64> {
        self.chol.as_ref().map(|c| c.1)
    }

    fn log_density_shifted(&self, r: &[f64], offset: Option<&DVector<f64>>) -> f64 {
        let Some((l, log_norm)) = &self.chol else {
            return f64::NEG_INFINITY;
        };
        with_buffer(r.len(), |w| {
            w.copy_from_slice(r);
            if let Some(m) = offset {
                for (wi, mi) in w.iter_mut().zip(m.iter()) {
                    *wi -= mi;
                }
            }
            forward_substitute(l, w);
            log_norm - 0.5 * w.iter().map(|v| v * v).sum::<f64>()
        })
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.chol.is_some() {
            add_lower_mul(&self.factor, &z, out);
        } else {
            for (j, zj) in z.iter().enumerate() {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += self.factor[(i, j)] * zj;
                }
            }
        }
    }

    fn power_integral(&self, beta: f64) -> Result<f64> {
        let log_norm = self
            .log_norm()
            .ok_or(Error::NotClosedForm("degenerate gaussian"))?;
        // log_norm = -(d ln 2π + ln|Σ|)/2
        let d = self.dim() as f64;
        Ok((beta * log_norm - 0.5 * d * (beta + 1.0).ln()).exp())
    }
}

#[derive(Debug, Clone)]
pub struct MixtureComponent {
    pub weight: f64,
    pub offset: DVector<f64>,
    pub noise: GaussianNoise,
}

/// Additive observation noise model `y = h(x) + ε`.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    Gaussian(GaussianNoise),
    /// Independent Student's t per coordinate.
    StudentT { scale: Vec<f64>, dof: f64 },
    /// Independent two-piece normal per coordinate, continuous at zero:
    /// `p(r) = 2 / (√(2π) (σ_L + σ_R)) · exp(-r² / 2σ²)` with σ = σ_L for r < 0
    /// and σ = σ_R for r ≥ 0.
    AsymmetricGaussian {
        dim: usize,
        sigma_left: f64,
        sigma_right: f64,
    },
    GaussianMixture(Vec<MixtureComponent>),
}

impl NoiseModel {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::StudentT { scale, .. } => scale.len(),
            Self::AsymmetricGaussian { dim, .. } => *dim,
            Self::GaussianMixture(c) => c[0].noise.dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian(_) => "gaussian",
            Self::StudentT { .. } => "student-t",
            Self::AsymmetricGaussian { .. } => "asymmetric-gaussian",
            Self::GaussianMixture(_) => "gaussian-mixture",
        }
    }

    /// Log density of the residual `r = y - h(x)`.
    #[inline]
    pub fn log_density(&self, r: &[f64]) -> f64 {
        match self {
            Self::Gaussian(g) => g.log_density_shifted(r, None),
            Self::StudentT { scale, dof } => {
                let nu = *dof;
                let c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
                r.iter()
                    .zip(scale)
                    .map(|(ri, s)| {
                        let z = ri / s;
                        c - s.ln() - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
                    })
                    .sum()
            }
            Self::AsymmetricGaussian {
                sigma_left,
                sigma_right,
                ..
            } => {
                let log_c = std::f64::consts::LN_2 - 0.5 * LN_2PI - (sigma_left + sigma_right).ln();
                r.iter()
                    .map(|&ri| {
                        let s = if ri < 0.0 { *sigma_left } else { *sigma_right };
                        log_c - 0.5 * (ri / s) * (ri / s)
                    })
                    .sum()
            }
            Self::GaussianMixture(comps) => {
                let mut terms = [0.0_f64; STACK];
                let mut heap;
                let terms: &mut [f64] = if comps.len() <= STACK {
                    &mut terms[..comps.len()]
                } else {
                    heap = vec![0.0; comps.len()];
                    &mut heap
                };
                for (t, c) in terms.iter_mut().zip(comps) {
                    *t = c.weight.ln() + c.noise.log_density_shifted(r, Some(&c.offset));
                }
                log_sum_exp(terms)
            }
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::Gaussian(g) => g.sample_into(rng, out),
            Self::StudentT { scale, dof } => {
                let t = StudentT::new(*dof).expect("validated degrees of freedom");
                for (o, s) in out.iter_mut().zip(scale) {
                    *o = s * t.sample(rng);
                }
            }
            Self::AsymmetricGaussian {
                sigma_left,
                sigma_right,
                ..
            } => {
                let p_left = sigma_left / (sigma_left + sigma_right);
                for o in out.iter_mut() {
                    let z: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                    *o = if rng.random::<f64>() < p_left {
                        -sigma_left * z
                    } else {
                        sigma_right * z
                    };
                }
            }
            Self::GaussianMixture(comps) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = comps.len() - 1;
                for (k, c) in comps.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                let c = &comps[chosen];
                c.noise.sample_into(rng, out);
                for (o, m) in out.iter_mut().zip(c.offset.iter()) {
                    *o += m;
                }
            }
        }
    }

    /// Offset used for point predictions: the noise mean where it exists,
    /// the location otherwise (Student's t with ν ≤ 1).
    pub fn center_into(&self, out: &mut [f64]) {
        match self {
            Self::Gaussian(_) | Self::StudentT { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            Self::AsymmetricGaussian {
                sigma_left,
                sigma_right,
                ..
            } => {
                let m = (2.0 / PI).sqrt() * (sigma_right - sigma_left);
                out.iter_mut().for_each(|o| *o = m);
            }
            Self::GaussianMixture(comps) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for c in comps {
                    for (o, m) in out.iter_mut().zip(c.offset.iter()) {
                        *o += c.weight * m;
                    }
                }
            }
        }
    }

    /// Log density at the mode. For mixtures this is the best component offset.
    pub fn log_density_max(&self) -> f64 {
        match self {
            Self::GaussianMixture(comps) => comps
                .iter()
                .map(|c| self.log_density(c.offset.as_slice()))
                .fold(f64::NEG_INFINITY, f64::max),
            _ => self.log_density(&vec![0.0; self.dim()]),
        }
    }

    /// `∫ p(r)^{β+1} dr`.
    pub fn power_integral(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("power integral needs β > 0, got {beta}")));
        }
        match self {
            Self::Gaussian(g) => g.power_integral(beta),
            Self::StudentT { .. } => Err(Error::NotClosedForm("student-t")),
            Self::AsymmetricGaussian {
                dim,
                sigma_left,
                sigma_right,
            } => {
                let width = sigma_left + sigma_right;
                let c = 2.0 / ((2.0 * PI).sqrt() * width);
                let per_dim = c.powf(beta + 1.0) * 0.5 * width * (2.0 * PI / (beta + 1.0)).sqrt();
                Ok(per_dim.powi(*dim as i32))
            }
            Self::GaussianMixture(comps) => {
                let first = &comps[0];
                let shared = comps.iter().all(|c| {
                    c.offset == first.offset && c.noise.covariance() == first.noise.covariance()
                });
                if shared {
                    first.noise.power_integral(beta)
                } else {
                    Err(Error::NotClosedForm("gaussian mixture with distinct components"))
                }
            }
        }
    }
}

/// A likelihood `g(y | x)` formed by an observation map and additive noise.
#[derive(Debug, Clone)]
pub struct LikelihoodFamily {
    map: ObservationMap,
    noise: NoiseModel,
}

impl LikelihoodFamily {
    pub fn new(map: ObservationMap, noise: NoiseModel) -> Result<Self> {
        check_dim("observation noise", map.obs_dim(), noise.dim())?;
        if map.obs_dim() == 0 || map.state_dim() == 0 {
            return Err(Error::Config("likelihood dimensions must be positive".into()));
        }
        if let ObservationMap::Linear(h) = &map {
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("observation matrix has non-finite entries".into()));
            }
        }
        match &noise {
            NoiseModel::StudentT { scale, dof } => {
                if !(*dof > 0.0) || scale.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Config("student-t needs positive scale and dof".into()));
                }
            }
            NoiseModel::AsymmetricGaussian {
                sigma_left,
                sigma_right,
                ..
            } => {
                if !(*sigma_left > 0.0 && *sigma_right > 0.0) {
                    return Err(Error::Config("asymmetric gaussian needs positive scales".into()));
                }
            }
            NoiseModel::GaussianMixture(comps) => {
                if comps.is_empty() {
                    return Err(Error::Config("mixture needs at least one component".into()));
                }
                let total: f64 = comps.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-12 || comps.iter().any(|c| !(c.weight > 0.0)) {
                    return Err(Error::Config(format!(
                        "mixture weights must be positive and sum to 1 (sum {total})"
                    )));
                }
                for c in comps {
                    check_dim("mixture component", map.obs_dim(), c.noise.dim())?;
                    check_dim("mixture offset", map.obs_dim(), c.offset.len())?;
                }
            }
            NoiseModel::Gaussian(_) => {}
        }
        Ok(Self { map, noise })
    }

    pub fn gaussian(h: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(ObservationMap::Linear(h), NoiseModel::Gaussian(GaussianNoise::new(cov)?))
    }

    pub fn nonlinear_gaussian(h: Arc<dyn ObservationFunction>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(ObservationMap::Nonlinear(h), NoiseModel::Gaussian(GaussianNoise::new(cov)?))
    }

    pub fn student_t(map: ObservationMap, scale: Vec<f64>, dof: f64) -> Result<Self> {
        Self::new(map, NoiseModel::StudentT { scale, dof })
    }

    pub fn asymmetric_gaussian(map: ObservationMap, sigma_left: f64, sigma_right: f64) -> Result<Self> {
        let dim = map.obs_dim();
        Self::new(
            map,
            NoiseModel::AsymmetricGaussian {
                dim,
                sigma_left,
                sigma_right,
            },
        )
    }

    /// Mixture from `(weight, mean offset, covariance)` triples.
    pub fn gaussian_mixture(
        map: ObservationMap,
        components: Vec<(f64, DVector<f64>, DMatrix<f64>)>,
    ) -> Result<Self> {
        let comps = components
            .into_iter()
            .map(|(weight, offset, cov)| {
                Ok(MixtureComponent {
                    weight,
                    offset,
                    noise: GaussianNoise::new(cov)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(map, NoiseModel::GaussianMixture(comps))
    }

    pub fn map(&self) -> &ObservationMap {
        &self.map
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn state_dim(&self) -> usize {
        self.map.state_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.map.obs_dim()
    }

    /// `log g(y | x)` without dimension checks; the filters validate once up front.
    #[inline]
    pub fn log_density(&self, x: &[f64], y: &[f64]) -> f64 {
        with_buffer(y.len(), |r| {
            self.map.apply(x, r);
            for (ri, yi) in r.iter_mut().zip(y) {
                *ri = yi - *ri;
            }
            self.noise.log_density(r)
        })
    }

    pub fn checked_log_density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim("likelihood state", self.state_dim(), x.len())?;
        check_dim("likelihood observation", self.obs_dim(), y.len())?;
        Ok(self.log_density(x, y))
    }

    /// `log g` at the mode of the residual, i.e. `sup_x log g(y | x)` when the
    /// map can reach `y`.
    pub fn log_density_max(&self) -> f64 {
        self.noise.log_density_max()
    }

    pub fn power_integral(&self, x: &[f64], beta: f64) -> Result<f64> {
        check_dim("likelihood state", self.state_dim(), x.len())?;
        // location families: independent of x
        self.noise.power_integral(beta)
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        self.map.apply(x, out);
        with_buffer(out.len(), |e| {
            self.noise.sample_into(rng, e);
            for (o, ei) in out.iter_mut().zip(e.iter()) {
                *o += ei;
            }
        });
    }

    pub fn point_prediction_into(&self, x: &[f64], out: &mut [f64]) {
        self.map.apply(x, out);
        with_buffer(out.len(), |c| {
            self.noise.center_into(c);
            for (o, ci) in out.iter_mut().zip(c.iter()) {
                *o += ci;
            }
        });
    }
}

#[inline]
pub(crate) fn with_buffer<T>(n: usize, f: impl FnOnce(&mut [f64]) -> T) -> T {
    if n <= STACK {
        let mut buf = [0.0_f64; STACK];
        f(&mut buf[..n])
    } else {
        let mut buf = vec![0.0; n];
        f(&mut buf)
    }
}

/// Max-shifted `log Σ exp(v)`; `-∞` for empty or all `-∞` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
