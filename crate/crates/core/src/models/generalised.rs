//! Loss-based generalised likelihoods.
//!
//! The β rule replaces `log g(y|x)` with the negative β-divergence loss
//!
//! ```text
//! -ℓ^β(x, y) = (1/β) g(y|x)^β − (1/(β+1)) ∫ g(y'|x)^{β+1} dy'
//! ```
//!
//! All potentials are handled in log space. In [`ConstantMode::Drop`] every
//! term that does not depend on `x` is omitted, which leaves
//! `expm1(β log g) / β`; this converges to `log g` as β → 0 without
//! cancellation and is the form used inside the particle filters.

use crate::error::{Error, Result};
use crate::models::likelihood::LikelihoodFamily;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossRule {
    /// Negative log-likelihood loss: ordinary Bayes.
    Standard,
    /// β-divergence loss with β > 0.
    Beta(f64),
}

impl LossRule {
    pub fn beta(&self) -> Option<f64> {
        match self {
            Self::Standard => None,
            Self::Beta(b) => Some(*b),
        }
    }
}

/// Whether x-independent terms of the β potential are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstantMode {
    /// Omit the power integral and the `1/β` offset. Valid whenever the
    /// integral does not vary with the state, which holds for every additive
    /// noise family in this crate.
    #[default]
    Drop,
    /// Evaluate the full `-ℓ^β`.
    Include,
}

#[derive(Debug, Clone)]
pub struct GeneralisedLikelihood {
    base: LikelihoodFamily,
    rule: LossRule,
    constants: ConstantMode,
}

impl GeneralisedLikelihood {
    pub fn new(base: LikelihoodFamily, rule: LossRule) -> Result<Self> {
        if let LossRule::Beta(b) = rule {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("β must be positive and finite, got {b}")));
            }
        }
        Ok(Self {
            base,
            rule,
            constants: ConstantMode::Drop,
        })
    }

    pub fn standard(base: LikelihoodFamily) -> Self {
        Self {
            base,
            rule: LossRule::Standard,
            constants: ConstantMode::Drop,
        }
    }

    pub fn beta(base: LikelihoodFamily, beta: f64) -> Result<Self> {
        Self::new(base, LossRule::Beta(beta))
    }

    /// Switch constant handling. `Include` fails early when the power
    /// integral has no closed form for the base family.
    pub fn with_constants(mut self, mode: ConstantMode) -> Result<Self> {
        if let (ConstantMode::Include, LossRule::Beta(b)) = (mode, self.rule) {
            self.base.noise().power_integral(b)?;
        }
        self.constants = mode;
        Ok(self)
    }

    pub fn base(&self) -> &LikelihoodFamily {
        &self.base
    }

    pub fn rule(&self) -> LossRule {
        self.rule
    }

    pub fn constants(&self) -> ConstantMode {
        self.constants
    }

    pub fn label(&self) -> String {
        match self.rule {
            LossRule::Standard => "standard".into(),
            LossRule::Beta(b) => format!("beta({b})"),
        }
    }

    /// `log g(y | x)`.
    #[inline]
    pub fn log_density(&self, x: &[f64], y: &[f64]) -> f64 {
        self.base.log_density(x, y)
    }

    /// `ℓ^β(x, y)`; only defined for the β rule.
    pub fn beta_loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let LossRule::Beta(b) = self.rule else {
            return Err(Error::Config("beta loss requested for the standard rule".into()));
        };
        let integral = self.base.power_integral(x, b)?;
        let lg = self.base.checked_log_density(x, y)?;
        Ok(integral / (b + 1.0) - (b * lg).exp() / b)
    }

    /// Log potential `log G(y | x)` used for particle weighting.
    #[inline]
    pub fn log_potential(&self, x: &[f64], y: &[f64]) -> f64 {
        self.potential_from_log_density(self.base.log_density(x, y))
    }

    /// Potential as a function of `log g`, for callers that already hold it.
    #[inline]
    pub fn potential_from_log_density(&self, lg: f64) -> f64 {
        match self.rule {
            LossRule::Standard => lg,
            LossRule::Beta(b) => {
                let tempered = (b * lg).exp_m1() / b;
                match self.constants {
                    ConstantMode::Drop => tempered,
                    ConstantMode::Include => {
                        // validated in with_constants
                        let integral = self.base.noise().power_integral(b).unwrap_or(f64::NAN);
                        tempered + 1.0 / b - integral / (b + 1.0)
                    }
                }
            }
        }
    }

    /// Checked variant of [`log_potential`](Self::log_potential).
    pub fn checked_log_potential(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let lg = self.base.checked_log_density(x, y)?;
        if let (ConstantMode::Include, LossRule::Beta(b)) = (self.constants, self.rule) {
            self.base.power_integral(x, b)?;
        }
        Ok(self.potential_from_log_density(lg))
    }

    /// `sup_x log G(y | x)` for location families, attained at zero residual.
    pub fn log_potential_sup(&self) -> f64 {
        self.potential_from_log_density(self.base.log_density_max())
    }
}
