//! Logarithmic transformation family `G(x) = log(1 + r x) / r` (identity at `r = 0`)
//! and the derived quantities used by the likelihood, the M-step and the
//! event-time generator.
//!
//! `r = 0` is the proportional hazards model, `r = 1` proportional odds.

use thiserror::Error;

/// Below this the `r = 0` branch is used; `(1/r) log(1 + r x)` loses all
/// precision long before the difference to `x` becomes visible.
const SMALL_R: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("transformation parameter must be finite and nonnegative, got {0}")]
    InvalidParameter(f64),
    #[error("argument must be finite and nonnegative, got {0}")]
    NegativeArgument(f64),
}

/// Transformation parameter `r` of one risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformationSpec {
    r: f64,
}

impl TransformationSpec {
    pub fn new(r: f64) -> Result<Self, DomainError> {
        if !r.is_finite() || r < 0.0 {
            return Err(DomainError::InvalidParameter(r));
        }
        Ok(Self { r })
    }

    /// Proportional hazards (`r = 0`).
    pub fn cox() -> Self {
        Self { r: 0.0 }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    fn is_identity(&self) -> bool {
        self.r < SMALL_R
    }

    pub fn g(&self, x: f64) -> Result<f64, DomainError> {
        check(x)?;
        Ok(self.g_raw(x))
    }

    pub fn g_prime(&self, x: f64) -> Result<f64, DomainError> {
        check(x)?;
        Ok(if self.is_identity() {
            1.0
        } else {
            1.0 / (1.0 + self.r * x)
        })
    }

    pub fn g_inverse(&self, y: f64) -> Result<f64, DomainError> {
        check(y)?;
        Ok(if self.is_identity() {
            y
        } else {
            (self.r * y).exp_m1() / self.r
        })
    }

    /// `G'(x) exp(-G(x))`, equal to `(1 + r x)^(-1 - 1/r)` for `r > 0`.
    pub fn g_tilde(&self, x: f64) -> Result<f64, DomainError> {
        check(x)?;
        Ok(self.log_g_tilde_raw(x).exp())
    }

    /// Derivative of [`Self::g_tilde`]; never positive.
    pub fn g_tilde_prime(&self, x: f64) -> Result<f64, DomainError> {
        check(x)?;
        Ok(self.rho_raw(x) * self.log_g_tilde_raw(x).exp())
    }

    // Unchecked kernels for the likelihood hot loops. Callers guarantee x >= 0.

    #[inline]
    pub(crate) fn g_raw(&self, x: f64) -> f64 {
        if self.is_identity() {
            x
        } else {
            (self.r * x).ln_1p() / self.r
        }
    }

    /// `G(x + h) - G(x)` without cancellation when `h` is small relative to `x`.
    #[inline]
    pub(crate) fn g_increment_raw(&self, x: f64, h: f64) -> f64 {
        if self.is_identity() {
            h
        } else {
            (self.r * h / (1.0 + self.r * x)).ln_1p() / self.r
        }
    }

    #[inline]
    pub(crate) fn log_g_tilde_raw(&self, x: f64) -> f64 {
        if self.is_identity() {
            -x
        } else {
            -(1.0 + 1.0 / self.r) * (self.r * x).ln_1p()
        }
    }

    #[inline]
    pub(crate) fn g_tilde_raw(&self, x: f64) -> f64 {
        self.log_g_tilde_raw(x).exp()
    }

    /// `G~'(x) / G~(x) = -(r + 1) / (1 + r x)`.
    #[inline]
    pub(crate) fn rho_raw(&self, x: f64) -> f64 {
        if self.is_identity() {
            -1.0
        } else {
            -(self.r + 1.0) / (1.0 + self.r * x)
        }
    }

    /// Derivative of [`Self::rho_raw`]: `r (r + 1) / (1 + r x)^2`.
    #[inline]
    pub(crate) fn rho_prime_raw(&self, x: f64) -> f64 {
        if self.is_identity() {
            0.0
        } else {
            let s = 1.0 + self.r * x;
            self.r * (self.r + 1.0) / (s * s)
        }
    }
}

fn check(x: f64) -> Result<(), DomainError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(DomainError::NegativeArgument(x))
    }
}
