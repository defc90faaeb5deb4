//! Heston parameters and the constants every path engine derives from them.
//!
//! The model is
//!
//! ```text
//! dS = mu S dt + sqrt(1 - rho^2) S sqrt(V) dB + rho S sqrt(V) dbeta
//! dV = (nu - varrho V) dt + kappa sqrt(V) dbeta
//! ```
//!
//! The variance can be written as a sum of `n` squared Ornstein-Uhlenbeck
//! factors whenever `nu = n kappa^2 / 4`. [`ClosestExplicit`] picks the
//! nearest such `n` for arbitrary parameters; the weighted engine corrects
//! for the difference with a likelihood ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heston parameters plus the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Price drift (also the default discount rate).
    pub mu: f64,
    /// Variance mean-reversion level component.
    pub nu: f64,
    /// Price/variance correlation.
    pub rho: f64,
    /// Variance mean-reversion speed.
    pub varrho: f64,
    /// Volatility of variance.
    pub kappa: f64,
    pub s0: f64,
    pub v0: f64,
}

impl ModelParams {
    /// Checks every parameter constraint and returns the parameters unchanged.
    pub fn validate(self) -> Result<Self> {
        fn positive(name: &'static str, value: f64) -> Result<()> {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    constraint: "positive",
                    value,
                })
            }
        }
        positive("kappa", self.kappa)?;
        positive("varrho", self.varrho)?;
        positive("nu", self.nu)?;
        positive("s0", self.s0)?;
        positive("v0", self.v0)?;
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter {
                name: "rho",
                constraint: "in [-1, 1]",
                value: self.rho,
            });
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                constraint: "finite",
                value: self.mu,
            });
        }
        Ok(self)
    }

    /// Nearest parameter set whose variance is an exact sum of squared OU factors.
    pub fn closest_explicit(&self) -> ClosestExplicit {
        let k2 = self.kappa * self.kappa;
        let n = ((4.0 * self.nu / k2 + 0.5).floor() as usize).max(1);
        let nu_k = n as f64 * k2 / 4.0;
        let exact = nu_k == self.nu;
        let mu_k = if exact {
            self.mu
        } else {
            self.mu + (self.rho / self.kappa) * (nu_k - self.nu)
        };
        ClosestExplicit {
            n,
            nu_k,
            mu_k,
            exact,
        }
    }

    /// The same model with `nu` and `mu` replaced by their closest-explicit values.
    pub fn to_closest_explicit(&self) -> ModelParams {
        let ce = self.closest_explicit();
        ModelParams {
            mu: ce.mu_k,
            nu: ce.nu_k,
            ..*self
        }
    }

    /// Long-run mean of the variance, `nu / varrho`.
    pub fn variance_level(&self) -> f64 {
        self.nu / self.varrho
    }
}

/// Closest model satisfying `nu_k = n kappa^2 / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosestExplicit {
    /// Number of OU factors.
    pub n: usize,
    pub nu_k: f64,
    pub mu_k: f64,
    /// True when the original parameters already satisfy the condition.
    pub exact: bool,
}

/// Per-period constants of the explicit price and weight recursions, for
/// a decision grid of unit spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConstants {
    /// `sqrt(1 - rho^2)`, scale of the conditionally Gaussian price shock.
    pub a: f64,
    /// Per-period log-price drift `mu - nu rho / kappa`.
    pub b: f64,
    /// Coefficient of the integrated variance, `rho varrho / kappa - 1/2`.
    pub c: f64,
    /// Coefficient of the variance increment, `rho / kappa`.
    pub d: f64,
    /// Log-variance coefficient of the likelihood, `(nu - nu_k) / kappa^2`.
    pub e: f64,
    /// Reciprocal-variance coefficient of the likelihood.
    pub f: f64,
    /// OU noise scale for a half-period substep.
    pub sigma_h: f64,
    /// OU decay for a half-period substep.
    pub alpha_h: f64,
    /// Number of Box-Muller pairs needed per substep, `ceil(n / 2)`.
    pub n2: usize,
    pub n: usize,
    pub varrho: f64,
    pub kappa: f64,
}

impl SimConstants {
    pub fn new(params: &ModelParams, ce: &ClosestExplicit) -> Self {
        let ModelParams {
            mu,
            nu,
            rho,
            varrho,
            kappa,
            ..
        } = *params;
        let k2 = kappa * kappa;
        let e = (nu - ce.nu_k) / k2;
        let substep = OuStep::new(varrho, kappa, 0.5);
        SimConstants {
            a: (1.0 - rho * rho).max(0.0).sqrt(),
            b: mu - nu * rho / kappa,
            c: rho * varrho / kappa - 0.5,
            d: rho / kappa,
            e,
            f: e * (k2 - nu - ce.nu_k) / 2.0,
            sigma_h: substep.noise_scale,
            alpha_h: substep.decay,
            n2: ce.n.div_ceil(2),
            n: ce.n,
            varrho,
            kappa,
        }
    }

    /// OU transition coefficients for a substep of length `dt`.
    pub fn ou_step(&self, dt: f64) -> OuStep {
        OuStep::new(self.varrho, self.kappa, dt)
    }
}

/// Exact transition of `dY = -(varrho/2) Y dt + (kappa/2) dW` over `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuStep {
    pub decay: f64,
    pub noise_scale: f64,
}

impl OuStep {
    pub fn new(varrho: f64, kappa: f64, dt: f64) -> Self {
        OuStep {
            decay: (-varrho * dt / 2.0).exp(),
            noise_scale: kappa * (-(-varrho * dt).exp_m1() / (4.0 * varrho)).sqrt(),
        }
    }
}
