//! Ornstein-Uhlenbeck volatility factors.
//!
//! With `nu = n kappa^2 / 4` the CIR variance is `V = sum_i (Y^i)^2` where
//! each `Y^i` solves `dY = -(varrho/2) Y dt + (kappa/2) dW^i`. The OU
//! transition is Gaussian, so the factors are advanced exactly and the
//! variance is nonnegative by construction.

use crate::model::{ClosestExplicit, ModelParams, OuStep};
use crate::rng::GaussianSource;

/// Current values of the `n` OU factors of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    pub y: Vec<f64>,
    /// Substeps taken since initialisation.
    pub substep: usize,
}

impl FactorState {
    /// Splits `v0` evenly over `n` factors: every `y_i = sqrt(v0 / n)`.
    pub fn init(v0: f64, n: usize) -> Self {
        assert!(n >= 1, "at least one factor is required");
        FactorState {
            y: vec![(v0 / n as f64).sqrt(); n],
            substep: 0,
        }
    }

    /// Resets to the initial split without reallocating.
    pub fn reset(&mut self, v0: f64) {
        let y0 = (v0 / self.y.len() as f64).sqrt();
        self.y.iter_mut().for_each(|y| *y = y0);
        self.substep = 0;
    }

    #[inline]
    pub fn variance(&self) -> f64 {
        self.y.iter().map(|y| y * y).sum()
    }

    /// Advances every factor by one exact OU transition and returns the new
    /// variance.
    ///
    /// Factors are filled two at a time from Box-Muller pairs; for odd `n`
    /// the second normal of the last pair is discarded.
    #[inline]
    pub fn advance<G: GaussianSource>(&mut self, step: &OuStep, normals: &mut G) -> f64 {
        let mut var = 0.0;
        for pair in self.y.chunks_mut(2) {
            let (g0, g1) = normals.gaussian_pair();
            pair[0] = step.decay * pair[0] + step.noise_scale * g0;
            var += pair[0] * pair[0];
            if let Some(y) = pair.get_mut(1) {
                *y = step.decay * *y + step.noise_scale * g1;
                var += *y * *y;
            }
        }
        self.substep += 1;
        var
    }

    /// Simulates one decision period of `grid.len() - 1` substeps.
    ///
    /// `grid[0]` must already hold the variance at the start of the period;
    /// the remaining entries receive the substep variances.
    pub fn advance_period<G: GaussianSource>(
        &mut self,
        step: &OuStep,
        grid: &mut [f64],
        normals: &mut G,
    ) {
        for slot in grid.iter_mut().skip(1) {
            *slot = self.advance(step, normals);
        }
    }
}

/// Variance at each substep of one period, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct VarGrid {
    pub values: Vec<f64>,
}

impl VarGrid {
    pub fn substeps(&self) -> usize {
        self.values.len() - 1
    }
}

/// Mean and variance of `V_t` started from `v0`, for the exact factor model.
///
/// Built from the three pieces of the squared-OU expansion: a scaled
/// chi-square with `n` degrees of freedom, a centred Gaussian cross term
/// and the deterministic decay `v0 exp(-varrho t)`.
pub fn cir_moments(params: &ModelParams, ce: &ClosestExplicit, t: f64) -> (f64, f64) {
    let n = ce.n as f64;
    let decay = (-params.varrho * t).exp();
    // Per-factor variance of the OU noise accumulated over [0, t].
    let s2 = params.kappa * params.kappa * (-(-params.varrho * t).exp_m1()) / (4.0 * params.varrho);
    let deterministic = params.v0 * decay;
    let mean = n * s2 + deterministic;
    let variance = 2.0 * n * s2 * s2 + 4.0 * s2 * deterministic;
    (mean, variance)
}
