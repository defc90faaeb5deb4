//! Composite Newton-Cotes rules over one unit decision period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    Trapezoidal,
    /// Simpson's 1/3 rule; needs an even substep count.
    Simpson13,
    /// Simpson's 3/8 rule; needs a substep count divisible by three.
    Simpson38,
}

/// What to integrate: the grid values or their reciprocals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Reciprocal,
}

impl QuadratureRule {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureRule::Trapezoidal => "trapezoidal",
            QuadratureRule::Simpson13 => "simpson13",
            QuadratureRule::Simpson38 => "simpson38",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', '/', ' '], "").as_str() {
            "trapezoidal" | "trapezoid" | "t" => Some(QuadratureRule::Trapezoidal),
            "simpson13" | "simpson" | "s13" => Some(QuadratureRule::Simpson13),
            "simpson38" | "s38" => Some(QuadratureRule::Simpson38),
            _ => None,
        }
    }

    pub fn check(self, substeps: usize) -> Result<()> {
        let divisor = match self {
            QuadratureRule::Trapezoidal => 1,
            QuadratureRule::Simpson13 => 2,
            QuadratureRule::Simpson38 => 3,
        };
        if substeps == 0 || substeps % divisor != 0 {
            return Err(Error::RuleMismatch {
                rule: self.name(),
                divisor,
                substeps,
            });
        }
        Ok(())
    }

    /// Weights for `substeps + 1` equally spaced points on a unit interval.
    pub fn weights(self, substeps: usize) -> Result<Vec<f64>> {
        self.check(substeps)?;
        let m = substeps;
        let h = 1.0 / m as f64;
        let w = (0..=m)
            .map(|i| {
                let end = i == 0 || i == m;
                match self {
                    QuadratureRule::Trapezoidal => {
                        if end {
                            h / 2.0
                        } else {
                            h
                        }
                    }
                    QuadratureRule::Simpson13 => {
                        if end {
                            h / 3.0
                        } else if i % 2 == 0 {
                            2.0 * h / 3.0
                        } else {
                            4.0 * h / 3.0
                        }
                    }
                    QuadratureRule::Simpson38 => {
                        if end {
                            3.0 * h / 8.0
                        } else if i % 3 == 0 {
                            6.0 * h / 8.0
                        } else {
                            9.0 * h / 8.0
                        }
                    }
                }
            })
            .collect();
        Ok(w)
    }
}

/// Approximates the integral of `grid` (or of its reciprocal) over a unit
/// period sampled at `grid.len()` equally spaced points.
pub fn integrate(grid: &[f64], rule: QuadratureRule, transform: Transform) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::RuleMismatch {
            rule: rule.name(),
            divisor: 1,
            substeps: 0,
        });
    }
    let weights = rule.weights(grid.len() - 1)?;
    match transform {
        Transform::Identity => Ok(dot(&weights, grid)),
        Transform::Reciprocal => {
            if let Some(bad) = grid.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::NonPositive(*bad));
            }
            Ok(weights.iter().zip(grid).map(|(w, v)| w / v).sum())
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
