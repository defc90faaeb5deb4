//! Regression bases on the positive orthant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `exp(-x/2) L_k(x)` with `L_k` the Laguerre polynomials.
    WeightedLaguerre,
    /// Haar functions carried to `[0, inf)` by `s(x) = x / (1 + x)`.
    ScaledHaar,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::WeightedLaguerre => "laguerre",
            Family::ScaledHaar => "haar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laguerre" | "weighted-laguerre" => Some(Family::WeightedLaguerre),
            "haar" | "scaled-haar" => Some(Family::ScaledHaar),
            _ => None,
        }
    }

    /// Writes the first `out.len()` functions of the family at `x`.
    pub fn eval_into(self, x: f64, out: &mut [f64]) {
        match self {
            Family::WeightedLaguerre => weighted_laguerre(x, out),
            Family::ScaledHaar => scaled_haar(x, out),
        }
    }
}

fn weighted_laguerre(x: f64, out: &mut [f64]) {
    let w = (-0.5 * x).exp();
    let (mut prev, mut cur) = (0.0, 1.0);
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = w * cur;
        let k = k as f64;
        let next = ((2.0 * k + 1.0 - x) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
}

/// The `k`-th Haar function on `[0, 1]`, one based: `h_1 = 1`, then the
/// wavelets `2^(m/2) psi(2^m x - l)` for `k - 1 = 2^m + l`.
pub fn haar(k: usize, x: f64) -> f64 {
    assert!(k >= 1);
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if k == 1 {
        return 1.0;
    }
    let idx = k - 1;
    let m = usize::BITS - 1 - idx.leading_zeros();
    let l = idx - (1usize << m);
    let scale = (1u64 << m) as f64;
    let y = x * scale - l as f64;
    let last = l + 1 == 1usize << m;
    let amp = scale.sqrt();
    if (0.0..0.5).contains(&y) {
        amp
    } else if (0.5..1.0).contains(&y) || (last && y == 1.0) {
        -amp
    } else {
        0.0
    }
}

fn scaled_haar(x: f64, out: &mut [f64]) {
    let g = 1.0 / (1.0 + x);
    let s = x * g;
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = g * haar(k + 1, s);
    }
}

/// Tensor-product basis: one 1-D family per state coordinate, functions
/// ordered row-major over the per-coordinate indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub factors: Vec<(Family, usize)>,
}

impl BasisSet {
    pub fn new(factors: Vec<(Family, usize)>) -> Self {
        assert!(!factors.is_empty() && factors.iter().all(|&(_, j)| j >= 1));
        BasisSet { factors }
    }

    /// `j` functions of `family` in each of `dims` coordinates.
    pub fn uniform(family: Family, j: usize, dims: usize) -> Self {
        BasisSet::new(vec![(family, j); dims])
    }

    pub fn dims(&self) -> usize {
        self.factors.len()
    }

    /// Total number of functions `J`.
    pub fn len(&self) -> usize {
        self.factors.iter().map(|&(_, j)| j).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn evaluator(&self) -> BasisEvaluator<'_> {
        let total = self.factors.iter().map(|&(_, j)| j).sum();
        BasisEvaluator {
            basis: self,
            scratch: vec![0.0; total],
        }
    }

    pub fn eval(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: state.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.evaluator().eval_into(state, &mut out);
        Ok(out)
    }
}

/// Reusable buffers for evaluating a [`BasisSet`] without allocation.
#[derive(Debug, Clone)]
pub struct BasisEvaluator<'a> {
    basis: &'a BasisSet,
    scratch: Vec<f64>,
}

impl BasisEvaluator<'_> {
    /// Fills `out` (length `J`) with the basis at `state`.
    pub fn eval_into(&mut self, state: &[f64], out: &mut [f64]) {
        debug_assert_eq!(state.len(), self.basis.dims());
        debug_assert_eq!(out.len(), self.basis.len());
        let mut offset = 0;
        for (&(family, j), &x) in self.basis.factors.iter().zip(state) {
            family.eval_into(x, &mut self.scratch[offset..offset + j]);
            offset += j;
        }
        out[0] = 1.0;
        let mut filled = 1;
        let mut offset = 0;
        for &(_, j) in &self.basis.factors {
            let vals = &self.scratch[offset..offset + j];
            // Expand in place from the back so the earlier coordinates vary
            // slowest.
            for i in (0..filled).rev() {
                let head = out[i];
                for (k, v) in vals.iter().enumerate().rev() {
                    out[i * j + k] = head * v;
                }
            }
            filled *= j;
            offset += j;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn laguerre_at_zero_is_one() {
        let mut out = [0.0; 5];
        Family::WeightedLaguerre.eval_into(0.0, &mut out);
        assert_eq!(out, [1.0; 5]);
    }

    #[test]
    fn laguerre_closed_forms() {
        let mut out = [0.0; 3];
        Family::WeightedLaguerre.eval_into(1.0, &mut out);
        assert_eq!(out[1], 0.0);
        for x in [0.3, 1.7, 4.0] {
            Family::WeightedLaguerre.eval_into(x, &mut out);
            let w = (-x / 2.0f64).exp();
            assert_relative_eq!(out[0], w);
            assert_relative_eq!(out[1], w * (1.0 - x), max_relative = 1e-14);
            assert_relative_eq!(out[2], w * (1.0 - 2.0 * x + x * x / 2.0), max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn laguerre_matches_explicit_sum() {
        // L_k(x) = sum_i C(k, i) (-x)^i / i!
        let x = 2.3f64;
        let mut out = [0.0; 8];
        Family::WeightedLaguerre.eval_into(x, &mut out);
        for (k, &got) in out.iter().enumerate() {
            let mut sum = 0.0;
            let mut binom = 1.0;
            let mut fact = 1.0;
            for i in 0..=k {
                if i > 0 {
                    binom *= (k - i + 1) as f64 / i as f64;
                    fact *= i as f64;
                }
                sum += binom * (-x).powi(i as i32) / fact;
            }
            assert_relative_eq!(got, (-x / 2.0).exp() * sum, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn haar_values() {
        assert_eq!(haar(1, 0.3), 1.0);
        assert_eq!(haar(2, 0.25), 1.0);
        assert_eq!(haar(2, 0.75), -1.0);
        assert_eq!(haar(3, 0.1), 2f64.sqrt());
        assert_eq!(haar(3, 0.3), -(2f64.sqrt()));
        assert_eq!(haar(3, 0.6), 0.0);
        assert_eq!(haar(4, 0.6), 2f64.sqrt());
        assert_eq!(haar(4, 1.0), -(2f64.sqrt()));
        assert_eq!(haar(5, 0.1), 2.0);
    }

    #[test]
    fn scaled_haar_first_function() {
        let mut out = [0.0; 1];
        Family::ScaledHaar.eval_into(1.0, &mut out);
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn haar_is_orthonormal() {
        let n = 1 << 12;
        for a in 1..=8 {
            for b in 1..=8 {
                let ip: f64 = (0..n)
                    .map(|i| {
                        let x = (i as f64 + 0.5) / n as f64;
                        haar(a, x) * haar(b, x)
                    })
                    .sum::<f64>()
                    / n as f64;
                assert_relative_eq!(ip, if a == b { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tensor_order_is_row_major() {
        let basis = BasisSet::new(vec![(Family::WeightedLaguerre, 2), (Family::WeightedLaguerre, 3)]);
        assert_eq!(basis.len(), 6);
        let (x, y) = (0.4, 1.3);
        let e = basis.eval(&[x, y]).unwrap();
        let mut ex = [0.0; 2];
        let mut ey = [0.0; 3];
        Family::WeightedLaguerre.eval_into(x, &mut ex);
        Family::WeightedLaguerre.eval_into(y, &mut ey);
        for i in 0..2 {
            for k in 0..3 {
                assert_eq!(e[i * 3 + k], ex[i] * ey[k]);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let basis = BasisSet::uniform(Family::ScaledHaar, 2, 3);
        assert!(matches!(basis.eval(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 3, got: 2 })));
    }

    proptest! {
        #[test]
        fn finite_on_positive_orthant(r in 0.0f64..1e3, s in 0.0f64..1e3, v in 0.0f64..50.0, j in 1usize..7) {
            for family in [Family::WeightedLaguerre, Family::ScaledHaar] {
                let basis = BasisSet::uniform(family, j, 3);
                let e = basis.eval(&[r, s, v]).unwrap();
                prop_assert_eq!(e.len(), j * j * j);
                prop_assert!(e.iter().all(|x| x.is_finite()));
            }
        }
    }
}
