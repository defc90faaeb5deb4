//! Backward-induction pricing of Bermudan exercise over a [`PathSet`].
//!
//! At each decision time the continuation value is approximated as
//! `alpha . e(state)` over the in-the-money particles, either by the
//! per-particle stochastic approximation recursion or by least squares.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisEvaluator, BasisSet};
use crate::error::{Error, Result};
use crate::paths::PathSet;

/// Condition number above which a regression matrix counts as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    /// Stochastic approximation with gain `gamma / k`.
    Sa { gamma: f64 },
    /// Least squares; `strict` turns an ill-conditioned solve into an error.
    Lsm { strict: bool },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sa { .. } => "sa",
            Method::Lsm { .. } => "lsm",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Method::Sa { gamma } => Some(gamma),
            Method::Lsm { .. } => None,
        }
    }
}

/// Number of state coordinates the pricer feeds to the basis.
pub fn state_dims(paths: &PathSet) -> usize {
    if paths.payoff.instrument.kind.is_asian() {
        3
    } else {
        2
    }
}

/// Basis input of particle `j` at time `t`: `(S/K, V)`, or `(R/K, S/K, V)`
/// for Asian contracts.
#[inline]
pub fn state(paths: &PathSet, t: usize, j: usize, out: &mut [f64; 3]) -> usize {
    let k = paths.payoff.instrument.strike;
    if paths.payoff.instrument.kind.is_asian() {
        *out = [paths.r(t, j) / k, paths.s(t, j) / k, paths.v(t, j)];
        3
    } else {
        out[0] = paths.s(t, j) / k;
        out[1] = paths.v(t, j);
        2
    }
}

#[inline]
fn eval_state(paths: &PathSet, t: usize, j: usize, ev: &mut BasisEvaluator<'_>, e: &mut [f64]) {
    let mut x = [0.0; 3];
    let d = state(paths, t, j, &mut x);
    ev.eval_into(&x[..d], e);
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One stochastic approximation sweep over the particles at time `t`.
///
/// Particles are visited in index order; only those with `Z_t > 0` move
/// the coefficients, each by `gamma L_t / k (Z_tau - e'alpha) e`.
pub fn sa_pass(
    paths: &PathSet,
    t: usize,
    alpha_in: &[f64],
    gamma: f64,
    basis: &BasisSet,
    tau: &[u32],
) -> Vec<f64> {
    let mut alpha = alpha_in.to_vec();
    let mut e = vec![0.0; basis.len()];
    let mut ev = basis.evaluator();
    let mut k = 0usize;
    let z_row = paths.z_row(t);
    for (j, &z) in z_row.iter().enumerate() {
        if z <= 0.0 {
            continue;
        }
        k += 1;
        eval_state(paths, t, j, &mut ev, &mut e);
        let target = paths.z(tau[j] as usize, j);
        let gain = gamma * paths.l(t, j) / k as f64 * (target - dot(&e, &alpha));
        for (a, x) in alpha.iter_mut().zip(&e) {
            *a += gain * x;
        }
    }
    alpha
}

/// Running means `A = mean(L e e')` and `b = mean(L Z_tau e)` over the
/// in-the-money particles of one decision time.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionAccumulator {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub count: usize,
    first: Option<Vec<f64>>,
    distinct: bool,
}

/// Result of a least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LsmSolution {
    pub alpha: Vec<f64>,
    /// Ratio of extreme eigenvalues of `A`; `None` when nothing was fitted
    /// or every sample sat at the same state.
    pub condition: Option<f64>,
}

impl RegressionAccumulator {
    pub fn new(dim: usize) -> Self {
        RegressionAccumulator {
            a: DMatrix::zeros(dim, dim),
            b: DVector::zeros(dim),
            count: 0,
            first: None,
            distinct: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Adds one sample with basis vector `e`, weight `l` and target `z`.
    pub fn push(&mut self, e: &[f64], l: f64, z: f64) {
        self.count += 1;
        let keep = (self.count - 1) as f64 / self.count as f64;
        let w = l / self.count as f64;
        let n = self.dim();
        for c in 0..n {
            let wc = w * e[c];
            for r in c..n {
                let cell = &mut self.a[(r, c)];
                *cell = keep * *cell + wc * e[r];
            }
            self.b[c] = keep * self.b[c] + wc * z;
        }
        match &self.first {
            None => self.first = Some(e.to_vec()),
            Some(f) if !self.distinct && f.as_slice() != e => self.distinct = true,
            _ => {}
        }
    }

    fn symmetric(&self) -> DMatrix<f64> {
        let mut a = self.a.clone();
        a.fill_upper_triangle_with_lower_triangle();
        a
    }

    /// Ratio of the largest to the smallest eigenvalue magnitude of `A`.
    pub fn condition(&self) -> f64 {
        let eig = self.symmetric().symmetric_eigenvalues();
        let max = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let min = eig.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    /// Solves `A alpha = b`, failing when `A` is ill-conditioned.
    ///
    /// If every sample shared one state, `A` has rank one by construction;
    /// the minimum-norm solution then reproduces the weighted mean target.
    pub fn solve(&self) -> Result<LsmSolution> {
        let n = self.dim();
        if self.count == 0 {
            return Ok(LsmSolution {
                alpha: vec![0.0; n],
                condition: None,
            });
        }
        if !self.distinct {
            return Ok(LsmSolution {
                alpha: self.collapsed_solution(),
                condition: None,
            });
        }
        let condition = self.condition();
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::SingularMatrix { time: 0, condition });
        }
        let a = self.symmetric();
        let alpha = match a.clone().cholesky() {
            Some(ch) => ch.solve(&self.b),
            None => a.lu().solve(&self.b).ok_or(Error::SingularMatrix { time: 0, condition })?,
        };
        Ok(LsmSolution {
            alpha: alpha.iter().copied().collect(),
            condition: Some(condition),
        })
    }

    /// Plain LU solve with no conditioning check; zero if LU breaks down.
    pub fn solve_unchecked(&self) -> Vec<f64> {
        match self.symmetric().lu().solve(&self.b) {
            Some(x) if x.iter().all(|v| v.is_finite()) => x.iter().copied().collect(),
            _ => vec![0.0; self.dim()],
        }
    }

    fn collapsed_solution(&self) -> Vec<f64> {
        let e = self.first.as_ref().expect("non-empty");
        let ee = dot(e, e);
        // A = w e e', b = beta e  =>  alpha = beta / (w |e|^2) e.
        let (i, _) = e
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best });
        let w = self.a[(i, i)] / (e[i] * e[i]);
        let beta = self.b[i] / e[i];
        let scale = if w > 0.0 && ee > 0.0 { beta / (w * ee) } else { 0.0 };
        e.iter().map(|x| scale * x).collect()
    }
}

/// Accumulates the regression system at time `t`.
pub fn lsm_accumulate(paths: &PathSet, t: usize, basis: &BasisSet, tau: &[u32]) -> RegressionAccumulator {
    let mut acc = RegressionAccumulator::new(basis.len());
    let mut e = vec![0.0; basis.len()];
    let mut ev = basis.evaluator();
    for (j, &z) in paths.z_row(t).iter().enumerate() {
        if z > 0.0 {
            eval_state(paths, t, j, &mut ev, &mut e);
            acc.push(&e, paths.l(t, j), paths.z(tau[j] as usize, j));
        }
    }
    acc
}

/// Least-squares coefficients at time `t`.
pub fn lsm_pass(paths: &PathSet, t: usize, basis: &BasisSet, tau: &[u32]) -> Result<LsmSolution> {
    lsm_accumulate(paths, t, basis, tau).solve().map_err(|err| match err {
        Error::SingularMatrix { condition, .. } => Error::SingularMatrix { time: t, condition },
        other => other,
    })
}

/// Moves the stopping time of every particle that should exercise at `t`:
/// `Z_t > 0` and `Z_t >= alpha . e(state)`.
pub fn adjust_stopping(paths: &PathSet, t: usize, alpha: &[f64], basis: &BasisSet, tau: &mut [u32]) {
    let z_row = paths.z_row(t);
    tau.par_chunks_mut(4096).enumerate().for_each(|(chunk, taus)| {
        let mut e = vec![0.0; basis.len()];
        let mut ev = basis.evaluator();
        for (offset, tj) in taus.iter_mut().enumerate() {
            let j = chunk * 4096 + offset;
            let z = z_row[j];
            if z <= 0.0 {
                continue;
            }
            eval_state(paths, t, j, &mut ev, &mut e);
            if z >= dot(alpha, &e) {
                *tj = t as u32;
            }
        }
    });
}

/// Weighted price `sum L Z / sum L` at the stopping times, with its
/// delta-method standard error.
pub fn price(paths: &PathSet, tau: &[u32]) -> Result<(f64, f64)> {
    let n = paths.n_particles;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let t = tau[j] as usize;
            let l = paths.l(t, j);
            (l * paths.z(t, j), l)
        })
        .collect();
    let zeta: f64 = pairs.iter().map(|p| p.0).sum();
    let lambda: f64 = pairs.iter().map(|p| p.1).sum();
    if !(lambda > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let value = zeta / lambda;
    let se = if n > 1 {
        let nf = n as f64;
        let resid: f64 = pairs.iter().map(|&(x, w)| (x - value * w).powi(2)).sum();
        (resid / (nf * (nf - 1.0))).sqrt() / (lambda / nf)
    } else {
        0.0
    };
    Ok((value, se))
}

/// Outcome of one pricing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub method: String,
    pub engine: String,
    #[serde(rename = "N")]
    pub n_particles: usize,
    #[serde(rename = "M")]
    pub substeps: usize,
    #[serde(rename = "J")]
    pub basis_size: usize,
    pub gamma: Option<f64>,
    pub price: f64,
    pub std_error: f64,
    pub wall_time_s: f64,
    /// Largest finite regression condition number seen (LSM only).
    pub condition_max: Option<f64>,
    /// Decision times whose regression was ill-conditioned (LSM only).
    pub singular_times: Vec<usize>,
    pub eta_trigger_count: usize,
}

/// Full backward induction: coefficients then stopping times for
/// `t = T-1, ..., 0`, then the price. Also returns the final stopping times.
pub fn run_pricer_detailed(paths: &PathSet, basis: &BasisSet, method: &Method) -> Result<(PriceReport, Vec<u32>)> {
    let dims = state_dims(paths);
    if basis.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            got: basis.dims(),
        });
    }
    let start = Instant::now();
    let periods = paths.periods;
    let mut tau = vec![periods as u32; paths.n_particles];
    let zeros = vec![0.0; basis.len()];
    let mut condition_max: Option<f64> = None;
    let mut singular_times = Vec::new();
    for t in (0..periods).rev() {
        let alpha = match *method {
            Method::Sa { gamma } => sa_pass(paths, t, &zeros, gamma, basis, &tau),
            Method::Lsm { strict } => {
                let acc = lsm_accumulate(paths, t, basis, &tau);
                match acc.solve() {
                    Ok(sol) => {
                        if let Some(c) = sol.condition {
                            condition_max = Some(condition_max.map_or(c, |m| m.max(c)));
                        }
                        sol.alpha
                    }
                    Err(Error::SingularMatrix { condition, .. }) => {
                        if strict {
                            return Err(Error::SingularMatrix { time: t, condition });
                        }
                        singular_times.push(t);
                        if condition.is_finite() {
                            condition_max = Some(condition_max.map_or(condition, |m| m.max(condition)));
                        }
                        acc.solve_unchecked()
                    }
                    Err(other) => return Err(other),
                }
            }
        };
        adjust_stopping(paths, t, &alpha, basis, &mut tau);
    }
    let (value, std_error) = price(paths, &tau)?;
    singular_times.reverse();
    let report = PriceReport {
        method: method.name().to_string(),
        engine: paths.engine.name().to_string(),
        n_particles: paths.n_particles,
        substeps: paths.substeps,
        basis_size: basis.len(),
        gamma: method.gamma(),
        price: value,
        std_error,
        wall_time_s: start.elapsed().as_secs_f64(),
        condition_max,
        singular_times,
        eta_trigger_count: paths.eta_trigger_count(),
    };
    Ok((report, tau))
}

pub fn run_pricer(paths: &PathSet, basis: &BasisSet, method: &Method) -> Result<PriceReport> {
    run_pricer_detailed(paths, basis, method).map(|(report, _)| report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Family;
    use crate::engine::{simulate, EngineConfig};
    use crate::model::ModelParams;
    use crate::paths::{Columns, Engine, ParticlePath};
    use crate::payoffs::{Instrument, InstrumentKind};
    use crate::quadrature::QuadratureRule;
    use crate::rng::{GaussianSource, RngStream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fixture<F>(n: usize, periods: usize, weights: bool, fill: F) -> PathSet
    where
        F: Fn(usize, &mut ParticlePath) + Sync,
    {
        let payoff = Instrument::american_put(100.0).payoff(0.0, periods);
        let columns = Columns {
            weights,
            ..Columns::default()
        };
        PathSet::generate(Engine::Weighted, n, periods, 1, payoff, columns, fill)
    }

    fn laguerre(j: usize) -> BasisSet {
        BasisSet::uniform(Family::WeightedLaguerre, j, 2)
    }

    /// Dense weighted least squares by Gaussian elimination with pivoting.
    fn oracle(rows: &[(Vec<f64>, f64, f64)]) -> Vec<f64> {
        let n = rows[0].0.len();
        let mut m = vec![vec![0.0; n + 1]; n];
        for (e, l, z) in rows {
            for r in 0..n {
                for c in 0..n {
                    m[r][c] += l * e[r] * e[c];
                }
                m[r][n] += l * z * e[r];
            }
        }
        for col in 0..n {
            let p = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, p);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        (0..n).map(|r| m[r][n] / m[r][r]).collect()
    }

    const THETA: [f64; 4] = [4.0, -2.5, 1.5, 3.0];

    /// Particles with states spread over `[0.2, 3] x [0.05, 2]` and a
    /// terminal payoff linear in the basis plus noise.
    fn linear_fixture(n: usize) -> (PathSet, BasisSet) {
        let basis = laguerre(2);
        let set = fixture(n, 1, true, |j, p| {
            let mut rng = RngStream::new(77, j as u64);
            let x = 0.2 + 2.8 * rng.uniform();
            let v = 0.05 + 1.95 * rng.uniform();
            let e = laguerre(2).eval(&[x, v]).unwrap();
            p.s[0] = 100.0 * x;
            p.v[0] = v;
            p.z[0] = if j % 5 == 0 { 0.0 } else { 1.0 };
            p.l[0] = 0.5 + rng.uniform();
            p.z[1] = dot(&THETA, &e) + 0.1 * rng.gaussian();
        });
        (set, basis)
    }

    fn oracle_rows(set: &PathSet, basis: &BasisSet) -> Vec<(Vec<f64>, f64, f64)> {
        (0..set.n_particles)
            .filter(|&j| set.z(0, j) > 0.0)
            .map(|j| {
                let e = basis.eval(&[set.s(0, j) / 100.0, set.v(0, j)]).unwrap();
                (e, set.l(0, j), set.z(1, j))
            })
            .collect()
    }

    #[test]
    fn sa_ignores_out_of_the_money_particles() {
        let set = fixture(10, 1, false, |_, p| {
            p.s[0] = 120.0;
            p.z[1] = 5.0;
        });
        let alpha = sa_pass(&set, 0, &[0.3, -0.2, 0.1, 0.9], 1.0, &laguerre(2), &[1; 10]);
        assert_eq!(alpha, vec![0.3, -0.2, 0.1, 0.9]);
    }

    #[test]
    fn sa_single_step() {
        let set = fixture(1, 1, false, |_, p| {
            p.s[0] = 90.0;
            p.v[0] = 0.2;
            p.z[0] = 10.0;
            p.z[1] = 7.0;
        });
        let basis = laguerre(2);
        let alpha = sa_pass(&set, 0, &[0.0; 4], 1.0, &basis, &[1]);
        let e = basis.eval(&[0.9, 0.2]).unwrap();
        for (a, x) in alpha.iter().zip(&e) {
            assert_relative_eq!(*a, 7.0 * x, max_relative = 1e-15);
        }
    }

    #[test]
    fn sa_and_lsm_match_the_least_squares_oracle() {
        let (set, basis) = linear_fixture(100_000);
        let expect = oracle(&oracle_rows(&set, &basis));
        let tau = vec![1; set.n_particles];
        let lsm = lsm_pass(&set, 0, &basis, &tau).unwrap();
        for (a, b) in lsm.alpha.iter().zip(&expect) {
            assert_relative_eq!(*a, *b, max_relative = 1e-10);
        }
        let sa = sa_pass(&set, 0, &[0.0; 4], 80.0, &basis, &tau);
        for (a, b) in sa.iter().zip(&expect) {
            assert!((a - b).abs() <= 0.02 * b.abs(), "{sa:?} vs {expect:?}");
        }
    }

    #[test]
    fn lsm_scalar_regression_is_weighted_mean() {
        let set = fixture(50, 1, true, |j, p| {
            p.s[0] = 50.0 + j as f64;
            p.z[0] = if j % 3 == 0 { 0.0 } else { 1.0 };
            p.l[0] = 1.0 + (j % 4) as f64;
            p.z[1] = (j * j % 17) as f64;
        });
        let basis = BasisSet::new(vec![(Family::WeightedLaguerre, 1), (Family::WeightedLaguerre, 1)]);
        let alpha = lsm_pass(&set, 0, &basis, &[1; 50]).unwrap().alpha;
        let (mut num, mut den, mut e_sum) = (0.0, 0.0, 0.0);
        for j in (0..50).filter(|j| j % 3 != 0) {
            let l = set.l(0, j);
            let e = basis.eval(&[set.s(0, j) / 100.0, 0.0]).unwrap()[0];
            num += l * set.z(1, j) * e;
            den += l * e * e;
            e_sum += e;
        }
        assert!(e_sum > 0.0);
        assert_relative_eq!(alpha[0], num / den, max_relative = 1e-12);
    }

    #[test]
    fn lsm_with_constant_basis_is_the_weighted_mean() {
        let set = fixture(40, 1, true, |j, p| {
            p.s[0] = 0.0;
            p.v[0] = 0.0;
            p.z[0] = if j % 4 == 0 { 0.0 } else { 1.0 };
            p.l[0] = 1.0 + (j % 3) as f64;
            p.z[1] = j as f64;
        });
        let basis = BasisSet::new(vec![(Family::WeightedLaguerre, 1), (Family::WeightedLaguerre, 1)]);
        let alpha = lsm_pass(&set, 0, &basis, &[1; 40]).unwrap().alpha;
        let (mut num, mut den) = (0.0, 0.0);
        for j in (0..40).filter(|j| j % 4 != 0) {
            num += set.l(0, j) * j as f64;
            den += set.l(0, j);
        }
        assert_relative_eq!(alpha[0], num / den, max_relative = 1e-12);
    }

    #[test]
    fn stopping_rules() {
        let set = fixture(4, 2, false, |j, p| {
            p.s[1] = [80.0, 95.0, 120.0, 99.0][j];
            p.z[1] = (100.0 - p.s[1]).max(0.0);
        });
        let basis = laguerre(2);
        let mut tau = vec![2; 4];
        adjust_stopping(&set, 1, &[0.0; 4], &basis, &mut tau);
        assert_eq!(tau, vec![1, 1, 2, 1]);
        let mut tau = vec![2; 4];
        adjust_stopping(&set, 1, &[1e6; 4], &basis, &mut tau);
        assert_eq!(tau, vec![2; 4]);
    }

    /// Two periods, four paths with distinct states at `t = 1`.
    fn tree() -> PathSet {
        let s1 = [80.0, 90.0, 97.0, 99.0];
        let s2 = [85.0, 70.0, 110.0, 92.0];
        fixture(4, 2, false, move |j, p| {
            p.s = vec![95.0, s1[j], s2[j]];
            p.v = vec![0.1, 0.05 + 0.1 * j as f64, 0.1];
            for t in 0..3 {
                p.z[t] = (100.0 - p.s[t]).max(0.0);
            }
        })
    }

    #[test]
    fn lsm_recovers_the_enumerated_optimum() {
        let set = tree();
        // Exercise at t = 1 iff Z_1 >= Z_2; at t = 0 compare with the mean.
        let per_path: Vec<f64> = (0..4).map(|j| set.z(1, j).max(set.z(2, j))).collect();
        let optimum = set.z(0, 0).max(per_path.iter().sum::<f64>() / 4.0);
        let (report, tau) = run_pricer_detailed(&set, &laguerre(2), &Method::Lsm { strict: true }).unwrap();
        assert_eq!(tau, vec![1, 2, 1, 2]);
        assert_relative_eq!(report.price, optimum, max_relative = 1e-9);
    }

    #[test]
    fn sa_stays_below_the_enumerated_optimum() {
        let set = tree();
        let per_path: Vec<f64> = (0..4).map(|j| set.z(1, j).max(set.z(2, j))).collect();
        let optimum = set.z(0, 0).max(per_path.iter().sum::<f64>() / 4.0);
        for gamma in [0.1, 0.5, 1.0, 2.0] {
            let report = run_pricer(&set, &laguerre(2), &Method::Sa { gamma }).unwrap();
            assert!(report.price <= optimum + 2.0 * report.std_error + 1e-12);
        }
    }

    #[test]
    fn price_reductions() {
        let set = fixture(5, 3, false, |j, p| p.z[2] = j as f64);
        assert_eq!(price(&set, &[2; 5]).unwrap().0, 2.0);

        let payoff = Instrument::new(InstrumentKind::EuropeanPut, 100.0).payoff(0.0, 4);
        let set = PathSet::generate(Engine::Explicit, 3, 4, 1, payoff, Columns::default(), |_, p| {
            for t in 0..=4 {
                p.s[t] = 99.0;
                p.z[t] = payoff.at(t, 99.0, 0.0);
            }
        });
        let (v, se) = price(&set, &[4; 3]).unwrap();
        assert_eq!((v, se), (1.0, 0.0));
    }

    #[test]
    fn zero_weights_are_an_error() {
        let set = fixture(3, 1, true, |_, p| p.l[1] = 0.0);
        assert!(matches!(price(&set, &[1; 3]), Err(Error::ZeroWeight)));
    }

    #[test]
    fn deterministic_path_matches_dynamic_programming() {
        let payoff = Instrument::american_put(100.0).payoff(0.02, 6);
        let spots = [100.0, 97.0, 93.0, 95.0, 91.0, 96.0, 99.0];
        let set = PathSet::generate(Engine::Explicit, 1, 6, 1, payoff, Columns::default(), |_, p| {
            for t in 0..=6 {
                p.s[t] = spots[t];
                p.v[t] = 0.0;
                p.z[t] = payoff.at(t, spots[t], 0.0);
            }
        });
        let best = (0..=6).map(|t| set.z(t, 0)).fold(0.0, f64::max);
        let report = run_pricer(&set, &laguerre(3), &Method::Lsm { strict: true }).unwrap();
        assert_relative_eq!(report.price, best, max_relative = 1e-12);
    }

    #[test]
    fn basis_dimension_is_checked() {
        let set = tree();
        let basis = BasisSet::uniform(Family::WeightedLaguerre, 2, 3);
        assert!(matches!(
            run_pricer(&set, &basis, &Method::Sa { gamma: 1.0 }),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn strict_lsm_reports_singular_systems() {
        // Two identical basis columns make A exactly singular.
        let set = fixture(20, 1, false, |j, p| {
            p.s[0] = 80.0 + j as f64;
            p.z[0] = 1.0;
            p.z[1] = 2.0;
        });
        let basis = BasisSet::new(vec![(Family::WeightedLaguerre, 3), (Family::WeightedLaguerre, 2)]);
        // V = 0 makes the second V function equal to the first.
        let err = run_pricer(&set, &basis, &Method::Lsm { strict: true }).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix { time: 0, .. }), "{err:?}");
        let report = run_pricer(&set, &basis, &Method::Lsm { strict: false }).unwrap();
        assert_eq!(report.singular_times, vec![0]);
    }

    fn exact_put(s0: f64) -> PathSet {
        let kappa = 0.61;
        let params = ModelParams {
            mu: 0.0319,
            nu: kappa * kappa / 2.0,
            rho: -0.7,
            varrho: 6.21,
            kappa,
            s0,
            v0: 0.0102,
        };
        let cfg = EngineConfig {
            engine: Engine::Explicit,
            n_particles: 20_000,
            periods: 50,
            substeps: 2,
            rule: QuadratureRule::Simpson13,
            epsilon: 1e-4,
            seed: 5,
        };
        simulate(&params, &cfg, &Instrument::american_put(100.0)).unwrap()
    }

    #[test]
    fn sa_and_lsm_agree_when_well_conditioned() {
        let set = exact_put(100.0);
        let basis = laguerre(2);
        let lsm = run_pricer(&set, &basis, &Method::Lsm { strict: false }).unwrap();
        let sa = run_pricer(&set, &basis, &Method::Sa { gamma: 2.115 }).unwrap();
        if lsm.condition_max.is_some_and(|c| c < 1e6) {
            let pooled = (sa.std_error.powi(2) + lsm.std_error.powi(2)).sqrt();
            assert!((sa.price - lsm.price).abs() <= 2.0 * pooled, "{} vs {}", sa.price, lsm.price);
        } else {
            panic!("fixture is ill-conditioned: {:?}", lsm.condition_max);
        }
    }

    #[test]
    fn put_value_decreases_with_spot() {
        let basis = laguerre(2);
        let prices: Vec<(f64, f64)> = [90.0, 100.0, 110.0]
            .iter()
            .map(|&s0| {
                let r = run_pricer(&exact_put(s0), &basis, &Method::Sa { gamma: 2.115 }).unwrap();
                (r.price, r.std_error)
            })
            .collect();
        for w in prices.windows(2) {
            assert!(w[1].0 <= w[0].0 + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt(), "{prices:?}");
        }
    }

    proptest! {
        #[test]
        fn stopping_is_invariant_to_basis_scale(
            e in proptest::collection::vec(-2.0f64..2.0, 4),
            alpha in proptest::collection::vec(-5.0f64..5.0, 4),
            z in 0.01f64..10.0,
            c in 0.01f64..100.0,
        ) {
            let scaled_e: Vec<f64> = e.iter().map(|x| x * c).collect();
            let scaled_a: Vec<f64> = alpha.iter().map(|x| x / c).collect();
            let plain = z >= dot(&alpha, &e);
            let scaled = z >= dot(&scaled_a, &scaled_e);
            let margin = (z - dot(&alpha, &e)).abs();
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(plain, scaled);
        }
    }
}
