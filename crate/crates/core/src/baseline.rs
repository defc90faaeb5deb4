//! Euler-Maruyama and implicit Milstein discretisations of the Heston SDE.
//!
//! Both schemes can propose a negative variance. The first such step is
//! recorded as the break time; the path then continues with `max(v, 0)`
//! inside every square root (full truncation).

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::paths::ParticlePath;
use crate::payoffs::{Instrument, Payoff};
use crate::rng::GaussianSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    Milstein,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
        }
    }
}

/// One Euler step; the normals are drawn as `(Z_B, Z_beta)`.
#[inline]
pub fn euler_step<G: GaussianSource>(
    s: f64,
    v: f64,
    dt: f64,
    params: &ModelParams,
    normals: &mut G,
) -> (f64, f64, bool) {
    let (zb, zbeta) = normals.gaussian_pair();
    let vp = v.max(0.0);
    let sdt = dt.sqrt();
    let a = (1.0 - params.rho * params.rho).max(0.0).sqrt();
    let v_next = v + (params.nu - params.varrho * v) * dt + params.kappa * vp.sqrt() * sdt * zbeta;
    let s_next = s + params.mu * s * dt + s * vp.sqrt() * sdt * (a * zb + params.rho * zbeta);
    (s_next, v_next, v_next < 0.0)
}

/// One implicit Milstein variance step with a log-Euler price step.
#[inline]
pub fn milstein_step<G: GaussianSource>(
    s: f64,
    v: f64,
    dt: f64,
    params: &ModelParams,
    normals: &mut G,
) -> (f64, f64, bool) {
    let (zb, zbeta) = normals.gaussian_pair();
    let vp = v.max(0.0);
    let sdt = dt.sqrt();
    let k = params.kappa;
    let a = (1.0 - params.rho * params.rho).max(0.0).sqrt();
    let v_next = (v + params.nu * dt + k * vp.sqrt() * sdt * zbeta + 0.25 * k * k * dt * (zbeta * zbeta - 1.0))
        / (1.0 + params.varrho * dt);
    let s_next = s * ((params.mu - 0.5 * vp) * dt + vp.sqrt() * sdt * (a * zb + params.rho * zbeta)).exp();
    (s_next, v_next, v_next < 0.0)
}

impl Scheme {
    #[inline]
    pub fn step<G: GaussianSource>(
        self,
        s: f64,
        v: f64,
        dt: f64,
        params: &ModelParams,
        normals: &mut G,
    ) -> (f64, f64, bool) {
        match self {
            Scheme::Euler => euler_step(s, v, dt, params, normals),
            Scheme::Milstein => milstein_step(s, v, dt, params, normals),
        }
    }
}

/// A discretised path on the full step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    /// Price at every step, `T * M + 1` values.
    pub s: Vec<f64>,
    /// Truncated variance `max(v, 0)` at every step.
    pub v: Vec<f64>,
    pub steps_per_period: usize,
    /// First time a proposed variance was negative; infinity if never.
    pub break_time: f64,
}

impl DiscretePath {
    /// Values at the integer decision times.
    pub fn at_periods(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.steps_per_period;
        (
            self.s.iter().step_by(m).copied().collect(),
            self.v.iter().step_by(m).copied().collect(),
        )
    }

    pub fn broke(&self) -> bool {
        self.break_time.is_finite()
    }
}

/// Runs `scheme` for `periods * substeps` steps, keeping every step.
pub fn simulate_discrete<G: GaussianSource>(
    params: &ModelParams,
    scheme: Scheme,
    periods: usize,
    substeps: usize,
    normals: &mut G,
) -> DiscretePath {
    let steps = periods * substeps;
    let dt = 1.0 / substeps as f64;
    let mut out = DiscretePath {
        s: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        steps_per_period: substeps,
        break_time: f64::INFINITY,
    };
    let (mut s, mut v) = (params.s0, params.v0);
    out.s.push(s);
    out.v.push(v);
    for i in 0..steps {
        let (sn, vn, broke) = scheme.step(s, v, dt, params, normals);
        if broke && !out.broke() {
            out.break_time = step_time(i, substeps);
        }
        s = sn;
        v = vn;
        out.s.push(s);
        out.v.push(v.max(0.0));
    }
    out
}

/// Time at the end of global step `i` (zero based): `t - 1 + k / M`.
#[inline]
fn step_time(i: usize, substeps: usize) -> f64 {
    let t = i / substeps;
    let k = i % substeps + 1;
    t as f64 + k as f64 / substeps as f64
}

/// Per-particle driver for the baseline engines, recording integer times.
#[derive(Debug, Clone)]
pub struct BaselineSimulator {
    pub params: ModelParams,
    pub scheme: Scheme,
    substeps: usize,
    periods: usize,
    payoff: Payoff,
}

impl BaselineSimulator {
    pub fn new(
        params: &ModelParams,
        scheme: Scheme,
        config: &EngineConfig,
        instrument: &Instrument,
    ) -> Result<Self> {
        let params = params.validate()?;
        config.validate(&params)?;
        instrument.validate(config.periods)?;
        if !config.engine.is_baseline() {
            return Err(Error::Config(format!(
                "{} is not a discretisation scheme",
                config.engine.name()
            )));
        }
        Ok(BaselineSimulator {
            params,
            scheme,
            substeps: config.substeps,
            periods: config.periods,
            payoff: instrument.payoff(params.mu, config.periods),
        })
    }

    pub fn payoff(&self) -> Payoff {
        self.payoff
    }

    pub fn run_particle<G: GaussianSource>(&self, normals: &mut G, path: &mut ParticlePath) {
        let p = &self.params;
        let m = self.substeps;
        let dt = 1.0 / m as f64;
        let (mut s, mut v, mut r) = (p.s0, p.v0, 0.0);
        path.s[0] = s;
        path.v[0] = v;
        path.r[0] = 0.0;
        path.z[0] = self.payoff.at(0, s, 0.0);
        path.break_time = None;
        for t in 1..=self.periods {
            for k in 1..=m {
                let (sn, vn, broke) = self.scheme.step(s, v, dt, p, normals);
                if broke && path.break_time.is_none() {
                    path.break_time = Some((t - 1) as f64 + k as f64 / m as f64);
                }
                s = sn;
                v = vn;
            }
            r += (s - r) / t as f64;
            path.s[t] = s;
            path.v[t] = v.max(0.0);
            path.r[t] = r;
            path.z[t] = self.payoff.at(t, s, r);
        }
    }
}

/// Masses of first-break times over the intervals `(t-1, t]`,
/// `t = 1..=periods`, plus the surviving mass `tau > periods` last.
pub fn break_histogram(break_times: &[f64], periods: usize) -> Vec<f64> {
    let mut counts = vec![0usize; periods + 1];
    for &b in break_times {
        let slot = if b.is_finite() {
            (b.ceil() as usize).clamp(1, periods + 1) - 1
        } else {
            periods
        };
        counts[slot] += 1;
    }
    let n = break_times.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate;
    use crate::paths::Engine;
    use crate::quadrature::QuadratureRule;
    use crate::rng::{FixedNormals, RngStream};
    use approx::assert_relative_eq;

    fn params(nu_factor: f64) -> ModelParams {
        let kappa = 0.61;
        ModelParams {
            mu: 0.0319,
            nu: nu_factor * kappa * kappa,
            rho: -0.7,
            varrho: 6.21,
            kappa,
            s0: 100.0,
            v0: 0.010201,
        }
    }

    fn config(engine: Engine, n: usize, periods: usize, substeps: usize) -> EngineConfig {
        EngineConfig {
            engine,
            n_particles: n,
            periods,
            substeps,
            rule: QuadratureRule::Trapezoidal,
            epsilon: 1e-4,
            seed: 21,
        }
    }

    #[test]
    fn euler_stationary_point() {
        let mut p = params(0.25);
        p.kappa = 1e-300;
        p.nu = p.varrho * 0.04;
        let (_, v, broke) = euler_step(100.0, 0.04, 0.01, &p, &mut FixedNormals::new(vec![0.3, -1.2], 0.0));
        assert_eq!(v, 0.04);
        assert!(!broke);
    }

    #[test]
    fn milstein_deterministic_reduction() {
        let p = params(0.5);
        let dt = 0.01;
        let (_, v, _) = milstein_step(100.0, 0.03, dt, &p, &mut FixedNormals::zeros());
        let k2 = p.kappa * p.kappa;
        // With Z = 0 only the -kappa^2 dt / 4 Milstein correction remains.
        assert_relative_eq!(v, (0.03 + p.nu * dt - 0.25 * k2 * dt) / (1.0 + p.varrho * dt), max_relative = 1e-15);
        let mut q = p;
        q.kappa = 1e-200;
        let (_, v, _) = milstein_step(100.0, 0.03, dt, &q, &mut FixedNormals::zeros());
        assert_relative_eq!(v, (0.03 + q.nu * dt) / (1.0 + q.varrho * dt), max_relative = 1e-15);
    }

    #[test]
    fn milstein_cannot_break_at_the_quarter_level() {
        // At nu = kappa^2 / 4 the numerator is a perfect square.
        let p = params(0.25);
        let mut rng = RngStream::new(1, 1);
        let path = simulate_discrete(&p, Scheme::Milstein, 50, 100, &mut rng);
        assert!(!path.broke());
    }

    #[test]
    fn break_times_and_histogram() {
        assert_eq!(step_time(0, 100), 0.01);
        assert_eq!(step_time(99, 100), 1.0);
        assert_eq!(step_time(100, 100), 1.01);
        let h = break_histogram(&[0.5, 1.0, 1.01, f64::INFINITY], 3);
        assert_eq!(h, vec![0.5, 0.25, 0.0, 0.25]);
    }

    #[test]
    fn euler_breaks_early_at_the_quarter_level() {
        let set = simulate(&params(0.25), &config(Engine::Euler, 2000, 2, 100), &Instrument::american_put(100.0)).unwrap();
        let h = break_histogram(set.break_times().unwrap(), 2);
        assert!(h[0] > 0.93, "{h:?}");
    }

    #[test]
    fn pathset_matches_discrete_path() {
        let p = params(0.5);
        let set = simulate(&p, &config(Engine::Milstein, 3, 4, 10), &Instrument::american_put(100.0)).unwrap();
        let path = simulate_discrete(&p, Scheme::Milstein, 4, 10, &mut crate::engine::vol_stream(21, 2));
        let (s, v) = path.at_periods();
        for t in 0..=4 {
            assert_eq!(set.s(t, 2), s[t]);
            assert_eq!(set.v(t, 2), v[t]);
        }
    }

    #[test]
    fn raising_nu_delays_breaks() {
        // The Euler variance map is not monotone in v (the diffusion term
        // can push a larger v further below zero), so single paths may break
        // earlier at the higher level. The first-break law still shifts later.
        let n = 1000;
        let mut earlier = 0;
        let mut lo_times = Vec::with_capacity(n);
        let mut hi_times = Vec::with_capacity(n);
        for j in 0..n as u64 {
            let lo = simulate_discrete(&params(0.25), Scheme::Euler, 5, 100, &mut RngStream::new(4, j));
            let hi = simulate_discrete(&params(0.5), Scheme::Euler, 5, 100, &mut RngStream::new(4, j));
            earlier += (hi.break_time < lo.break_time) as usize;
            lo_times.push(lo.break_time);
            hi_times.push(hi.break_time);
        }
        println!("paths breaking earlier at the higher level: {earlier} of {n}");
        assert!(earlier * 20 < n);
        let lo = break_histogram(&lo_times, 5);
        let hi = break_histogram(&hi_times, 5);
        let (mut cl, mut ch) = (0.0, 0.0);
        for t in 0..5 {
            cl += lo[t];
            ch += hi[t];
            assert!(ch <= cl, "by t={}: {ch} > {cl}", t + 1);
        }
    }

    #[test]
    fn schemes_agree_as_dt_shrinks() {
        let p = params(0.5);
        let n = 10_000;
        let term = |scheme| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let path = simulate_discrete(&p, scheme, 1, 2000, &mut RngStream::new(8, j as u64));
                    *path.s.last().unwrap()
                })
                .collect()
        };
        let e = term(Scheme::Euler);
        let m = term(Scheme::Milstein);
        let stats = |x: &[f64]| {
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            (mean, var / n as f64)
        };
        let (me, ve) = stats(&e);
        let (mm, vm) = stats(&m);
        assert!((me - mm).abs() < 3.0 * (ve + vm).sqrt());
    }

    #[test]
    fn determinism() {
        let p = params(0.5);
        let a = simulate_discrete(&p, Scheme::Euler, 3, 50, &mut RngStream::new(9, 3));
        let b = simulate_discrete(&p, Scheme::Euler, 3, 50, &mut RngStream::new(9, 3));
        assert_eq!(a, b);
    }
}
