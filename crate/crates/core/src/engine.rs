//! Explicit and weighted Heston path engines.
//!
//! Each decision period advances the OU factors over `M` substeps, forms
//! `int V` by quadrature and draws the log-price increment from its exact
//! conditional Gaussian law. In weighted mode the closest explicit model is
//! simulated and a likelihood weight carries the paths back to the target
//! parameters until the variance first touches the floor `epsilon`.

use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineSimulator, Scheme};
use crate::error::{Error, Result};
use crate::factors::FactorState;
use crate::model::{ClosestExplicit, ModelParams, OuStep, SimConstants};
use crate::paths::{Columns, Engine, ParticlePath, PathSet};
use crate::payoffs::{Instrument, Payoff};
use crate::quadrature::{dot, QuadratureRule};
use crate::rng::{GaussianSource, RngStream};

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Simulation settings shared by all engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub engine: Engine,
    pub n_particles: usize,
    pub periods: usize,
    /// Substeps per decision period.
    pub substeps: usize,
    pub rule: QuadratureRule,
    /// Variance floor below which likelihood weights freeze.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            engine: Engine::Weighted,
            n_particles: 10_000,
            periods: 50,
            substeps: 2,
            rule: QuadratureRule::Simpson13,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("particle count must be positive".into()));
        }
        if self.periods == 0 {
            return Err(Error::Config("period count must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substep count must be positive".into()));
        }
        if self.engine.is_baseline() {
            return Ok(());
        }
        self.rule.check(self.substeps)?;
        if self.engine == Engine::Explicit && !params.closest_explicit().exact {
            return Err(Error::Config(format!(
                "explicit engine needs nu = n kappa^2 / 4; 4 nu / kappa^2 = {}",
                4.0 * params.nu / (params.kappa * params.kappa)
            )));
        }
        if self.engine == Engine::Weighted && !(self.epsilon > 0.0 && self.epsilon < params.v0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                constraint: "in (0, v0)",
                value: self.epsilon,
            });
        }
        Ok(())
    }
}

/// Advances the price over one period given `int V` and `V_t - V_{t-1}`.
#[inline]
pub fn price_step<G: GaussianSource>(
    s_prev: f64,
    int_v: f64,
    dv: f64,
    consts: &SimConstants,
    normals: &mut G,
) -> f64 {
    let g = consts.a * int_v.sqrt() * normals.gaussian();
    s_prev * (g + consts.b + consts.c * int_v + consts.d * dv).exp()
}

/// Likelihood update over one period.
#[inline]
pub fn weight_step(
    l_prev: f64,
    v_prev: f64,
    v_t: f64,
    int_recip_v: f64,
    consts: &SimConstants,
) -> f64 {
    l_prev * (consts.e * ((v_t / v_prev).ln() + consts.varrho) + consts.f * int_recip_v).exp()
}

/// Per-particle driver for the explicit and weighted engines.
#[derive(Debug, Clone)]
pub struct ExplicitSimulator {
    pub params: ModelParams,
    pub ce: ClosestExplicit,
    pub consts: SimConstants,
    step: OuStep,
    weights: Vec<f64>,
    periods: usize,
    epsilon: f64,
    weighted: bool,
    payoff: Payoff,
}

impl ExplicitSimulator {
    pub fn new(params: &ModelParams, config: &EngineConfig, instrument: &Instrument) -> Result<Self> {
        let params = params.validate()?;
        config.validate(&params)?;
        instrument.validate(config.periods)?;
        if config.engine.is_baseline() {
            return Err(Error::Config(format!(
                "{} is not an explicit engine",
                config.engine.name()
            )));
        }
        let ce = params.closest_explicit();
        let consts = SimConstants::new(&params, &ce);
        Ok(ExplicitSimulator {
            params,
            ce,
            consts,
            step: consts.ou_step(1.0 / config.substeps as f64),
            weights: config.rule.weights(config.substeps)?,
            periods: config.periods,
            epsilon: config.epsilon,
            weighted: config.engine == Engine::Weighted,
            payoff: instrument.payoff(params.mu, config.periods),
        })
    }

    pub fn payoff(&self) -> Payoff {
        self.payoff
    }

    pub fn substeps(&self) -> usize {
        self.weights.len() - 1
    }

    /// Simulates one particle. Factor draws come from `vol`, the one
    /// price shock per period from `price`.
    pub fn run_particle<V: GaussianSource, P: GaussianSource>(
        &self,
        vol: &mut V,
        price: &mut P,
        path: &mut ParticlePath,
    ) {
        let p = &self.params;
        let c = &self.consts;
        let mut factors = FactorState::init(p.v0, self.ce.n);
        let mut grid = vec![0.0; self.weights.len()];
        let last = grid.len() - 1;
        let (mut s, mut v, mut r, mut l) = (p.s0, p.v0, 0.0, 1.0);
        let mut frozen = false;
        path.s[0] = s;
        path.v[0] = v;
        path.l[0] = 1.0;
        path.r[0] = 0.0;
        path.z[0] = self.payoff.at(0, s, 0.0);
        path.eta = self.periods;
        for t in 1..=self.periods {
            grid[0] = v;
            factors.advance_period(&self.step, &mut grid, vol);
            let int_v = dot(&self.weights, &grid);
            let v_t = grid[last];
            s = price_step(s, int_v, v_t - v, c, price);
            r += (s - r) / t as f64;
            if self.weighted && !frozen {
                if grid[1..].iter().all(|&x| x > self.epsilon) {
                    let recip: f64 = self.weights.iter().zip(&grid).map(|(w, x)| w / x).sum();
                    l = weight_step(l, v, v_t, recip, c);
                } else {
                    path.eta = t - 1;
                    frozen = true;
                }
            }
            v = v_t;
            path.s[t] = s;
            path.v[t] = v;
            path.r[t] = r;
            path.l[t] = l;
            path.z[t] = self.payoff.at(t, s, r);
        }
    }
}

/// Stream ids for particle `j`: factor draws and price draws never share a
/// stream.
#[inline]
pub fn vol_stream(seed: u64, j: usize) -> RngStream {
    RngStream::new(seed, 2 * j as u64)
}

#[inline]
pub fn price_stream(seed: u64, j: usize) -> RngStream {
    RngStream::new(seed, 2 * j as u64 + 1)
}

/// Simulates `N` paths with the configured engine.
///
/// Particle `j` always uses the same random streams, so its path does not
/// depend on `N` or on the worker count.
pub fn simulate(params: &ModelParams, config: &EngineConfig, instrument: &Instrument) -> Result<PathSet> {
    let seed = config.seed;
    let asian = instrument.kind.is_asian();
    match config.engine {
        Engine::Explicit | Engine::Weighted => {
            let sim = ExplicitSimulator::new(params, config, instrument)?;
            let columns = Columns {
                weights: sim.weighted,
                average: asian,
                breaks: false,
            };
            Ok(PathSet::generate(
                config.engine,
                config.n_particles,
                config.periods,
                config.substeps,
                sim.payoff(),
                columns,
                |j, path| {
                    let mut vol = vol_stream(seed, j);
                    let mut price = price_stream(seed, j);
                    sim.run_particle(&mut vol, &mut price, path);
                },
            ))
        }
        Engine::Euler | Engine::Milstein => {
            let scheme = if config.engine == Engine::Euler {
                Scheme::Euler
            } else {
                Scheme::Milstein
            };
            let sim = BaselineSimulator::new(params, scheme, config, instrument)?;
            let columns = Columns {
                weights: false,
                average: asian,
                breaks: true,
            };
            Ok(PathSet::generate(
                config.engine,
                config.n_particles,
                config.periods,
                config.substeps,
                sim.payoff(),
                columns,
                |j, path| {
                    let mut normals = vol_stream(seed, j);
                    sim.run_particle(&mut normals, path);
                },
            ))
        }
    }
}
