//! Shared-noise coupling of the schemes to a fine-mesh reference path.
//!
//! One set of fine Brownian increments `(dB, dbeta)` drives a fine implicit
//! Milstein reference. Coarser Euler and Milstein runs use block sums of the
//! same increments. The explicit engine is driven by OU factors built from
//! `dW = u dbeta + (I - u u') xi sqrt(h)` with `u = Y / |Y|`, whose variance
//! solves the same SDE as the reference with the same `beta`, and by a price
//! shock equal to the normalised fine sum of `sqrt(V) dB`.

use crate::baseline::{simulate_discrete, DiscretePath, Scheme};
use crate::engine::{EngineConfig, ExplicitSimulator};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::paths::{Engine, ParticlePath};
use crate::payoffs::Instrument;
use crate::quadrature::QuadratureRule;
use crate::rng::{FixedNormals, GaussianSource, RngStream};

/// Default cap on the memory one fine path may hold.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

/// Fine Brownian increments for one path over `periods` unit periods.
#[derive(Debug, Clone, PartialEq)]
pub struct FineNoise {
    pub periods: usize,
    pub fine_m: usize,
    pub db: Vec<f64>,
    pub dbeta: Vec<f64>,
    /// Seed of the extra normals used when the factor count exceeds one.
    pub aux_seed: (u64, u64),
}

impl FineNoise {
    pub fn generate(
        periods: usize,
        fine_m: usize,
        seed: u64,
        path_id: u64,
        budget_bytes: usize,
    ) -> Result<Self> {
        let steps = periods * fine_m;
        let required = steps.saturating_mul(2 * std::mem::size_of::<f64>());
        if required > budget_bytes {
            return Err(Error::MemoryBudget {
                required,
                budget: budget_bytes,
            });
        }
        let h = (1.0 / fine_m as f64).sqrt();
        let mut rng = RngStream::new(seed, 2 * path_id);
        let mut db = Vec::with_capacity(steps);
        let mut dbeta = Vec::with_capacity(steps);
        for _ in 0..steps {
            let (a, b) = rng.gaussian_pair();
            db.push(h * a);
            dbeta.push(h * b);
        }
        Ok(FineNoise {
            periods,
            fine_m,
            db,
            dbeta,
            aux_seed: (seed, 2 * path_id + 1),
        })
    }

    pub fn steps(&self) -> usize {
        self.db.len()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.fine_m as f64
    }

    fn ratio(&self, substeps: usize) -> Result<usize> {
        if substeps == 0 || self.fine_m % substeps != 0 {
            return Err(Error::Config(format!(
                "{substeps} substeps do not divide the fine mesh of {}",
                self.fine_m
            )));
        }
        Ok(self.fine_m / substeps)
    }

    /// Block sums of the increments on a grid of `substeps` per period.
    pub fn aggregate(&self, substeps: usize) -> Result<Vec<(f64, f64)>> {
        let r = self.ratio(substeps)?;
        Ok(self
            .db
            .chunks(r)
            .zip(self.dbeta.chunks(r))
            .map(|(a, b)| (a.iter().sum(), b.iter().sum()))
            .collect())
    }
}

/// Fine implicit Milstein reference driven by `noise`.
pub fn ground_truth_paths(params: &ModelParams, noise: &FineNoise) -> DiscretePath {
    let scale = 1.0 / noise.h().sqrt();
    let values = noise
        .db
        .iter()
        .zip(&noise.dbeta)
        .flat_map(|(a, b)| [a * scale, b * scale])
        .collect();
    simulate_discrete(
        params,
        Scheme::Milstein,
        noise.periods,
        noise.fine_m,
        &mut FixedNormals::new(values, 0.0),
    )
}

/// Integer-time `(S, V)` of a coarse Euler or Milstein run on the shared
/// increments.
pub fn drive_scheme(
    params: &ModelParams,
    scheme: Scheme,
    substeps: usize,
    noise: &FineNoise,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let blocks = noise.aggregate(substeps)?;
    let scale = (substeps as f64).sqrt();
    let values = blocks.iter().flat_map(|&(a, b)| [a * scale, b * scale]).collect();
    let path = simulate_discrete(
        params,
        scheme,
        noise.periods,
        substeps,
        &mut FixedNormals::new(values, 0.0),
    );
    Ok(path.at_periods())
}

/// Integer-time `(S, V)` of the explicit engine on the shared increments.
pub fn drive_explicit(
    params: &ModelParams,
    rule: QuadratureRule,
    substeps: usize,
    noise: &FineNoise,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let config = EngineConfig {
        engine: Engine::Explicit,
        n_particles: 1,
        periods: noise.periods,
        substeps,
        rule,
        epsilon: f64::MIN_POSITIVE,
        seed: 0,
    };
    let sim = ExplicitSimulator::new(params, &config, &Instrument::american_put(params.s0))?;
    let (vol, price) = explicit_normals(params, sim.ce.n, substeps, noise)?;
    let mut path = ParticlePath::new(noise.periods);
    sim.run_particle(
        &mut FixedNormals::new(vol, 0.0),
        &mut FixedNormals::new(price, 0.0),
        &mut path,
    );
    Ok((path.s, path.v))
}

/// Normals that reproduce the shared noise inside the explicit engine, in
/// the order it consumes them: per substep one pair per two factors, and
/// one price shock per period.
pub fn explicit_normals(
    params: &ModelParams,
    n: usize,
    substeps: usize,
    noise: &FineNoise,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = noise.ratio(substeps)?;
    let h = noise.h();
    let sh = h.sqrt();
    let decay = (-0.5 * params.varrho * h).exp();
    // Discrete variance of a substep's weighted increment sum.
    let norm = (h * (0..r).map(|m| decay.powi(2 * m as i32)).sum::<f64>()).sqrt();
    let mut aux = RngStream::new(noise.aux_seed.0, noise.aux_seed.1);
    let mut y = vec![(params.v0 / n as f64).sqrt(); n];
    let mut acc = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut xi = vec![0.0; n];
    let pairs = n.div_ceil(2);
    let mut vol = Vec::with_capacity(noise.periods * substeps * pairs * 2);
    let mut price = Vec::with_capacity(noise.periods);
    let (mut stoch, mut quad) = (0.0, 0.0);
    for k in 0..noise.steps() {
        let v: f64 = y.iter().map(|x| x * x).sum();
        let norm_y = v.sqrt();
        if n == 1 {
            dw[0] = if y[0] < 0.0 { -noise.dbeta[k] } else { noise.dbeta[k] };
        } else {
            for x in xi.iter_mut() {
                *x = aux.gaussian() * sh;
            }
            let u: Vec<f64> = if norm_y > 0.0 {
                y.iter().map(|x| x / norm_y).collect()
            } else {
                (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()
            };
            let proj: f64 = u.iter().zip(&xi).map(|(a, b)| a * b).sum();
            for i in 0..n {
                dw[i] = u[i] * noise.dbeta[k] + xi[i] - u[i] * proj;
            }
        }
        stoch += norm_y * noise.db[k];
        quad += v * h;
        for i in 0..n {
            acc[i] = decay * acc[i] + dw[i];
            y[i] = decay * y[i] + 0.5 * params.kappa * dw[i];
        }
        if (k + 1) % r == 0 {
            for chunk in acc.chunks(2) {
                vol.push(chunk[0] / norm);
                vol.push(chunk.get(1).map_or(0.0, |x| x / norm));
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
        }
        if (k + 1) % noise.fine_m == 0 {
            price.push(if quad > 0.0 { stoch / quad.sqrt() } else { 0.0 });
            stoch = 0.0;
            quad = 0.0;
        }
    }
    Ok((vol, price))
}

/// Sum over `t = 1..=T` of the squared price and variance differences.
pub fn squared_error(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)) -> f64 {
    (1..a.0.len())
        .map(|t| (a.0[t] - b.0[t]).powi(2) + (a.1[t] - b.1[t]).powi(2))
        .sum()
}
