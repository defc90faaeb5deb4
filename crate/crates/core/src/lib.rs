//! Monte Carlo pricing of path-dependent options under the Heston model.
//!
//! The variance is built as a sum of squared Ornstein-Uhlenbeck factors, so
//! it never goes negative; parameters off the exact lattice
//! `nu = n kappa^2 / 4` are handled by likelihood weighting. Early exercise
//! is priced by backward induction with either a stochastic approximation
//! or a least-squares estimate of the continuation value. Euler and
//! implicit Milstein schemes are included as baselines.

pub mod baseline;
pub mod basis;
pub mod coupling;
pub mod engine;
pub mod error;
pub mod factors;
pub mod model;
pub mod paths;
pub mod payoffs;
pub mod pricer;
pub mod quadrature;
pub mod rng;

pub use basis::{BasisSet, Family};
pub use engine::{simulate, EngineConfig, DEFAULT_EPSILON};
pub use error::{Error, Result};
pub use model::{ClosestExplicit, ModelParams, SimConstants};
pub use paths::{Engine, ParticlePath, PathSet};
pub use payoffs::{Instrument, InstrumentKind, Payoff};
pub use pricer::{run_pricer, Method, PriceReport};
pub use quadrature::QuadratureRule;
pub use rng::{GaussianSource, RngStream};
