//! Reproducible per-particle random streams.
//!
//! Every particle (or replication) owns a [`RngStream`] keyed by
//! `(seed, stream_id)`. The stream is a ChaCha8 keystream with the seed as
//! key and the particle index as stream number, so particle `j` sees the
//! same draws no matter how many other particles are simulated or which
//! worker thread runs it.

use std::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Source of standard normal draws.
///
/// The path engines are written against this trait so that the same code
/// runs on fresh random numbers or on increments replayed from a shared
/// fine-grid Brownian path.
pub trait GaussianSource {
    /// Two independent standard normals.
    fn gaussian_pair(&mut self) -> (f64, f64);

    /// One standard normal.
    fn gaussian(&mut self) -> f64 {
        self.gaussian_pair().0
    }
}

/// Box-Muller transform of two uniforms.
///
/// `u1` must lie in `(0, 1]`; see [`RngStream::gaussian_pair`] for the
/// guard against zero.
#[inline]
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let (sin, cos) = (TAU * u2).sin_cos();
    (r * cos, r * sin)
}

/// Smallest positive value on the 53-bit uniform grid.
const MIN_UNIFORM: f64 = 1.0 / (1u64 << 53) as f64;

/// Counter-based stream of uniforms and normals for one particle.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { rng, spare: None }
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * MIN_UNIFORM
    }
}

impl GaussianSource for RngStream {
    #[inline]
    fn gaussian_pair(&mut self) -> (f64, f64) {
        let mut u1 = self.uniform();
        if u1 == 0.0 {
            u1 = MIN_UNIFORM;
        }
        let u2 = self.uniform();
        box_muller(u1, u2)
    }

    /// Single normals hand out the second half of a Box-Muller pair before
    /// drawing a new pair.
    #[inline]
    fn gaussian(&mut self) -> f64 {
        match self.spare.take() {
            Some(z) => z,
            None => {
                let (z0, z1) = self.gaussian_pair();
                self.spare = Some(z1);
                z0
            }
        }
    }
}

/// Replays a fixed list of normals, for tests and noise-free runs.
#[derive(Debug, Clone)]
pub struct FixedNormals {
    values: Vec<f64>,
    pos: usize,
    fill: f64,
}

impl FixedNormals {
    /// Yields `values` in order and `fill` once they are exhausted.
    pub fn new(values: Vec<f64>, fill: f64) -> Self {
        FixedNormals {
            values,
            pos: 0,
            fill,
        }
    }

    /// Every draw is zero.
    pub fn zeros() -> Self {
        FixedNormals::new(Vec::new(), 0.0)
    }

    fn next(&mut self) -> f64 {
        let z = self.values.get(self.pos).copied().unwrap_or(self.fill);
        self.pos += 1;
        z
    }
}

impl GaussianSource for FixedNormals {
    fn gaussian_pair(&mut self) -> (f64, f64) {
        (self.next(), self.next())
    }

    fn gaussian(&mut self) -> f64 {
        self.next()
    }
}
