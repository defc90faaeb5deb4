//! Simulated particle paths on the integer decision grid.
//!
//! Storage is time-major (`index = t * N + j`) because the pricers sweep
//! all particles at one decision time before moving to the previous one.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::payoffs::Payoff;

/// Path generator behind a [`PathSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Euler,
    Milstein,
    /// Exact factor construction; requires `nu = n kappa^2 / 4`.
    Explicit,
    /// Closest-explicit construction with likelihood weights.
    Weighted,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Euler => "euler",
            Engine::Milstein => "milstein",
            Engine::Explicit => "explicit",
            Engine::Weighted => "weighted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Some(Engine::Euler),
            "milstein" => Some(Engine::Milstein),
            "explicit" => Some(Engine::Explicit),
            "weighted" => Some(Engine::Weighted),
            _ => None,
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Engine::Euler | Engine::Milstein)
    }
}

/// One particle's trajectory at decision times `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticlePath {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    /// Likelihood weight; all ones for unweighted engines.
    pub l: Vec<f64>,
    /// Running average of the price (zero at `t = 0`).
    pub r: Vec<f64>,
    /// Discounted payoff.
    pub z: Vec<f64>,
    /// Weight-freeze time, `T` if the variance never fell to the floor.
    pub eta: usize,
    /// First time a discretised variance went negative (baseline engines).
    pub break_time: Option<f64>,
}

impl ParticlePath {
    pub fn new(periods: usize) -> Self {
        ParticlePath {
            s: vec![0.0; periods + 1],
            v: vec![0.0; periods + 1],
            l: vec![1.0; periods + 1],
            r: vec![0.0; periods + 1],
            z: vec![0.0; periods + 1],
            eta: periods,
            break_time: None,
        }
    }

    pub fn periods(&self) -> usize {
        self.s.len() - 1
    }
}

/// Which optional columns a [`PathSet`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Columns {
    pub weights: bool,
    pub average: bool,
    pub breaks: bool,
}

/// `N` particle paths plus their discounted payoffs.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub engine: Engine,
    pub n_particles: usize,
    pub periods: usize,
    pub substeps: usize,
    pub payoff: Payoff,
    s: Vec<f64>,
    v: Vec<f64>,
    z: Vec<f64>,
    l: Option<Vec<f64>>,
    r: Option<Vec<f64>>,
    eta: Vec<u32>,
    break_time: Option<Vec<f64>>,
}

/// Particles simulated per work unit.
const CHUNK: usize = 1024;

impl PathSet {
    /// Runs `fill(j, path)` for every particle and gathers the results.
    ///
    /// Work is spread over the rayon pool in fixed chunks; the output depends
    /// only on `fill`, never on the worker count.
    pub fn generate<F>(
        engine: Engine,
        n_particles: usize,
        periods: usize,
        substeps: usize,
        payoff: Payoff,
        columns: Columns,
        fill: F,
    ) -> PathSet
    where
        F: Fn(usize, &mut ParticlePath) + Sync,
    {
        let cells = n_particles * (periods + 1);
        let mut set = PathSet {
            engine,
            n_particles,
            periods,
            substeps,
            payoff,
            s: vec![0.0; cells],
            v: vec![0.0; cells],
            z: vec![0.0; cells],
            l: columns.weights.then(|| vec![1.0; cells]),
            r: columns.average.then(|| vec![0.0; cells]),
            eta: vec![periods as u32; n_particles],
            break_time: columns.breaks.then(|| vec![f64::INFINITY; n_particles]),
        };
        let chunks: Vec<usize> = (0..n_particles).step_by(CHUNK).collect();
        let batch = rayon::current_num_threads().max(1) * 4;
        for group in chunks.chunks(batch) {
            let done: Vec<(usize, Vec<ParticlePath>)> = group
                .par_iter()
                .map(|&start| {
                    let end = (start + CHUNK).min(n_particles);
                    let mut out = Vec::with_capacity(end - start);
                    for j in start..end {
                        let mut path = ParticlePath::new(periods);
                        fill(j, &mut path);
                        out.push(path);
                    }
                    (start, out)
                })
                .collect();
            for (start, paths) in done {
                for (offset, path) in paths.into_iter().enumerate() {
                    set.store(start + offset, &path);
                }
            }
        }
        set
    }

    fn store(&mut self, j: usize, p: &ParticlePath) {
        let n = self.n_particles;
        for t in 0..=self.periods {
            let i = t * n + j;
            self.s[i] = p.s[t];
            self.v[i] = p.v[t];
            self.z[i] = p.z[t];
            if let Some(l) = self.l.as_mut() {
                l[i] = p.l[t];
            }
            if let Some(r) = self.r.as_mut() {
                r[i] = p.r[t];
            }
        }
        self.eta[j] = p.eta as u32;
        if let Some(b) = self.break_time.as_mut() {
            b[j] = p.break_time.unwrap_or(f64::INFINITY);
        }
    }

    #[inline]
    fn idx(&self, t: usize, j: usize) -> usize {
        debug_assert!(t <= self.periods && j < self.n_particles);
        t * self.n_particles + j
    }

    #[inline]
    pub fn s(&self, t: usize, j: usize) -> f64 {
        self.s[self.idx(t, j)]
    }

    #[inline]
    pub fn v(&self, t: usize, j: usize) -> f64 {
        self.v[self.idx(t, j)]
    }

    #[inline]
    pub fn z(&self, t: usize, j: usize) -> f64 {
        self.z[self.idx(t, j)]
    }

    #[inline]
    pub fn l(&self, t: usize, j: usize) -> f64 {
        match &self.l {
            Some(l) => l[self.idx(t, j)],
            None => 1.0,
        }
    }

    #[inline]
    pub fn r(&self, t: usize, j: usize) -> f64 {
        match &self.r {
            Some(r) => r[self.idx(t, j)],
            None => 0.0,
        }
    }

    pub fn has_weights(&self) -> bool {
        self.l.is_some()
    }

    pub fn has_average(&self) -> bool {
        self.r.is_some()
    }

    pub fn eta(&self, j: usize) -> usize {
        self.eta[j] as usize
    }

    /// Particles whose weight froze before the horizon.
    pub fn eta_trigger_count(&self) -> usize {
        self.eta.iter().filter(|&&e| (e as usize) < self.periods).count()
    }

    pub fn break_time(&self, j: usize) -> Option<f64> {
        self.break_time
            .as_ref()
            .map(|b| b[j])
            .filter(|b| b.is_finite())
    }

    pub fn break_times(&self) -> Option<&[f64]> {
        self.break_time.as_deref()
    }

    pub fn s_row(&self, t: usize) -> &[f64] {
        let n = self.n_particles;
        &self.s[t * n..(t + 1) * n]
    }

    pub fn v_row(&self, t: usize) -> &[f64] {
        let n = self.n_particles;
        &self.v[t * n..(t + 1) * n]
    }

    pub fn z_row(&self, t: usize) -> &[f64] {
        let n = self.n_particles;
        &self.z[t * n..(t + 1) * n]
    }

    pub fn l_row(&self, t: usize) -> Option<&[f64]> {
        let n = self.n_particles;
        self.l.as_ref().map(|l| &l[t * n..(t + 1) * n])
    }

    /// Copies one particle out of the set.
    pub fn particle(&self, j: usize) -> ParticlePath {
        let mut p = ParticlePath::new(self.periods);
        for t in 0..=self.periods {
            p.s[t] = self.s(t, j);
            p.v[t] = self.v(t, j);
            p.z[t] = self.z(t, j);
            p.l[t] = self.l(t, j);
            p.r[t] = self.r(t, j);
        }
        p.eta = self.eta(j);
        p.break_time = self.break_time(j);
        p
    }

    /// Whether the weight of particle `j` is frozen at time `t`.
    pub fn eta_flag(&self, t: usize, j: usize) -> bool {
        let eta = self.eta(j);
        eta < self.periods && t >= eta
    }

    /// Writes one CSV row per `(particle, time)`.
    ///
    /// Columns: `j,t,S,V,L,eta_flag,R`, plus `break_time` for the Euler and
    /// Milstein engines. `R` is empty when the running average was not
    /// tracked; `break_time` is empty for paths that never broke.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let breaks = self.break_time.is_some();
        write!(w, "j,t,S,V,L,eta_flag,R")?;
        if breaks {
            write!(w, ",break_time")?;
        }
        writeln!(w)?;
        for j in 0..self.n_particles {
            for t in 0..=self.periods {
                write!(
                    w,
                    "{},{},{},{},{},{},",
                    j,
                    t,
                    self.s(t, j),
                    self.v(t, j),
                    self.l(t, j),
                    self.eta_flag(t, j) as u8
                )?;
                if self.r.is_some() {
                    write!(w, "{}", self.r(t, j))?;
                }
                if breaks {
                    write!(w, ",")?;
                    if let Some(b) = self.break_time(j) {
                        write!(w, "{b}")?;
                    }
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Little-endian binary dump.
    ///
    /// Header: the ASCII magic `HSTP`, a `u32` version (1), `u64` particle
    /// count, `u64` period count. Then one 45-byte record per
    /// `(particle, time)` in particle-major order: `u32 j`, `u32 t`,
    /// `f64 S`, `f64 V`, `f64 L`, `u8 eta_flag`, `f64 R` (NaN when not
    /// tracked), `f64 break_time` (infinity when none).
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"HSTP")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.n_particles as u64).to_le_bytes())?;
        w.write_all(&(self.periods as u64).to_le_bytes())?;
        for j in 0..self.n_particles {
            let brk = self.break_time(j).unwrap_or(f64::INFINITY);
            for t in 0..=self.periods {
                w.write_all(&(j as u32).to_le_bytes())?;
                w.write_all(&(t as u32).to_le_bytes())?;
                w.write_all(&self.s(t, j).to_le_bytes())?;
                w.write_all(&self.v(t, j).to_le_bytes())?;
                w.write_all(&self.l(t, j).to_le_bytes())?;
                w.write_all(&[self.eta_flag(t, j) as u8])?;
                let r = if self.r.is_some() { self.r(t, j) } else { f64::NAN };
                w.write_all(&r.to_le_bytes())?;
                w.write_all(&brk.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Size in bytes of one binary record.
pub const BINARY_RECORD_LEN: usize = 4 + 4 + 8 * 3 + 1 + 8 + 8;
/// Size in bytes of the binary header.
pub const BINARY_HEADER_LEN: usize = 4 + 4 + 8 + 8;
