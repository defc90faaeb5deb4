//! Experiment configuration.
//!
//! A config is a flat set of keys, read from TOML (`key = value` lines) or
//! from the equivalent JSON object; the format follows the file extension.
//! Comparison experiments list their variants in `candidates`, one string
//! each: an engine name followed by `key=value` overrides of the base
//! settings, e.g. `"milstein substeps=85 particles=7225"`.

use std::path::{Path, PathBuf};

use heston_core::{
    BasisSet, Engine, EngineConfig, Family, Instrument, InstrumentKind, Method, ModelParams, QuadratureRule,
    DEFAULT_EPSILON,
};
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    #[serde(alias = "break")]
    BreakFrequency,
    #[serde(alias = "rms")]
    RmsComparison,
    #[serde(alias = "price")]
    PriceComparison,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PricerKind {
    Sa,
    Lsm,
    None,
}

impl PricerKind {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sa" => Some(PricerKind::Sa),
            "lsm" => Some(PricerKind::Lsm),
            "none" => Some(PricerKind::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub title: String,
    pub notes: String,

    pub engine: Engine,
    pub pricer: PricerKind,
    pub strict: bool,

    pub mu: f64,
    /// Absolute `nu`; exclusive with `nu_kappa2`.
    pub nu: Option<f64>,
    /// `nu` as a multiple of `kappa^2`.
    pub nu_kappa2: Option<f64>,
    pub rho: f64,
    pub varrho: f64,
    pub kappa: f64,
    pub s0: f64,
    pub v0: f64,

    pub instrument: InstrumentKind,
    pub strike: f64,
    pub lockout: usize,

    pub particles: usize,
    pub substeps: usize,
    pub periods: usize,
    pub rule: QuadratureRule,
    pub epsilon: f64,

    pub basis: Family,
    /// Basis functions per state coordinate.
    pub basis_j: usize,
    pub gamma: f64,

    pub seeds: Vec<u64>,

    /// Fine substeps per period of the shared-noise reference.
    pub fine_substeps: usize,
    /// Particle count for timing runs; defaults to `particles`.
    pub timing_particles: Option<usize>,
    pub warmup: usize,
    pub repeats: usize,
    pub memory_budget: usize,

    pub reference_price: Option<f64>,
    pub candidates: Vec<String>,
    pub out: Option<PathBuf>,

    /// Command-line overrides; these also win over candidate settings.
    #[serde(skip)]
    pub forced: Overrides,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::PriceComparison,
            title: String::new(),
            notes: String::new(),
            engine: Engine::Weighted,
            pricer: PricerKind::Sa,
            strict: false,
            mu: 0.0319,
            nu: None,
            nu_kappa2: Some(8.1 / 4.0),
            rho: -0.7,
            varrho: 6.21,
            kappa: 0.2,
            s0: 100.0,
            v0: 0.102,
            instrument: InstrumentKind::AmericanPut,
            strike: 100.0,
            lockout: 0,
            particles: 10_000,
            substeps: 5,
            periods: 50,
            rule: QuadratureRule::Trapezoidal,
            epsilon: DEFAULT_EPSILON,
            basis: Family::WeightedLaguerre,
            basis_j: 2,
            gamma: 1.0,
            seeds: vec![1],
            fine_substeps: 6000,
            timing_particles: None,
            warmup: 3,
            repeats: 5,
            memory_budget: heston_core::coupling::DEFAULT_MEMORY_BUDGET,
            reference_price: None,
            candidates: Vec::new(),
            out: None,
            forced: Overrides::default(),
        }
    }
}

/// Command-line and environment overrides, applied after the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub particles: Option<usize>,
    pub substeps: Option<usize>,
    pub rule: Option<QuadratureRule>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub strict: bool,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), BenchError> {
        if self.nu.is_some() && self.nu_kappa2.is_some() {
            return Err(BenchError::Config("set only one of nu and nu_kappa2".into()));
        }
        if self.nu.is_none() && self.nu_kappa2.is_none() {
            return Err(BenchError::Config("one of nu or nu_kappa2 is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("seeds must not be empty".into()));
        }
        if self.basis_j == 0 {
            return Err(BenchError::Config("basis_j must be positive".into()));
        }
        if self.repeats == 0 {
            return Err(BenchError::Config("repeats must be positive".into()));
        }
        Ok(())
    }

    /// Applies overrides. A seed override keeps the seed count and renumbers
    /// the seeds consecutively from the given value.
    pub fn apply(&mut self, o: &Overrides) {
        self.forced = o.clone();
        self.apply_fields(o);
    }

    fn apply_fields(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            let k = self.seeds.len() as u64;
            self.seeds = (seed..seed + k).collect();
        }
        if let Some(n) = o.particles {
            self.particles = n;
        }
        if let Some(m) = o.substeps {
            self.substeps = m;
        }
        if let Some(r) = o.rule {
            self.rule = r;
        }
        if let Some(e) = o.epsilon {
            self.epsilon = e;
        }
        if let Some(g) = o.gamma {
            self.gamma = g;
        }
        if o.strict {
            self.strict = true;
        }
        if o.out.is_some() {
            self.out.clone_from(&o.out);
        }
    }

    pub fn params(&self) -> Result<ModelParams, BenchError> {
        let nu = match (self.nu, self.nu_kappa2) {
            (Some(nu), None) => nu,
            (None, Some(f)) => f * self.kappa * self.kappa,
            _ => return Err(BenchError::Config("set exactly one of nu and nu_kappa2".into())),
        };
        let p = ModelParams {
            mu: self.mu,
            nu,
            rho: self.rho,
            varrho: self.varrho,
            kappa: self.kappa,
            s0: self.s0,
            v0: self.v0,
        };
        Ok(p.validate()?)
    }

    pub fn instrument(&self) -> Instrument {
        Instrument {
            lockout: self.lockout,
            ..Instrument::new(self.instrument, self.strike)
        }
    }

    pub fn engine_config(&self, seed: u64) -> EngineConfig {
        EngineConfig {
            engine: self.engine,
            n_particles: self.particles,
            periods: self.periods,
            substeps: self.substeps,
            rule: self.rule,
            epsilon: self.epsilon,
            seed,
        }
    }

    pub fn basis_set(&self) -> BasisSet {
        let dims = if self.instrument.is_asian() { 3 } else { 2 };
        BasisSet::uniform(self.basis, self.basis_j, dims)
    }

    pub fn method(&self) -> Option<Method> {
        match self.pricer {
            PricerKind::Sa => Some(Method::Sa { gamma: self.gamma }),
            PricerKind::Lsm => Some(Method::Lsm { strict: self.strict }),
            PricerKind::None => None,
        }
    }

    /// Short description of the variant, e.g. `milstein M=85 N=7225`.
    pub fn label(&self) -> String {
        let mut s = format!("{} M={} N={}", self.engine.name(), self.substeps, self.particles);
        if !self.engine.is_baseline() {
            s.push_str(&format!(" {}", self.rule.name()));
        }
        if let Some(m) = self.method() {
            s.push_str(&format!(" {} J={}", m.name(), self.basis_set().len()));
        }
        s
    }

    /// The base config with one candidate string applied. With no
    /// candidates the base config is the only variant.
    pub fn variants(&self) -> Result<Vec<(String, ExperimentConfig)>, BenchError> {
        if self.candidates.is_empty() {
            return Ok(vec![(self.label(), self.clone())]);
        }
        self.candidates.iter().map(|c| self.variant(c)).collect()
    }

    pub fn variant(&self, spec: &str) -> Result<(String, ExperimentConfig), BenchError> {
        let mut tokens = spec.split_whitespace();
        let head = tokens
            .next()
            .ok_or_else(|| BenchError::Config("empty candidate".into()))?;
        let mut cfg = self.clone();
        cfg.candidates.clear();
        cfg.engine = Engine::parse(head).ok_or_else(|| BenchError::Config(format!("unknown engine `{head}`")))?;
        let mut label = None;
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("expected key=value, got `{tok}`")))?;
            let bad = || BenchError::Config(format!("bad value for {key}: `{value}`"));
            match key {
                "particles" | "n" => cfg.particles = value.parse().map_err(|_| bad())?,
                "substeps" | "m" => cfg.substeps = value.parse().map_err(|_| bad())?,
                "rule" => cfg.rule = QuadratureRule::parse(value).ok_or_else(bad)?,
                "pricer" => cfg.pricer = PricerKind::parse(value).ok_or_else(bad)?,
                "basis_j" | "j" => cfg.basis_j = value.parse().map_err(|_| bad())?,
                "gamma" => cfg.gamma = value.parse().map_err(|_| bad())?,
                "epsilon" => cfg.epsilon = value.parse().map_err(|_| bad())?,
                "label" => label = Some(value.replace('_', " ")),
                _ => return Err(BenchError::Config(format!("unknown candidate key `{key}`"))),
            }
        }
        let forced = self.forced.clone();
        cfg.apply_fields(&Overrides { seed: None, ..forced });
        let label = label.unwrap_or_else(|| cfg.label());
        Ok((label, cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
experiment = "price-comparison"
engine = "weighted"
pricer = "lsm"
kappa = 0.2
nu_kappa2 = 2.025
v0 = 0.501
particles = 2500
substeps = 15
basis_j = 3
seeds = [1, 2, 3]
candidates = ["euler substeps=100 particles=10000", "weighted label=w_heston"]
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.particles, 2500);
        assert!((a.params().unwrap().nu - 0.081).abs() < 1e-15);
    }

    #[test]
    fn candidates_override_the_base() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let v = cfg.variants().unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].1.engine, Engine::Euler);
        assert_eq!(v[0].1.substeps, 100);
        assert_eq!(v[0].1.particles, 10_000);
        assert_eq!(v[1].0, "w heston");
        assert_eq!(v[1].1.substeps, 15);
    }

    #[test]
    fn seed_override_renumbers() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.apply(&Overrides {
            seed: Some(40),
            ..Overrides::default()
        });
        assert_eq!(cfg.seeds, vec![40, 41, 42]);
    }

    #[test]
    fn overrides_beat_candidates() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.apply(&Overrides {
            particles: Some(77),
            seed: Some(9),
            ..Overrides::default()
        });
        for (_, v) in cfg.variants().unwrap() {
            assert_eq!(v.particles, 77);
            assert_eq!(v.seeds, vec![9, 10, 11]);
        }
    }

    #[test]
    fn rejects_unknown_keys_and_conflicts() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("nu = 0.1\nnu_kappa2 = 2.0").is_err());
        let cfg = ExperimentConfig::default();
        assert!(cfg.variant("warp substeps=2").is_err());
        assert!(cfg.variant("euler substeps").is_err());
    }
}
