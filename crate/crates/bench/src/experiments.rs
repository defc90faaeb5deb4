//! Experiment runners behind the CLI.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use heston_core::baseline::{break_histogram, Scheme};
use heston_core::coupling::{drive_explicit, drive_scheme, ground_truth_paths, squared_error, FineNoise};
use heston_core::{simulate, Engine, PathSet, PriceReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::BenchError;

/// Wall-clock samples of one measured operation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub median_s: f64,
    pub samples_s: Vec<f64>,
    pub threads: usize,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `f` `warmup` times unmeasured, then `repeats` times measured.
pub fn measure<F>(warmup: usize, repeats: usize, mut f: F) -> Result<Timing, BenchError>
where
    F: FnMut() -> Result<(), BenchError>,
{
    for _ in 0..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(Timing {
        median_s: median(&samples),
        samples_s: samples,
        threads: rayon::current_num_threads(),
    })
}

/// Candidate-versus-reference comparison at matched accuracy or matched time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub reference: String,
    pub candidate: String,
    /// `rms` or `price-error`.
    pub metric: String,
    pub reference_time_s: f64,
    pub candidate_time_s: f64,
    pub reference_error: Option<f64>,
    pub candidate_error: Option<f64>,
    /// Reference time over candidate time.
    pub time_gain: f64,
    /// Reference error over candidate error.
    pub performance_gain: Option<f64>,
}

impl GainReport {
    pub fn new(
        metric: &str,
        reference: (&str, f64, Option<f64>),
        candidate: (&str, f64, Option<f64>),
    ) -> Self {
        let performance_gain = match (reference.2, candidate.2) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        };
        GainReport {
            reference: reference.0.to_string(),
            candidate: candidate.0.to_string(),
            metric: metric.to_string(),
            reference_time_s: reference.1,
            candidate_time_s: candidate.1,
            reference_error: reference.2,
            candidate_error: candidate.2,
            time_gain: reference.1 / candidate.1,
            performance_gain,
        }
    }
}

// ---------------------------------------------------------------------------
// Path dumps

/// Simulates the first seed and writes the paths; `.bin` selects the
/// binary layout, anything else CSV.
pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<PathSet, BenchError> {
    let params = cfg.params()?;
    let set = simulate(&params, &cfg.engine_config(cfg.seeds[0]), &cfg.instrument())?;
    let file = BufWriter::new(File::create(out)?);
    if out.extension().is_some_and(|e| e == "bin") {
        set.write_binary(file)?;
    } else {
        set.write_csv(file)?;
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Break frequencies

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakTable {
    pub label: String,
    pub engine: String,
    pub particles: usize,
    pub substeps: usize,
    pub periods: usize,
    /// Mass of first breaks in `(t-1, t]` for `t = 1..=T`, then `tau > T`.
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakRow {
    pub label: String,
    pub engine: String,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "M")]
    pub substeps: usize,
    pub interval: String,
    pub mass: f64,
}

impl BreakTable {
    pub fn rows(&self) -> Vec<BreakRow> {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, &mass)| BreakRow {
                label: self.label.clone(),
                engine: self.engine.clone(),
                particles: self.particles,
                substeps: self.substeps,
                interval: if i < self.periods {
                    format!("({},{}]", i, i + 1)
                } else {
                    format!("tau>{}", self.periods)
                },
                mass,
            })
            .collect()
    }

    /// Mass on `(0, 1]`.
    pub fn first(&self) -> f64 {
        self.masses[0]
    }

    pub fn survival(&self) -> f64 {
        self.masses[self.periods]
    }
}

/// First-break histograms for each variant, pooled over the seeds.
pub fn run_break_frequency(cfg: &ExperimentConfig) -> Result<Vec<BreakTable>, BenchError> {
    let params = cfg.params()?;
    let mut tables = Vec::new();
    for (label, v) in cfg.variants()? {
        if !v.engine.is_baseline() {
            return Err(BenchError::Config("explicit engine cannot break".into()));
        }
        let mut breaks = Vec::with_capacity(v.particles * v.seeds.len());
        for &seed in &v.seeds {
            let set = simulate(&params, &v.engine_config(seed), &v.instrument())?;
            let times = set.break_times().expect("baseline engines record break times");
            breaks.extend_from_slice(times);
        }
        tables.push(BreakTable {
            label,
            engine: v.engine.name().to_string(),
            particles: breaks.len(),
            substeps: v.substeps,
            periods: v.periods,
            masses: break_histogram(&breaks, v.periods),
        });
    }
    Ok(tables)
}

// ---------------------------------------------------------------------------
// Shared-noise RMS

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmsRow {
    pub label: String,
    pub engine: String,
    #[serde(rename = "M")]
    pub substeps: usize,
    pub rule: String,
    pub paths: usize,
    pub rms: f64,
    /// Median production-path wall time for `timing_particles` paths.
    pub time_s: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmsReport {
    pub rows: Vec<RmsRow>,
    pub gains: Vec<GainReport>,
}

fn driven(
    params: &heston_core::ModelParams,
    v: &ExperimentConfig,
    noise: &FineNoise,
) -> Result<(Vec<f64>, Vec<f64>), BenchError> {
    Ok(match v.engine {
        Engine::Euler => drive_scheme(params, Scheme::Euler, v.substeps, noise)?,
        Engine::Milstein => drive_scheme(params, Scheme::Milstein, v.substeps, noise)?,
        Engine::Explicit => drive_explicit(params, v.rule, v.substeps, noise)?,
        Engine::Weighted => {
            return Err(BenchError::Config(
                "the shared-noise comparison needs an exact engine, not weighted".into(),
            ))
        }
    })
}

/// Root mean squared path error against the fine Milstein reference, with
/// every variant driven by the same Brownian increments, plus production
/// timings. Path `i` draws its increments from stream `i` of the first seed.
pub fn run_rms(cfg: &ExperimentConfig) -> Result<RmsReport, BenchError> {
    let params = cfg.params()?;
    let variants = cfg.variants()?;
    let seed = cfg.seeds[0];
    let paths = cfg.particles;
    for (_, v) in &variants {
        if cfg.fine_substeps % v.substeps != 0 {
            return Err(BenchError::Config(format!(
                "{} substeps do not divide the fine mesh of {}",
                v.substeps, cfg.fine_substeps
            )));
        }
        if v.engine == Engine::Explicit {
            v.rule.check(v.substeps)?;
        }
    }
    let per_path: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|id| {
            let noise = FineNoise::generate(cfg.periods, cfg.fine_substeps, seed, id, cfg.memory_budget)?;
            let truth = ground_truth_paths(&params, &noise).at_periods();
            variants
                .iter()
                .map(|(_, v)| driven(&params, v, &noise).map(|run| squared_error(&run, &truth)))
                .collect::<Result<Vec<f64>, BenchError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (k, (label, v)) in variants.iter().enumerate() {
        let total: f64 = per_path.iter().map(|errs| errs[k]).sum();
        let mut timed = v.clone();
        timed.particles = cfg.timing_particles.unwrap_or(cfg.particles);
        let engine_cfg = timed.engine_config(seed);
        let instrument = timed.instrument();
        let timing = measure(cfg.warmup, cfg.repeats, || {
            simulate(&params, &engine_cfg, &instrument)?;
            Ok(())
        })?;
        rows.push(RmsRow {
            label: label.clone(),
            engine: v.engine.name().to_string(),
            substeps: v.substeps,
            rule: if v.engine.is_baseline() {
                String::new()
            } else {
                v.rule.name().to_string()
            },
            paths,
            rms: (total / paths as f64).sqrt(),
            time_s: timing.median_s,
            threads: timing.threads,
        });
    }
    let gains = rows
        .iter()
        .skip(1)
        .map(|r| {
            let base = &rows[0];
            GainReport::new(
                "rms",
                (&base.label, base.time_s, Some(base.rms)),
                (&r.label, r.time_s, Some(r.rms)),
            )
        })
        .collect();
    Ok(RmsReport { rows, gains })
}

// ---------------------------------------------------------------------------
// Pricing

/// One pricing run; the wall time covers simulation and pricing.
pub fn price_once(cfg: &ExperimentConfig, seed: u64) -> Result<PriceReport, BenchError> {
    let method = cfg
        .method()
        .ok_or_else(|| BenchError::Config("pricing needs pricer = sa or lsm".into()))?;
    let params = cfg.params()?;
    let start = Instant::now();
    let set = simulate(&params, &cfg.engine_config(seed), &cfg.instrument())?;
    let mut report = heston_core::run_pricer(&set, &cfg.basis_set(), &method)?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The serialised columns of a [`PriceReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRow {
    pub method: String,
    pub engine: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub gamma: Option<f64>,
    pub price: f64,
    pub std_error: f64,
    pub wall_time_s: f64,
    pub condition_max: Option<f64>,
    pub eta_trigger_count: usize,
}

impl From<&PriceReport> for PriceRow {
    fn from(r: &PriceReport) -> Self {
        PriceRow {
            method: r.method.clone(),
            engine: r.engine.clone(),
            n: r.n_particles,
            m: r.substeps,
            j: r.basis_size,
            gamma: r.gamma,
            price: r.price,
            std_error: r.std_error,
            wall_time_s: r.wall_time_s,
            condition_max: r.condition_max,
            eta_trigger_count: r.eta_trigger_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub method: String,
    pub engine: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub gamma: Option<f64>,
    pub seeds: usize,
    /// Mean price over seeds.
    pub price: f64,
    /// Standard error of the mean over seeds; the single run's error for
    /// one seed.
    pub price_se: f64,
    /// Mean absolute deviation from the reference price.
    pub error: Option<f64>,
    /// Median wall time per run.
    pub wall_time_s: f64,
    pub time_gain: f64,
    pub performance_gain: Option<f64>,
    /// Runs whose regression hit an ill-conditioned matrix.
    pub singular_runs: usize,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceComparison {
    pub runs: Vec<(String, u64, PriceReport)>,
    pub rows: Vec<ComparisonRow>,
    pub gains: Vec<GainReport>,
}

/// Prices every variant for every seed and summarises against the
/// reference price, if one is configured.
pub fn run_price_comparison(cfg: &ExperimentConfig) -> Result<PriceComparison, BenchError> {
    let mut runs = Vec::new();
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for (label, v) in cfg.variants()? {
        for _ in 0..v.warmup {
            price_once(&v, v.seeds[0])?;
        }
        let reports = v
            .seeds
            .iter()
            .map(|&s| price_once(&v, s).map(|r| (s, r)))
            .collect::<Result<Vec<_>, _>>()?;
        let prices: Vec<f64> = reports.iter().map(|(_, r)| r.price).collect();
        let k = prices.len() as f64;
        let mean = prices.iter().sum::<f64>() / k;
        let price_se = if prices.len() > 1 {
            (prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        } else {
            reports[0].1.std_error
        };
        let error = cfg
            .reference_price
            .map(|p0| prices.iter().map(|p| (p - p0).abs()).sum::<f64>() / k);
        let times: Vec<f64> = reports.iter().map(|(_, r)| r.wall_time_s).collect();
        let first = &reports[0].1;
        rows.push(ComparisonRow {
            label: label.clone(),
            method: first.method.clone(),
            engine: first.engine.clone(),
            n: first.n_particles,
            m: first.substeps,
            j: first.basis_size,
            gamma: first.gamma,
            seeds: reports.len(),
            price: mean,
            price_se,
            error,
            wall_time_s: median(&times),
            time_gain: 1.0,
            performance_gain: None,
            singular_runs: reports.iter().filter(|(_, r)| !r.singular_times.is_empty()).count(),
            threads: rayon::current_num_threads(),
        });
        runs.extend(reports.into_iter().map(|(s, r)| (label.clone(), s, r)));
    }
    let base = rows[0].clone();
    let gains: Vec<GainReport> = rows
        .iter()
        .map(|r| {
            GainReport::new(
                "price-error",
                (&base.label, base.wall_time_s, base.error),
                (&r.label, r.wall_time_s, r.error),
            )
        })
        .collect();
    for (row, gain) in rows.iter_mut().zip(&gains) {
        row.time_gain = gain.time_gain;
        row.performance_gain = gain.performance_gain;
    }
    Ok(PriceComparison {
        runs,
        rows,
        gains: gains.into_iter().skip(1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentKind, PricerKind};

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            experiment: ExperimentKind::PriceComparison,
            engine: Engine::Explicit,
            pricer: PricerKind::Sa,
            kappa: 0.61,
            nu_kappa2: Some(0.5),
            v0: 0.0102,
            particles: 500,
            substeps: 2,
            periods: 10,
            rule: heston_core::QuadratureRule::Simpson13,
            warmup: 0,
            repeats: 1,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn identical_configs_have_unit_gain() {
        let g = GainReport::new("price-error", ("a", 2.5, Some(0.1)), ("b", 2.5, Some(0.1)));
        assert_eq!(g.time_gain, 1.0);
        assert_eq!(g.performance_gain, Some(1.0));
    }

    #[test]
    fn explicit_engine_is_rejected_for_breaks() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::BreakFrequency,
            ..small()
        };
        match run_break_frequency(&cfg) {
            Err(BenchError::Config(msg)) => assert_eq!(msg, "explicit engine cannot break"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn break_masses_sum_to_one() {
        let cfg = ExperimentConfig {
            engine: Engine::Euler,
            nu_kappa2: Some(0.25),
            particles: 300,
            substeps: 20,
            ..small()
        };
        let tables = run_break_frequency(&cfg).unwrap();
        let total: f64 = tables[0].masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(tables[0].rows().len(), 11);
        assert_eq!(tables[0].rows()[10].interval, "tau>10");
    }

    #[test]
    fn self_comparison_has_zero_rms() {
        let cfg = ExperimentConfig {
            nu_kappa2: Some(0.25),
            particles: 4,
            periods: 2,
            fine_substeps: 600,
            candidates: vec!["milstein substeps=600".into(), "euler substeps=60".into()],
            ..small()
        };
        let report = run_rms(&cfg).unwrap();
        assert_eq!(report.rows[0].rms, 0.0);
        assert!(report.rows[1].rms > 0.0);
        assert_eq!(report.gains.len(), 1);
    }

    #[test]
    fn comparison_reports_errors_against_the_reference() {
        let cfg = ExperimentConfig {
            seeds: vec![1, 2],
            reference_price: Some(5.0),
            ..small()
        };
        let cmp = run_price_comparison(&cfg).unwrap();
        assert_eq!(cmp.runs.len(), 2);
        let row = &cmp.rows[0];
        let expect = cmp.runs.iter().map(|(_, _, r)| (r.price - 5.0).abs()).sum::<f64>() / 2.0;
        assert!((row.error.unwrap() - expect).abs() < 1e-12);
        assert_eq!(row.time_gain, 1.0);
    }
}
