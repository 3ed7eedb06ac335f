//! Monte Carlo rejection-rate sweeps.
//!
//! A sweep runs `repetitions` scenario-build-and-test cycles for every
//! `(n, β)` cell and counts rejections. Repetition seeds are a hash of the
//! master seed, `n`, the bits of `β` and the repetition index, so any cell
//! can be re-run on its own and reproduces its row exactly.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::credal_tests::{equality_test, inclusion_test, plausibility_test, specification_test, CredalTestConfig};
use crate::error::{invalid, CredalError, Result};
use crate::rng::derive_seed;
use crate::splitting::SplitMode;
use crate::synth::{build_scenario, ScenarioSpec, TestKind};

pub const CSV_HEADER: [&str; 9] = ["test", "hypothesis", "n", "beta", "mode", "reps", "rejections", "rate", "seconds"];

/// Largest fraction of failed repetitions a cell may have and still count.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Scenario template; `n` and `seed` are overwritten per repetition.
    pub scenario: ScenarioSpec,
    pub n_grid: Vec<usize>,
    pub beta_grid: Vec<f64>,
    pub repetitions: usize,
    /// Test settings; `split.beta` and `seed` are overwritten per repetition.
    pub test: CredalTestConfig,
    pub master_seed: u64,
    /// Draw new extreme-point means in every repetition. When false the
    /// means are fixed by the master seed.
    pub fresh_means: bool,
    /// Record wall-clock seconds per cell. Off by default so that output is
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::default(),
            n_grid: vec![128, 256, 512, 1024, 2048],
            beta_grid: vec![0.25],
            repetitions: 500,
            test: CredalTestConfig::default(),
            master_seed: 0,
            fresh_means: true,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be at least 1"));
        }
        if self.n_grid.is_empty() || self.beta_grid.is_empty() {
            return Err(invalid("n and beta grids must be non-empty"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n grid must be strictly increasing"));
        }
        for &beta in &self.beta_grid {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid(format!("beta must lie in [0, 1), got {beta}")));
            }
        }
        for &n in &self.n_grid {
            ScenarioSpec { n, ..self.scenario.clone() }.validate()?;
        }
        self.test.validate()
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub test: TestKind,
    pub hypothesis: crate::synth::Hypothesis,
    pub n: usize,
    pub beta: f64,
    pub mode: SplitMode,
    pub repetitions: usize,
    pub rejections: usize,
    /// Repetitions that ended in an error; they count as neither outcome.
    pub failures: usize,
    /// `rejections / repetitions`, or NaN when the cell is invalid.
    pub rate: f64,
    pub seconds: f64,
}

impl RejectionRecord {
    pub fn is_valid(&self) -> bool {
        (self.failures as f64) <= MAX_FAILURE_RATE * self.repetitions as f64
    }

    fn csv_fields(&self) -> [String; 9] {
        [
            self.test.as_str().to_string(),
            self.hypothesis.as_str().to_string(),
            self.n.to_string(),
            self.beta.to_string(),
            self.mode.as_str().to_string(),
            self.repetitions.to_string(),
            self.rejections.to_string(),
            self.rate.to_string(),
            format!("{:.3}", self.seconds),
        ]
    }
}

/// Seed of repetition `rep` in cell `(n, beta)`.
pub fn repetition_seed(master: u64, n: usize, beta: f64, rep: usize) -> u64 {
    derive_seed(master, &[n as u64, beta.to_bits(), rep as u64])
}

/// Build one scenario at size `n` and run its test with split exponent `beta`.
pub fn run_repetition(cfg: &ExperimentConfig, n: usize, beta: f64, rep: usize) -> Result<bool> {
    let seed = repetition_seed(cfg.master_seed, n, beta, rep);
    let mean_seed = if cfg.fresh_means {
        derive_seed(seed, &[2])
    } else {
        derive_seed(cfg.master_seed, &[u64::MAX])
    };
    let scenario = build_scenario(&ScenarioSpec {
        n,
        seed: derive_seed(seed, &[1]),
        mean_seed: Some(mean_seed),
        ..cfg.scenario.clone()
    })?;
    let mut test = cfg.test.clone();
    test.split.beta = beta;
    test.seed = derive_seed(seed, &[3]);
    let report = match cfg.scenario.kind {
        TestKind::Specification => specification_test(scenario.x.extreme(0), &scenario.y, &test)?,
        TestKind::Inclusion => inclusion_test(&scenario.x, &scenario.y, &test)?,
        TestKind::Equality => equality_test(&scenario.x, &scenario.y, &test)?,
        TestKind::Plausibility => plausibility_test(&scenario.x, &scenario.y, &test)?,
    };
    Ok(report.decision.is_reject())
}

/// All repetitions of one cell, run in parallel.
pub fn run_cell(cfg: &ExperimentConfig, n: usize, beta: f64) -> Result<RejectionRecord> {
    let start = Instant::now();
    let outcomes: Vec<Result<bool>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, n, beta, rep))
        .collect();
    let mut rejections = 0;
    let mut failures = 0;
    for (rep, o) in outcomes.iter().enumerate() {
        match o {
            Ok(true) => rejections += 1,
            Ok(false) => {}
            Err(e) => {
                failures += 1;
                log::warn!("n={n} beta={beta} repetition {rep} failed: {e}");
            }
        }
    }
    let mut rec = RejectionRecord {
        test: cfg.scenario.kind,
        hypothesis: cfg.scenario.hypothesis,
        n,
        beta,
        mode: cfg.test.split.mode,
        repetitions: cfg.repetitions,
        rejections,
        failures,
        rate: rejections as f64 / cfg.repetitions as f64,
        seconds: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
    };
    if !rec.is_valid() {
        log::error!(
            "n={n} beta={beta}: {failures} of {} repetitions failed; row marked invalid",
            cfg.repetitions
        );
        rec.rate = f64::NAN;
    }
    log::info!(
        "{} {} n={n} beta={beta} mode={}: {rejections}/{} rejected ({failures} failed)",
        rec.test.as_str(),
        rec.hypothesis.as_str(),
        rec.mode.as_str(),
        rec.repetitions
    );
    Ok(rec)
}

/// Every cell of the sweep, `n` outer and `β` inner. Each finished record
/// is passed to `sink` before the next cell starts.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut sink: impl FnMut(&RejectionRecord) -> Result<()>,
) -> Result<Vec<RejectionRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &n in &cfg.n_grid {
        for &beta in &cfg.beta_grid {
            let rec = run_cell(cfg, n, beta)?;
            sink(&rec)?;
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RejectionRecord>> {
    run_experiment_with(cfg, |_| Ok(()))
}

/// CSV output with the fixed header, flushed row by row.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

fn csv_err(e: csv::Error) -> CredalError {
    CredalError::Io(e.to_string())
}

impl<W: Write> RecordWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(CSV_HEADER).map_err(csv_err)?;
        inner.flush().map_err(|e| CredalError::Io(e.to_string()))?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rec: &RejectionRecord) -> Result<()> {
        self.inner.write_record(rec.csv_fields()).map_err(csv_err)?;
        self.inner.flush().map_err(|e| CredalError::Io(e.to_string()))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| CredalError::Io(e.to_string()))
    }
}

/// Render records as CSV text.
pub fn records_to_csv(records: &[RejectionRecord]) -> Result<String> {
    let mut w = RecordWriter::new(Vec::new())?;
    for r in records {
        w.write(r)?;
    }
    String::from_utf8(w.into_inner()?).map_err(|e| CredalError::Internal(e.to_string()))
}
