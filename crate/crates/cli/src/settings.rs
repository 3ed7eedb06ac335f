//! Command-line flags and the optional TOML config file.
//!
//! Every key present in the config file replaces the corresponding flag.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(name = "credal", version, about = "Kernel two-sample tests for credal sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one credal test on data files.
    Test(TestArgs),
    /// Monte Carlo rejection rates over a grid of sample sizes and split exponents.
    Experiment(ExperimentArgs),
    /// Print the adaptive estimation/testing split for n and beta.
    Ratio(RatioArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Spec,
    Incl,
    Eq,
    Plaus,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Split,
    DoubleDip,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Null {
    Wild,
    Permutation,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hyp {
    Null,
    Alt,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of simulated null statistics.
    #[arg(long, default_value_t = 500)]
    pub permutations: usize,
    /// Split exponent; fractions such as 1/3 are accepted.
    #[arg(long, default_value = "0.25", value_parser = parse_real)]
    pub beta: f64,
    /// Gaussian kernel bandwidth [default: median heuristic].
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Split)]
    pub mode: Mode,
    /// Null simulation method.
    #[arg(long, value_enum, default_value_t = Null::Wild)]
    pub null: Null,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[arg(value_enum)]
    pub kind: Kind,
    /// Sample of X: one file per extreme point (a single file for `spec`).
    #[arg(short = 'x', long = "x", required = true, num_args = 1..)]
    pub x: Vec<PathBuf>,
    /// Sample of Y: one file per extreme point.
    #[arg(short = 'y', long = "y", required = true, num_args = 1..)]
    pub y: Vec<PathBuf>,
    /// 0-based column holding integer extreme-point labels; each side is
    /// then read from a single file.
    #[arg(long)]
    pub group_col: Option<usize>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long = "test", value_enum, default_value_t = Kind::Spec)]
    pub kind: Kind,
    #[arg(long, value_enum, default_value_t = Hyp::Null)]
    pub hypothesis: Hyp,
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256, 512, 1024, 2048])]
    pub n_grid: Vec<usize>,
    /// Comma-separated split exponents [default: --beta].
    #[arg(long, value_delimiter = ',', value_parser = parse_real)]
    pub beta_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Extreme points of the Y credal set.
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    /// Extreme points of the X credal set (inclusion scenarios).
    #[arg(long, default_value_t = 3)]
    pub l: usize,
    /// Degrees of freedom of the Student-t alternative.
    #[arg(long, default_value_t = 3.0)]
    pub df: f64,
    /// Add an extreme point equal to the uniform mixture of the others.
    #[arg(long)]
    pub linearly_dependent: bool,
    /// Keep extreme-point means fixed across repetitions.
    #[arg(long)]
    pub frozen_means: bool,
    /// Record wall-clock seconds per cell (output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
    /// CSV output path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct RatioArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "0.25", value_parser = parse_real)]
    pub beta: f64,
}

/// A real number or a fraction `a/b`.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
            if b == 0.0 {
                return Err(format!("zero denominator in '{s}'"));
            }
            a / b
        }
        None => s.parse().map_err(|_| format!("'{s}' is not a number"))?,
    };
    if !v.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(v)
}

#[derive(Deserialize, Debug, Clone)]
#[serde(untagged)]
pub enum Real {
    Num(f64),
    Text(String),
}

impl Real {
    fn value(&self) -> Result<f64> {
        match self {
            Real::Num(v) => Ok(*v),
            Real::Text(s) => parse_real(s).map_err(anyhow::Error::msg),
        }
    }
}

/// Keys accepted in the `--config` file.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub permutations: Option<usize>,
    pub beta: Option<Real>,
    pub bandwidth: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub null: Option<Null>,
    pub threads: Option<usize>,
    pub group_col: Option<usize>,
    pub out: Option<PathBuf>,
    pub test: Option<Kind>,
    pub hypothesis: Option<Hyp>,
    pub n_grid: Option<Vec<usize>>,
    pub beta_grid: Option<Vec<Real>>,
    pub reps: Option<usize>,
    pub dim: Option<usize>,
    pub r: Option<usize>,
    pub l: Option<usize>,
    pub df: Option<f64>,
    pub linearly_dependent: Option<bool>,
    pub frozen_means: Option<bool>,
    pub timing: Option<bool>,
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn over<T: Clone>(target: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

impl Common {
    pub fn apply(&mut self, f: &FileConfig) -> Result<()> {
        over(&mut self.alpha, &f.alpha);
        over(&mut self.permutations, &f.permutations);
        if let Some(b) = &f.beta {
            self.beta = b.value()?;
        }
        if f.bandwidth.is_some() {
            self.bandwidth = f.bandwidth;
        }
        over(&mut self.seed, &f.seed);
        over(&mut self.mode, &f.mode);
        over(&mut self.null, &f.null);
        if f.threads.is_some() {
            self.threads = f.threads;
        }
        Ok(())
    }
}

impl TestArgs {
    pub fn apply_config(&mut self) -> Result<()> {
        if let Some(path) = self.common.config.clone() {
            let f = load_config(&path)?;
            self.common.apply(&f)?;
            if f.group_col.is_some() {
                self.group_col = f.group_col;
            }
        }
        Ok(())
    }
}

impl ExperimentArgs {
    pub fn apply_config(&mut self) -> Result<()> {
        if let Some(path) = self.common.config.clone() {
            let f = load_config(&path)?;
            self.common.apply(&f)?;
            if f.out.is_some() {
                self.out = f.out.clone();
            }
            over(&mut self.kind, &f.test);
            over(&mut self.hypothesis, &f.hypothesis);
            over(&mut self.n_grid, &f.n_grid);
            if let Some(g) = &f.beta_grid {
                self.beta_grid = g.iter().map(Real::value).collect::<Result<_>>()?;
            }
            over(&mut self.reps, &f.reps);
            over(&mut self.dim, &f.dim);
            over(&mut self.r, &f.r);
            over(&mut self.l, &f.l);
            over(&mut self.df, &f.df);
            over(&mut self.linearly_dependent, &f.linearly_dependent);
            over(&mut self.frozen_means, &f.frozen_means);
            over(&mut self.timing, &f.timing);
        }
        if self.beta_grid.is_empty() {
            self.beta_grid = vec![self.common.beta];
        }
        if self.n_grid.is_empty() {
            bail!("n grid is empty");
        }
        Ok(())
    }
}
