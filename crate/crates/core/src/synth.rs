//! Seeded generators for synthetic credal scenarios.
//!
//! Extreme points are isotropic Gaussians `N(μ_j, I_d)` (the set `𝐏_Y`) or
//! multivariate Student-t distributions with the same means and identity
//! scale matrix (the set `𝐐_Y`). Means are uniform on the sphere of radius
//! `radius`.
//!
//! Mixtures here are *populations*: each row picks a component from the
//! categorical law and then takes a fresh draw from it. This is unrelated to
//! [`redraw_mixture`](crate::splitting::redraw_mixture), which resamples a
//! finite sample without replacement.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kcd::CredalSample;
use crate::kernel::Dataset;
use crate::rng::{derive_seed, substream};
use crate::simplex::random_dirichlet;

const MEANS: u64 = 1;
const WEIGHTS: u64 = 2;
const NOISE: u64 = 3;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// `r` independent uniform draws from the unit sphere in `ℝ^d`, one per row.
pub fn make_extreme_means<R: Rng + ?Sized>(r: usize, d: usize, rng: &mut R) -> Result<Array2<f64>> {
    if r == 0 || d == 0 {
        return Err(invalid("need at least one mean of dimension at least one"));
    }
    let mut out = Array2::zeros((r, d));
    for mut row in out.rows_mut() {
        loop {
            let g: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-300 {
                row.iter_mut().zip(&g).for_each(|(o, v)| *o = v / norm);
                break;
            }
        }
    }
    Ok(out)
}

/// `n` draws from `N(mean, I)`.
pub fn sample_gaussian_extreme<R: Rng + ?Sized>(mean: &[f64], n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 || mean.is_empty() {
        return Err(invalid("need n ≥ 1 and a non-empty mean"));
    }
    let d = mean.len();
    let values = Array2::from_shape_fn((n, d), |(_, k)| mean[k] + normal(rng));
    Dataset::new(values)
}

/// `n` draws of `mean + g / √(χ²_df / df)` with `g ~ N(0, I)`.
pub fn sample_student_extreme<R: Rng + ?Sized>(mean: &[f64], df: f64, n: usize, rng: &mut R) -> Result<Dataset> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(invalid(format!("degrees of freedom must be positive, got {df}")));
    }
    if n == 0 || mean.is_empty() {
        return Err(invalid("need n ≥ 1 and a non-empty mean"));
    }
    let chi = ChiSquared::new(df).map_err(|e| invalid(e.to_string()))?;
    let d = mean.len();
    let mut values = Array2::zeros((n, d));
    for mut row in values.rows_mut() {
        let scale = (chi.sample(rng) / df).sqrt().recip();
        for (o, m) in row.iter_mut().zip(mean) {
            *o = m + scale * normal(rng);
        }
    }
    Dataset::new(values)
}

/// A distribution that can be sampled: one extreme point or a mixture.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Gaussian { mean: Vec<f64> },
    Student { mean: Vec<f64>, df: f64 },
    Mixture { weights: Vec<f64>, components: Vec<Generator> },
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::Gaussian { mean } | Generator::Student { mean, .. } => mean.len(),
            Generator::Mixture { components, .. } => components[0].dim(),
        }
    }

    /// `n` i.i.d. rows. Mixture rows draw their component independently.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        match self {
            Generator::Gaussian { mean } => sample_gaussian_extreme(mean, n, rng),
            Generator::Student { mean, df } => sample_student_extreme(mean, *df, n, rng),
            Generator::Mixture { weights, components } => {
                if weights.len() != components.len() || components.is_empty() {
                    return Err(invalid("mixture weights and components differ in length"));
                }
                let mut rows = Vec::with_capacity(n);
                for _ in 0..n {
                    let j = categorical(weights, rng);
                    rows.push(components[j].sample(1, rng)?.row(0).to_vec());
                }
                Dataset::from_rows(&rows)
            }
        }
    }
}

fn categorical<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (j, &wj) in w.iter().enumerate() {
        acc += wj;
        if u < acc {
            return j;
        }
    }
    w.iter().rposition(|&v| v > 0.0).unwrap_or(w.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Specification,
    Inclusion,
    Equality,
    Plausibility,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Specification => "specification",
            TestKind::Inclusion => "inclusion",
            TestKind::Equality => "equality",
            TestKind::Plausibility => "plausibility",
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = crate::error::CredalError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spec" | "specification" => Ok(TestKind::Specification),
            "incl" | "inclusion" => Ok(TestKind::Inclusion),
            "eq" | "equality" => Ok(TestKind::Equality),
            "plaus" | "plausibility" => Ok(TestKind::Plausibility),
            other => Err(invalid(format!("unknown test kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    Null,
    Alternative,
}

impl Hypothesis {
    pub fn as_str(self) -> &'static str {
        match self {
            Hypothesis::Null => "null",
            Hypothesis::Alternative => "alternative",
        }
    }
}

impl std::str::FromStr for Hypothesis {
    type Err = crate::error::CredalError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" | "h0" => Ok(Hypothesis::Null),
            "alternative" | "alt" | "h1" => Ok(Hypothesis::Alternative),
            other => Err(invalid(format!("unknown hypothesis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: TestKind,
    pub hypothesis: Hypothesis,
    pub d: usize,
    /// Extreme points of `𝒞_Y`.
    pub r: usize,
    /// Extreme points of `𝒞_X` in inclusion scenarios.
    pub l: usize,
    pub df: f64,
    pub radius: f64,
    /// Rows per extreme point.
    pub n: usize,
    /// Seed for mixture weights and observation noise.
    pub seed: u64,
    /// Seed for the extreme-point means; `None` derives it from `seed`.
    pub mean_seed: Option<u64>,
    /// Append to `𝐏_Y` (and `𝐐_Y`) an extreme point equal to the uniform
    /// mixture of the existing ones.
    pub linearly_dependent: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: TestKind::Specification,
            hypothesis: Hypothesis::Null,
            d: 10,
            r: 3,
            l: 3,
            df: 3.0,
            radius: 1.0,
            n: 512,
            seed: 0,
            mean_seed: None,
            linearly_dependent: false,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.r == 0 || self.l == 0 {
            return Err(invalid("d, r and l must be at least 1"));
        }
        if self.n < 4 {
            return Err(invalid(format!("need at least 4 rows per extreme point, got {}", self.n)));
        }
        if !(self.df >= 1.0 && self.df.is_finite()) {
            return Err(invalid(format!("t degrees of freedom must be ≥ 1, got {}", self.df)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("sphere radius must be positive"));
        }
        if self.kind == TestKind::Plausibility && self.hypothesis == Hypothesis::Null && self.r < 2 {
            return Err(invalid("the plausibility null needs r ≥ 2 to share an extreme point"));
        }
        Ok(())
    }

    fn means(&self) -> Result<Array2<f64>> {
        let seed = self.mean_seed.unwrap_or_else(|| derive_seed(self.seed, &[MEANS]));
        Ok(make_extreme_means(self.r, self.d, &mut substream(seed, &[MEANS]))? * self.radius)
    }
}

/// A generated pair of credal samples and the generators behind them.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// For specification scenarios this has exactly one extreme point.
    pub x: CredalSample,
    pub y: CredalSample,
    pub x_generators: Vec<Generator>,
    pub y_generators: Vec<Generator>,
}

fn families(spec: &ScenarioSpec, means: &Array2<f64>) -> (Vec<Generator>, Vec<Generator>) {
    let mut p: Vec<Generator> = means
        .rows()
        .into_iter()
        .map(|m| Generator::Gaussian { mean: m.to_vec() })
        .collect();
    let mut q: Vec<Generator> = means
        .rows()
        .into_iter()
        .map(|m| Generator::Student { mean: m.to_vec(), df: spec.df })
        .collect();
    if spec.linearly_dependent {
        for set in [&mut p, &mut q] {
            let k = set.len();
            let mix = Generator::Mixture {
                weights: vec![1.0 / k as f64; k],
                components: set.clone(),
            };
            set.push(mix);
        }
    }
    (p, q)
}

/// Build the data for one repetition of a scenario.
///
/// | kind | null | alternative |
/// |---|---|---|
/// | specification | `η₀ᵀ𝐏_Y` vs `𝐏_Y` | `η₀ᵀ𝐐_Y` vs `𝐏_Y` |
/// | inclusion | `{η₀⁽ⁱ⁾ᵀ𝐏_Y}` vs `𝐏_Y` | `{η₀⁽ⁱ⁾ᵀ𝐐_Y}` vs `𝐏_Y` |
/// | equality | `𝐏_Y` vs `𝐏_Y` | `𝐐_Y` vs `𝐏_Y` |
/// | plausibility | `𝐏_Y` vs `{P⁽¹⁾,…,P⁽ʳ⁻¹⁾,Q⁽ʳ⁾}` | `𝐏_Y` vs `𝐐_Y` |
///
/// Mixture weights `η₀` are flat-Dirichlet draws. The two sides of an
/// equality scenario share generators but not noise.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let means = spec.means()?;
    let (p, q) = families(spec, &means);
    let mut wrng = substream(spec.seed, &[WEIGHTS]);
    let mut mixtures = |k: usize, base: &[Generator]| -> Vec<Generator> {
        (0..k)
            .map(|_| Generator::Mixture {
                weights: random_dirichlet(&mut wrng, base.len()),
                components: base.to_vec(),
            })
            .collect()
    };
    let alt = spec.hypothesis == Hypothesis::Alternative;
    let (xg, yg) = match spec.kind {
        TestKind::Specification => (mixtures(1, if alt { &q } else { &p }), p.clone()),
        TestKind::Inclusion => (mixtures(spec.l, if alt { &q } else { &p }), p.clone()),
        TestKind::Equality => (if alt { q.clone() } else { p.clone() }, p.clone()),
        TestKind::Plausibility => {
            if alt {
                (p.clone(), q.clone())
            } else {
                let mut y = p.clone();
                let last = spec.r - 1;
                y[last] = q[last].clone();
                (p.clone(), y)
            }
        }
    };
    let draw = |side: u64, gens: &[Generator]| -> Result<CredalSample> {
        let sets = gens
            .iter()
            .enumerate()
            .map(|(j, g)| g.sample(spec.n, &mut substream(spec.seed, &[NOISE, side, j as u64])))
            .collect::<Result<Vec<_>>>()?;
        CredalSample::new(sets)
    };
    Ok(Scenario {
        x: draw(0, &xg)?,
        y: draw(1, &yg)?,
        x_generators: xg,
        y_generators: yg,
    })
}
