//! Estimation/testing sample splitting and mixture resampling.
//!
//! The adaptive rule picks the estimation size `n_e` so that
//! `n_t / n_e = n_e^{−β}` with `n_e + n_t = n`, i.e. it solves
//!
//! ```text
//! n_e + n_e^{1−β} = n
//! ```
//!
//! by Newton's method. `β = 0` is the fixed 50:50 split; any `β > 0` makes
//! the testing share vanish relative to the estimation share, so alignment
//! error becomes negligible against the test statistic.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CredalError, Result};
use crate::kcd::CredalSample;
use crate::kernel::Dataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    #[default]
    Split,
    /// Estimate on all data and test on a random `⌊n^{1−β}⌋` subset of the
    /// same data. Ablation only: Type I control is not guaranteed.
    DoubleDip,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::Split => "split",
            SplitMode::DoubleDip => "double-dip",
        }
    }
}

impl std::str::FromStr for SplitMode {
    type Err = CredalError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split" => Ok(SplitMode::Split),
            "double-dip" | "doubledip" | "ddip" => Ok(SplitMode::DoubleDip),
            other => Err(invalid(format!("unknown split mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub beta: f64,
    pub mode: SplitMode,
    pub tol: f64,
    pub max_iter: usize,
}

impl SplitConfig {
    pub fn new(beta: f64, mode: SplitMode) -> Result<Self> {
        let cfg = Self {
            beta,
            mode,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.tol.is_nan() || self.tol <= 0.0 || self.max_iter == 0 {
            return Err(invalid("split solver needs tol > 0 and max_iter ≥ 1"));
        }
        Ok(())
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            beta: 0.25,
            mode: SplitMode::Split,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1), got {beta}")));
    }
    Ok(())
}

/// Solution of the adaptive split equation for one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub n: usize,
    pub beta: f64,
    /// Real-valued root of `n_e + n_e^{1−β} = n`.
    pub n_e_real: f64,
    /// `n_e_real` rounded to the nearest integer.
    pub n_e: usize,
    pub n_t: usize,
    /// `n_e / n` using the rounded `n_e`.
    pub rho: f64,
    pub rounded_up: bool,
    pub iterations: usize,
}

/// Newton solve of `n_e + n_e^{1−β} = n`, started from `⌊n/2⌋`.
///
/// The left-hand side is increasing and concave, so iterates rise
/// monotonically to the root.
pub fn adaptive_split_ratio(n: usize, beta: f64, tol: f64, max_iter: usize) -> Result<SplitRatio> {
    if n < 4 {
        return Err(CredalError::InsufficientSamples { needed: 4, got: n });
    }
    check_beta(beta)?;
    let nf = n as f64;
    let p = 1.0 - beta;
    let mut x = (n / 2) as f64;
    for it in 1..=max_iter {
        let f = x + x.powf(p) - nf;
        let df = 1.0 + p * x.powf(-beta);
        let next = x - f / df;
        if (next - x).abs() < tol {
            let n_e = next.round().clamp(1.0, nf - 1.0) as usize;
            return Ok(SplitRatio {
                n,
                beta,
                n_e_real: next,
                n_e,
                n_t: n - n_e,
                rho: n_e as f64 / nf,
                rounded_up: n_e as f64 > next,
                iterations: it,
            });
        }
        x = next;
    }
    Err(CredalError::NoConvergence { n, beta, iters: max_iter })
}

/// Estimation/testing parts of two credal samples, with the row indices
/// (into the original datasets) that went into each part.
#[derive(Debug, Clone)]
pub struct SplitSamples {
    pub est_x: CredalSample,
    pub est_y: CredalSample,
    pub test_x: CredalSample,
    pub test_y: CredalSample,
    pub est_idx_x: Vec<Vec<usize>>,
    pub test_idx_x: Vec<Vec<usize>>,
    pub est_idx_y: Vec<Vec<usize>>,
    pub test_idx_y: Vec<Vec<usize>>,
    pub mode: SplitMode,
}

struct Parts {
    est: Vec<Dataset>,
    test: Vec<Dataset>,
    est_idx: Vec<Vec<usize>>,
    test_idx: Vec<Vec<usize>>,
}

fn split_side<R: Rng + ?Sized>(s: &CredalSample, rho: f64, rng: &mut R) -> Result<Parts> {
    let mut parts = Parts {
        est: vec![],
        test: vec![],
        est_idx: vec![],
        test_idx: vec![],
    };
    for (j, ds) in s.extremes().iter().enumerate() {
        let n = ds.n_rows();
        // the small offset keeps ⌊n·(k/n)⌋ = k despite rounding in rho
        let n_est = ((n as f64) * rho + 1e-9).floor() as usize;
        if n_est == 0 || n_est >= n {
            return Err(CredalError::InvalidSplit(format!(
                "dataset {j} with {n} rows cannot be split at ratio {rho}"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let (e, t) = idx.split_at(n_est);
        let (mut e, mut t) = (e.to_vec(), t.to_vec());
        e.sort_unstable();
        t.sort_unstable();
        parts.est.push(ds.select_rows(&e)?);
        parts.test.push(ds.select_rows(&t)?);
        parts.est_idx.push(e);
        parts.test_idx.push(t);
    }
    Ok(parts)
}

/// Randomly assign `⌊n_j ρ⌋` rows of every dataset to estimation and the
/// rest to testing.
pub fn split_data<R: Rng + ?Sized>(
    sx: &CredalSample,
    sy: &CredalSample,
    rho: f64,
    rng: &mut R,
) -> Result<SplitSamples> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(CredalError::InvalidSplit(format!("rho must lie in (0, 1), got {rho}")));
    }
    let x = split_side(sx, rho, rng)?;
    let y = split_side(sy, rho, rng)?;
    Ok(SplitSamples {
        est_x: CredalSample::new(x.est)?,
        est_y: CredalSample::new(y.est)?,
        test_x: CredalSample::new(x.test)?,
        test_y: CredalSample::new(y.test)?,
        est_idx_x: x.est_idx,
        test_idx_x: x.test_idx,
        est_idx_y: y.est_idx,
        test_idx_y: y.test_idx,
        mode: SplitMode::Split,
    })
}

fn dip_side<R: Rng + ?Sized>(s: &CredalSample, beta: f64, rng: &mut R) -> Result<Parts> {
    let mut parts = Parts {
        est: vec![],
        test: vec![],
        est_idx: vec![],
        test_idx: vec![],
    };
    for (j, ds) in s.extremes().iter().enumerate() {
        let n = ds.n_rows();
        let n_t = ((n as f64).powf(1.0 - beta) + 1e-9).floor() as usize;
        if n_t == 0 {
            return Err(CredalError::InvalidSplit(format!(
                "dataset {j} with {n} rows leaves no testing rows"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut t = idx[..n_t].to_vec();
        t.sort_unstable();
        parts.est.push(ds.clone());
        parts.test.push(ds.select_rows(&t)?);
        parts.est_idx.push((0..n).collect());
        parts.test_idx.push(t);
    }
    Ok(parts)
}

/// Double-dipping preparation: estimation uses every row, testing a random
/// `⌊n_j^{1−β}⌋`-row subset of the same rows.
pub fn double_dip_data<R: Rng + ?Sized>(
    sx: &CredalSample,
    sy: &CredalSample,
    beta: f64,
    rng: &mut R,
) -> Result<SplitSamples> {
    check_beta(beta)?;
    let x = dip_side(sx, beta, rng)?;
    let y = dip_side(sy, beta, rng)?;
    Ok(SplitSamples {
        est_x: CredalSample::new(x.est)?,
        est_y: CredalSample::new(y.est)?,
        test_x: CredalSample::new(x.test)?,
        test_y: CredalSample::new(y.test)?,
        est_idx_x: x.est_idx,
        test_idx_x: x.test_idx,
        est_idx_y: y.est_idx,
        test_idx_y: y.test_idx,
        mode: SplitMode::DoubleDip,
    })
}

/// Split according to `cfg`. In split mode the ratio is solved for the
/// smallest dataset size across both samples and returned alongside.
pub fn prepare_samples<R: Rng + ?Sized>(
    sx: &CredalSample,
    sy: &CredalSample,
    cfg: &SplitConfig,
    rng: &mut R,
) -> Result<(SplitSamples, Option<SplitRatio>)> {
    cfg.validate()?;
    match cfg.mode {
        SplitMode::Split => {
            let n = sx.min_size().min(sy.min_size());
            let ratio = adaptive_split_ratio(n, cfg.beta, cfg.tol, cfg.max_iter)?;
            Ok((split_data(sx, sy, ratio.rho, rng)?, Some(ratio)))
        }
        SplitMode::DoubleDip => Ok((double_dip_data(sx, sy, cfg.beta, rng)?, None)),
    }
}

/// Rows resampled from a finite mixture, with their `(component, row)` origin.
#[derive(Debug, Clone)]
pub struct MixtureDraw {
    pub data: Dataset,
    pub sources: Vec<(usize, usize)>,
    /// Draws that hit an exhausted component and were re-assigned.
    pub exhaustion_events: usize,
}

/// Draw `target` rows without replacement from the mixture `weightsᵀ sample`.
///
/// Each row picks a component from the categorical law of `weights` and
/// then a uniformly random remaining row of it. When the picked component is
/// empty, the component is re-drawn from the non-empty ones with their
/// weights renormalised (uniformly if all of them carry zero weight).
pub fn redraw_mixture<R: Rng + ?Sized>(
    sample: &CredalSample,
    weights: &[f64],
    target: usize,
    rng: &mut R,
) -> Result<MixtureDraw> {
    if weights.len() != sample.len() {
        return Err(invalid(format!(
            "{} weights for {} extreme points",
            weights.len(),
            sample.len()
        )));
    }
    if target == 0 {
        return Err(invalid("redraw target must be positive"));
    }
    let mut pools: Vec<Vec<usize>> = sample.sizes().into_iter().map(|n| (0..n).collect()).collect();
    let mut sources = Vec::with_capacity(target);
    let mut events = 0;
    let pick = |w: &[f64], rng: &mut R| -> Option<usize> {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (j, &wj) in w.iter().enumerate() {
            if wj <= 0.0 {
                continue;
            }
            acc += wj;
            last = Some(j);
            if u < acc {
                return Some(j);
            }
        }
        last
    };
    while sources.len() < target {
        let mut j = pick(weights, rng).ok_or_else(|| invalid("weights sum to zero"))?;
        if pools[j].is_empty() {
            events += 1;
            let live: Vec<f64> = weights
                .iter()
                .zip(&pools)
                .map(|(&w, p)| if p.is_empty() { 0.0 } else { w })
                .collect();
            j = match pick(&live, rng) {
                Some(j) => j,
                None => {
                    let open: Vec<usize> = (0..pools.len()).filter(|&k| !pools[k].is_empty()).collect();
                    if open.is_empty() {
                        return Err(CredalError::Internal(format!(
                            "all components exhausted after {} of {target} draws",
                            sources.len()
                        )));
                    }
                    open[rng.random_range(0..open.len())]
                }
            };
        }
        let pool = &mut pools[j];
        let pos = rng.random_range(0..pool.len());
        let row = pool.swap_remove(pos);
        sources.push((j, row));
    }
    let rows: Vec<&[f64]> = sources.iter().map(|&(j, r)| sample.extreme(j).row(r)).collect();
    Ok(MixtureDraw {
        data: Dataset::from_rows(&rows)?,
        sources,
        exhaustion_events: events,
    })
}

/// Resampled mixtures for both sides of a test.
#[derive(Debug, Clone)]
pub struct Redraw {
    pub x: MixtureDraw,
    pub y: MixtureDraw,
}

/// Draw `λᵀS_X` and `ηᵀS_Y` samples whose sizes are the smallest extreme-point
/// sample size on the respective side.
pub fn redraw_samples<R: Rng + ?Sized>(
    sx: &CredalSample,
    sy: &CredalSample,
    lambda: &[f64],
    eta: &[f64],
    rng: &mut R,
) -> Result<Redraw> {
    let x = redraw_mixture(sx, lambda, sx.min_size(), rng)?;
    let y = redraw_mixture(sy, eta, sy.min_size(), rng)?;
    Ok(Redraw { x, y })
}
