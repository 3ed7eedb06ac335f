//! The four credal hypothesis tests.
//!
//! | test | null hypothesis |
//! |---|---|
//! | specification | `P_X ∈ 𝒞_Y` |
//! | inclusion | `𝒞_X ⊆ 𝒞_Y` |
//! | equality | `𝒞_X = 𝒞_Y` |
//! | plausibility | `𝒞_X ∩ 𝒞_Y ≠ ∅` |
//!
//! Specification and plausibility share one pipeline: split every extreme
//! point sample into estimation and testing parts, align mixture weights on
//! the estimation parts by minimising the empirical KCD, resample the aligned
//! mixtures from the testing parts, and run a kernel two-sample test on the
//! result. Inclusion runs one specification test per extreme point of `𝒞_X`
//! at level `α/ℓ`; equality runs inclusion in both directions at `α/2`.
//!
//! Every random stage draws from a substream of `CredalTestConfig::seed`, so a
//! report together with its config is enough to reproduce it bit for bit.

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CredalError, Result};
use crate::kcd::{kme_grams, CredalSample};
use crate::kernel::{median_heuristic_bandwidth, Dataset, KernelSpec};
use crate::mmd::{check_alpha, kernel_2s_test_with, Decision, NullMethod, TestReport};
use crate::rng::{derive_seed, substream, tag};
use crate::simplex::{minimize_biconvex, minimize_eta, OptResult, OptimizerConfig};
use crate::splitting::{prepare_samples, redraw_samples, SplitConfig, SplitMode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Median pairwise distance of the pooled testing rows.
    #[default]
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredalTestConfig {
    pub bandwidth: Bandwidth,
    pub split: SplitConfig,
    pub alpha: f64,
    /// Number of simulated null statistics `B`.
    pub permutations: usize,
    pub null_method: NullMethod,
    /// Solver for the convex alignment of specification tests.
    pub eta_optimizer: OptimizerConfig,
    /// Solver for the joint alignment of plausibility tests.
    pub biconvex_optimizer: OptimizerConfig,
    pub seed: u64,
    /// The median heuristic runs on a random subset of at most this many
    /// pooled rows.
    pub bandwidth_max_points: usize,
}

impl Default for CredalTestConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Median,
            split: SplitConfig::default(),
            alpha: 0.05,
            permutations: 500,
            null_method: NullMethod::WildBootstrap,
            eta_optimizer: OptimizerConfig::convex_default(),
            biconvex_optimizer: OptimizerConfig::biconvex_default(),
            seed: 0,
            bandwidth_max_points: 1000,
        }
    }
}

impl CredalTestConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.permutations == 0 {
            return Err(invalid("permutations must be at least 1"));
        }
        if self.bandwidth_max_points < 2 {
            return Err(invalid("bandwidth_max_points must be at least 2"));
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            KernelSpec::gaussian(s)?;
        }
        self.split.validate()?;
        self.eta_optimizer.validate()?;
        self.biconvex_optimizer.validate()
    }

    fn with(&self, alpha: f64, seed: u64) -> Self {
        Self {
            alpha,
            seed,
            ..self.clone()
        }
    }
}

/// Seed of the `i`-th specification sub-test inside an inclusion test.
pub fn inclusion_subseed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &[tag::SUBTEST, i as u64])
}

/// Seeds of the two inclusion tests inside an equality test: the first
/// checks `𝒞_X ⊆ 𝒞_Y`, the second `𝒞_Y ⊆ 𝒞_X`.
pub fn equality_subseeds(seed: u64) -> (u64, u64) {
    (
        derive_seed(seed, &[tag::SUBTEST, 1 << 32]),
        derive_seed(seed, &[tag::SUBTEST, (1 << 32) + 1]),
    )
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("value serialises")
}

/// Bandwidth from the pooled testing parts, on a seeded subset when there
/// are more than `max_points` rows.
fn pooled_bandwidth(parts: &[&Dataset], max_points: usize, seed: u64) -> Result<f64> {
    let pooled = Dataset::concat(parts)?;
    if pooled.n_rows() <= max_points {
        return median_heuristic_bandwidth(&[&pooled]);
    }
    let mut rng = substream(seed, &[tag::BANDWIDTH]);
    let mut idx = sample_indices(&mut rng, pooled.n_rows(), max_points).into_vec();
    idx.sort_unstable();
    median_heuristic_bandwidth(&[&pooled.select_rows(&idx)?])
}

enum Alignment {
    Convex,
    Joint,
}

fn aligned_test(
    name: &str,
    sx: &CredalSample,
    sy: &CredalSample,
    cfg: &CredalTestConfig,
    how: Alignment,
) -> Result<TestReport> {
    cfg.validate()?;
    check_dims_of(sx, sy)?;
    let seed = cfg.seed;

    let (parts, ratio) = prepare_samples(sx, sy, &cfg.split, &mut substream(seed, &[tag::SPLIT]))?;

    let test_parts: Vec<&Dataset> = parts
        .test_x
        .extremes()
        .iter()
        .chain(parts.test_y.extremes())
        .collect();
    let (sigma, source) = match cfg.bandwidth {
        Bandwidth::Median => (
            pooled_bandwidth(&test_parts, cfg.bandwidth_max_points, seed)?,
            "median",
        ),
        Bandwidth::Fixed(s) => (s, "fixed"),
    };
    let spec = KernelSpec::gaussian(sigma)?;

    let grams = kme_grams(&spec, &parts.est_x, &parts.est_y)?;
    let align_seed = derive_seed(seed, &[tag::ALIGN]);
    let opt: OptResult = match how {
        Alignment::Convex => minimize_eta(
            &grams,
            &OptimizerConfig {
                seed: align_seed,
                ..cfg.eta_optimizer.clone()
            },
        )?,
        Alignment::Joint => minimize_biconvex(
            &grams,
            &OptimizerConfig {
                seed: align_seed,
                ..cfg.biconvex_optimizer.clone()
            },
        )?,
    };

    let redraw = redraw_samples(
        &parts.test_x,
        &parts.test_y,
        &opt.lambda,
        &opt.eta,
        &mut substream(seed, &[tag::REDRAW]),
    )?;
    let common = redraw.x.data.n_rows().min(redraw.y.data.n_rows());
    let keep: Vec<usize> = (0..common).collect();
    let x = redraw.x.data.select_rows(&keep)?;
    let y = redraw.y.data.select_rows(&keep)?;
    let two = kernel_2s_test_with(
        &spec,
        &x,
        &y,
        cfg.permutations,
        cfg.alpha,
        cfg.null_method,
        &mut substream(seed, &[tag::BOOTSTRAP]),
    )?;

    let mut report = TestReport {
        test: name.to_string(),
        sub_reports: Vec::new(),
        ..two
    };
    report.set("bandwidth_source", source);
    report.set("seed", seed);
    report.set("mode", cfg.split.mode.as_str());
    report.set("beta", cfg.split.beta);
    match ratio {
        Some(r) => {
            report.set("rho", r.rho);
            report.set("n_e", r.n_e);
            report.set("n_t", r.n_t);
        }
        None => {
            let n = sx.min_size().min(sy.min_size());
            report.set("rho", 1.0);
            report.set("n_e", n);
            report.set("n_t", ((n as f64).powf(1.0 - cfg.split.beta) + 1e-9).floor() as usize);
        }
    }
    if cfg.split.mode == SplitMode::DoubleDip {
        report.set(
            "warning",
            "double-dip reuses estimation rows for testing; Type I error is not controlled",
        );
    }
    report.set("est_sizes_x", json(&parts.est_x.sizes()));
    report.set("est_sizes_y", json(&parts.est_y.sizes()));
    report.set("test_sizes_x", json(&parts.test_x.sizes()));
    report.set("test_sizes_y", json(&parts.test_y.sizes()));
    report.set("mixed_sizes", sx.has_mixed_sizes() || sy.has_mixed_sizes());
    report.set("lambda", json(opt.lambda.as_slice()));
    report.set("eta", json(opt.eta.as_slice()));
    report.set("objective", opt.objective);
    report.set("converged", opt.converged);
    report.set("optimizer_iters", opt.iters);
    report.set("optimizer_starts", opt.starts);
    if matches!(how, Alignment::Joint) {
        let first = opt.trace.first().copied().unwrap_or(opt.objective);
        report.set("objective_trace", json(&[first, opt.objective]));
    }
    report.set(
        "exhaustion_events",
        redraw.x.exhaustion_events + redraw.y.exhaustion_events,
    );
    if !opt.converged {
        log::warn!("{name}: alignment stopped before convergence (objective {})", opt.objective);
    }
    Ok(report)
}

fn check_dims_of(sx: &CredalSample, sy: &CredalSample) -> Result<()> {
    if sx.dim() != sy.dim() {
        return Err(CredalError::DimensionMismatch {
            expected: sx.dim(),
            found: sy.dim(),
        });
    }
    Ok(())
}

/// Test `H₀: P_X ∈ 𝒞_Y` from a sample of `P_X` and a credal sample of `𝒞_Y`.
pub fn specification_test(
    sx: &Dataset,
    sy: &CredalSample,
    cfg: &CredalTestConfig,
) -> Result<TestReport> {
    aligned_test(
        "specification",
        &CredalSample::singleton(sx.clone()),
        sy,
        cfg,
        Alignment::Convex,
    )
}

/// Test `H₀: 𝒞_X ∩ 𝒞_Y ≠ ∅`.
///
/// If the alternating solver stops early the test still runs on the best
/// iterate and the report carries `converged = false`.
pub fn plausibility_test(
    sx: &CredalSample,
    sy: &CredalSample,
    cfg: &CredalTestConfig,
) -> Result<TestReport> {
    aligned_test("plausibility", sx, sy, cfg, Alignment::Joint)
}

fn combine(name: &str, subs: Vec<TestReport>, alpha: f64, seed: u64) -> TestReport {
    let k = subs.len() as f64;
    let min_p = subs.iter().map(|r| r.p_value).fold(f64::INFINITY, f64::min);
    let decision = if subs.iter().any(|r| r.decision.is_reject()) {
        Decision::Reject
    } else {
        Decision::FailToReject
    };
    let mut report = TestReport {
        test: name.to_string(),
        decision,
        p_value: (k * min_p).min(1.0),
        statistic: subs.iter().map(|r| r.statistic).fold(f64::NEG_INFINITY, f64::max),
        permutations_used: subs.iter().map(|r| r.permutations_used).sum(),
        alpha,
        metadata: Default::default(),
        sub_reports: subs,
    };
    report.set("seed", seed);
    report.set("sub_tests", report.sub_reports.len());
    report.set("sub_alpha", alpha / k);
    report
}

/// Test `H₀: 𝒞_X ⊆ 𝒞_Y` with one specification test per extreme point of
/// `𝒞_X`, each at level `α/ℓ` on its own split.
///
/// The reported p-value is `min(1, ℓ · min pᵢ)`, which rejects at `α`
/// exactly when some sub-test rejects at `α/ℓ`. `statistic` is the largest
/// sub-test statistic.
pub fn inclusion_test(
    sx: &CredalSample,
    sy: &CredalSample,
    cfg: &CredalTestConfig,
) -> Result<TestReport> {
    cfg.validate()?;
    check_dims_of(sx, sy)?;
    let l = sx.len();
    let sub_alpha = cfg.alpha / l as f64;
    let subs = sx
        .extremes()
        .par_iter()
        .enumerate()
        .map(|(i, ds)| {
            specification_test(ds, sy, &cfg.with(sub_alpha, inclusion_subseed(cfg.seed, i)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = combine("inclusion", subs, cfg.alpha, cfg.seed);
    report.set("sizes_x", json(&sx.sizes()));
    report.set("sizes_y", json(&sy.sizes()));
    Ok(report)
}

/// Test `H₀: 𝒞_X = 𝒞_Y` by inclusion in both directions at level `α/2`.
pub fn equality_test(
    sx: &CredalSample,
    sy: &CredalSample,
    cfg: &CredalTestConfig,
) -> Result<TestReport> {
    cfg.validate()?;
    check_dims_of(sx, sy)?;
    let half = cfg.alpha / 2.0;
    let (s1, s2) = equality_subseeds(cfg.seed);
    let (a, b) = rayon::join(
        || inclusion_test(sx, sy, &cfg.with(half, s1)),
        || inclusion_test(sy, sx, &cfg.with(half, s2)),
    );
    let mut report = combine("equality", vec![a?, b?], cfg.alpha, cfg.seed);
    report.set("sizes_x", json(&sx.sizes()));
    report.set("sizes_y", json(&sy.sizes()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmd::kernel_2s_test_with;
    use crate::rng::CredalRng;
    use crate::splitting::{adaptive_split_ratio, split_data};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, shift: f64, seed: u64) -> Dataset {
        let mut rng = CredalRng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| shift + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        Dataset::from_rows(&rows).unwrap()
    }

    fn cfg(seed: u64) -> CredalTestConfig {
        CredalTestConfig {
            permutations: 99,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn specification_report_has_full_metadata() {
        let x = gaussian(120, 2, 0.0, 1);
        let sy = CredalSample::new(vec![gaussian(120, 2, 0.0, 2), gaussian(100, 2, 1.0, 3)]).unwrap();
        let r = specification_test(&x, &sy, &cfg(7)).unwrap();
        for key in [
            "bandwidth", "rho", "beta", "mode", "n_e", "n_t", "lambda", "eta", "seed", "objective",
            "converged", "exhaustion_events", "mixed_sizes", "scaled_statistic", "n_test",
        ] {
            assert!(r.meta(key).is_some(), "missing {key}");
        }
        assert_eq!(r.test, "specification");
        assert_eq!(r.meta("mixed_sizes"), Some("true"));
        let k = (r.p_value * 100.0).round();
        assert!((r.p_value * 100.0 - k).abs() < 1e-9);
        assert_eq!(r.to_json(), specification_test(&x, &sy, &cfg(7)).unwrap().to_json());
    }

    #[test]
    fn separated_specification_rejects() {
        let x = gaussian(200, 2, 4.0, 1);
        let sy = CredalSample::new(vec![gaussian(200, 2, 0.0, 2), gaussian(200, 2, -1.0, 3)]).unwrap();
        let r = specification_test(&x, &sy, &cfg(3)).unwrap();
        assert!(r.decision.is_reject());
        // alignment picks the closer extreme point
        let eta: Vec<f64> = serde_json::from_str(r.meta("eta").unwrap()).unwrap();
        assert!(eta[0] > 0.99, "{eta:?}");
    }

    #[test]
    fn singleton_reduction_matches_manual_pipeline() {
        let x = gaussian(150, 3, 0.0, 11);
        let y = gaussian(150, 3, 0.3, 12);
        let c = cfg(5);
        let report = specification_test(&x, &CredalSample::singleton(y.clone()), &c).unwrap();

        let sx = CredalSample::singleton(x);
        let sy = CredalSample::singleton(y);
        let ratio = adaptive_split_ratio(150, c.split.beta, 1e-8, 100).unwrap();
        let parts = split_data(&sx, &sy, ratio.rho, &mut substream(5, &[tag::SPLIT])).unwrap();
        let sigma = median_heuristic_bandwidth(&[parts.test_x.extreme(0), parts.test_y.extreme(0)]).unwrap();
        let spec = KernelSpec::gaussian(sigma).unwrap();
        let redraw = redraw_samples(&parts.test_x, &parts.test_y, &[1.0], &[1.0], &mut substream(5, &[tag::REDRAW])).unwrap();
        let manual = kernel_2s_test_with(
            &spec,
            &redraw.x.data,
            &redraw.y.data,
            c.permutations,
            c.alpha,
            c.null_method,
            &mut substream(5, &[tag::BOOTSTRAP]),
        )
        .unwrap();
        assert_eq!(report.statistic, manual.statistic);
        assert_eq!(report.p_value, manual.p_value);
        assert_eq!(report.decision, manual.decision);

        let plaus = plausibility_test(&sx, &sy, &c).unwrap();
        assert_eq!(plaus.statistic, manual.statistic);
        assert_eq!(plaus.p_value, manual.p_value);
    }

    #[test]
    fn inclusion_with_one_extreme_is_a_specification_test() {
        let x = gaussian(100, 2, 0.5, 1);
        let sy = CredalSample::new(vec![gaussian(100, 2, 0.0, 2), gaussian(100, 2, 1.0, 3)]).unwrap();
        let c = cfg(9);
        let incl = inclusion_test(&CredalSample::singleton(x.clone()), &sy, &c).unwrap();
        let spec = specification_test(&x, &sy, &c.with(c.alpha, inclusion_subseed(9, 0))).unwrap();
        assert_eq!(incl.decision, spec.decision);
        assert_eq!(incl.p_value, spec.p_value);
        assert_eq!(incl.sub_reports.len(), 1);
    }

    #[test]
    fn composite_p_values_follow_bonferroni() {
        let sx = CredalSample::new(vec![gaussian(80, 2, 0.0, 1), gaussian(80, 2, 3.0, 2)]).unwrap();
        let sy = CredalSample::new(vec![gaussian(80, 2, 0.0, 3), gaussian(80, 2, 0.2, 4)]).unwrap();
        let c = cfg(2);
        let incl = inclusion_test(&sx, &sy, &c).unwrap();
        let min_p = incl.sub_reports.iter().map(|r| r.p_value).fold(1.0, f64::min);
        assert_eq!(incl.p_value, (2.0 * min_p).min(1.0));
        assert!(incl.sub_reports.iter().all(|r| r.alpha == 0.025));
        assert!(incl.decision.is_reject());
        assert_eq!(incl.decision.is_reject(), incl.p_value < c.alpha);

        let eq = equality_test(&sx, &sy, &c).unwrap();
        assert_eq!(eq.sub_reports.len(), 2);
        assert!(eq.sub_reports.iter().all(|r| r.alpha == 0.025));
        assert!(eq.decision.is_reject());
        assert_eq!(eq.to_json(), equality_test(&sx, &sy, &c).unwrap().to_json());
    }

    #[test]
    fn double_dip_is_flagged() {
        let x = gaussian(100, 2, 0.0, 1);
        let sy = CredalSample::singleton(gaussian(100, 2, 0.0, 2));
        let mut c = cfg(1);
        c.split.mode = SplitMode::DoubleDip;
        let r = specification_test(&x, &sy, &c).unwrap();
        assert!(r.meta("warning").is_some());
        assert_eq!(r.meta("n_test"), Some("31"));
    }

    #[test]
    fn invalid_inputs_are_errors() {
        let x = gaussian(50, 2, 0.0, 1);
        let sy = CredalSample::singleton(gaussian(50, 3, 0.0, 2));
        assert!(matches!(
            specification_test(&x, &sy, &cfg(0)),
            Err(CredalError::DimensionMismatch { .. })
        ));
        let sy = CredalSample::singleton(gaussian(50, 2, 0.0, 2));
        let mut c = cfg(0);
        c.alpha = 1.0;
        assert!(specification_test(&x, &sy, &c).is_err());
        c.alpha = 0.05;
        c.permutations = 0;
        assert!(specification_test(&x, &sy, &c).is_err());
        let flat = Dataset::from_scalars(&[1.0; 40]).unwrap();
        let r = specification_test(&flat, &CredalSample::singleton(flat.clone()), &cfg(0));
        assert!(matches!(r, Err(CredalError::DegenerateData(_))));
    }

    #[test]
    fn p_value_does_not_depend_on_alpha() {
        let x = gaussian(100, 2, 0.3, 1);
        let sy = CredalSample::singleton(gaussian(100, 2, 0.0, 2));
        let a = specification_test(&x, &sy, &cfg(4)).unwrap();
        let mut c = cfg(4);
        c.alpha = 0.2;
        let b = specification_test(&x, &sy, &c).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert!(!a.decision.is_reject() || b.decision.is_reject());
    }
}
