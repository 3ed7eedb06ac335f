//! Kernel two-sample tests for finitely generated credal sets.
//!
//! A credal sample is a list of datasets, one per extreme point of a convex
//! set of distributions. The tests compare the convex hulls of two such
//! collections through the kernel credal discrepancy (KCD): the squared RKHS
//! distance between mixtures of kernel mean embeddings.

pub mod credal_tests;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kcd;
pub mod kernel;
pub mod linalg;
pub mod mmd;
pub mod rng;
pub mod simplex;
pub mod splitting;
pub mod synth;

pub use error::{CredalError, Result};
pub use kcd::{credal_discrepancies, kcd_gradient, kcd_value, kme_grams, CredalSample, KcdGrams, Weights};
pub use kernel::{gram_matrix, kernel_eval, median_heuristic_bandwidth, Dataset, KernelFamily, KernelSpec};
pub use mmd::{kernel_2s_test, mmd2_unbiased, Decision, NullMethod, TestReport};
pub use rng::{derive_seed, substream, CredalRng};
pub use simplex::{minimize_biconvex, minimize_eta, project_to_simplex, OptResult, OptimizerConfig};
pub use splitting::{adaptive_split_ratio, redraw_samples, split_data, SplitConfig, SplitMode, SplitRatio};
pub use credal_tests::{equality_test, inclusion_test, plausibility_test, specification_test, Bandwidth, CredalTestConfig};
pub use synth::{build_scenario, Hypothesis, Scenario, ScenarioSpec, TestKind};
pub use experiment::{run_experiment, ExperimentConfig, RejectionRecord};
