//! Unbiased MMD² and the permutation-calibrated kernel two-sample test.
//!
//! For paired samples of equal size `n` the unbiased estimator is the
//! U-statistic
//!
//! ```text
//! MMD²(S_X, S_Y) = 1/(n(n−1)) Σ_{i≠j} h(x_i, y_i, x_j, y_j)
//! h = k(x_i, x_j) + k(y_i, y_j) − k(x_i, y_j) − k(x_j, y_i)
//! ```
//!
//! The null distribution is simulated either by the wild bootstrap (random
//! sign flips `ε_i ∈ {−1, +1}` per pair index, statistic `εᵀHε / (n(n−1))`)
//! or by reassigning pooled observations to the two samples. Both reuse a
//! single precomputed kernel matrix, so a replicate costs one O(n²) pass.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CredalError, Result};
use crate::kernel::{check_dims, gram_self, Dataset, KernelSpec};
use crate::rng::{substream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Reject,
    FailToReject,
}

impl Decision {
    /// `Reject` iff `p < alpha`.
    pub fn from_p_value(p_value: f64, alpha: f64) -> Self {
        if p_value < alpha {
            Decision::Reject
        } else {
            Decision::FailToReject
        }
    }

    pub fn is_reject(self) -> bool {
        self == Decision::Reject
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Reject => f.write_str("reject"),
            Decision::FailToReject => f.write_str("fail to reject"),
        }
    }
}

/// How null statistics are simulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullMethod {
    #[default]
    WildBootstrap,
    Permutation,
}

impl NullMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            NullMethod::WildBootstrap => "wild-bootstrap",
            NullMethod::Permutation => "permutation",
        }
    }
}

/// Outcome of one hypothesis test.
///
/// `statistic` is the raw MMD² of the final two-sample comparison; the
/// scaled `n_t · MMD²` is stored under the `scaled_statistic` metadata key.
/// Composite tests (inclusion, equality) carry their constituent reports in
/// `sub_reports` and a Bonferroni-adjusted p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub decision: Decision,
    pub p_value: f64,
    pub statistic: f64,
    pub permutations_used: usize,
    pub alpha: f64,
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_reports: Vec<TestReport>,
}

impl TestReport {
    /// Canonical serialisation. Keys are ordered, so equal reports produce
    /// identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub(crate) fn set(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }
}

/// `(1 + #{M_b ≥ M₀}) / (B + 1)`. Ties count against rejection.
pub fn permutation_p_value(observed: f64, simulated: &[f64]) -> f64 {
    let exceed = simulated.iter().filter(|&&m| m >= observed).count();
    (1 + exceed) as f64 / (simulated.len() + 1) as f64
}

fn check_pair(x: &Dataset, y: &Dataset) -> Result<usize> {
    check_dims(x.dim(), y.dim())?;
    let n = x.n_rows();
    if n != y.n_rows() {
        return Err(invalid(format!(
            "paired MMD estimator needs equal sample sizes, got {} and {}",
            n,
            y.n_rows()
        )));
    }
    if n < 2 {
        return Err(CredalError::InsufficientSamples { needed: 2, got: n });
    }
    Ok(n)
}

/// The symmetric matrix of U-statistic cores `H_ij = h(x_i, y_i, x_j, y_j)`
/// with a zero diagonal. Each kernel pair is evaluated once.
fn core_matrix(spec: &KernelSpec, x: &Dataset, y: &Dataset) -> Array2<f64> {
    let n = x.n_rows();
    let kxy = crate::kernel::gram_matrix(spec, x, y).expect("dimensions checked");
    let mut h = vec![0.0; n * n];
    h.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let (xi, yi) = (x.row(i), y.row(i));
        for j in (i + 1)..n {
            row[j] = (spec.eval_unchecked(xi, x.row(j)) + spec.eval_unchecked(yi, y.row(j)))
                - kxy[[i, j]]
                - kxy[[j, i]];
        }
    });
    for i in 0..n {
        for j in 0..i {
            h[i * n + j] = h[j * n + i];
        }
    }
    Array2::from_shape_vec((n, n), h).expect("square core matrix")
}

/// `Σ_i s_i Σ_j H_ij s_j`.
fn quadratic_form(h: &Array2<f64>, signs: &[f64]) -> f64 {
    let flat = h.as_slice().expect("standard layout");
    let n = signs.len();
    flat.chunks_exact(n)
        .zip(signs)
        .map(|(row, &si)| si * row.iter().zip(signs).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Unbiased MMD² between two equal-size samples. May be negative.
pub fn mmd2_unbiased(spec: &KernelSpec, x: &Dataset, y: &Dataset) -> Result<f64> {
    let n = check_pair(x, y)?;
    let h = core_matrix(spec, x, y);
    let ones = vec![1.0; n];
    Ok(quadratic_form(&h, &ones) / (n * (n - 1)) as f64)
}

/// Observed statistic and `b` simulated null statistics.
pub(crate) struct NullSimulation {
    pub observed: f64,
    pub simulated: Vec<f64>,
}

fn wild_bootstrap(spec: &KernelSpec, x: &Dataset, y: &Dataset, b: usize, seed: u64) -> NullSimulation {
    let n = x.n_rows();
    let h = core_matrix(spec, x, y);
    let norm = (n * (n - 1)) as f64;
    let observed = quadratic_form(&h, &vec![1.0; n]) / norm;
    let simulated = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, &[tag::REPLICATE, rep as u64]);
            let signs: Vec<f64> = (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            quadratic_form(&h, &signs) / norm
        })
        .collect();
    NullSimulation { observed, simulated }
}

/// U-statistic for the split `(first half, second half)` of a pooled index order.
fn pooled_statistic(k: &Array2<f64>, order: &[usize], n: usize) -> f64 {
    let (a, b) = order.split_at(n);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            total += (k[[a[i], a[j]]] + k[[b[i], b[j]]]) - k[[a[i], b[j]]] - k[[a[j], b[i]]];
        }
    }
    total / (n * (n - 1)) as f64
}

fn index_permutation(spec: &KernelSpec, x: &Dataset, y: &Dataset, b: usize, seed: u64) -> Result<NullSimulation> {
    let n = x.n_rows();
    let pooled = Dataset::concat(&[x, y])?;
    let k = gram_self(spec, &pooled);
    let identity: Vec<usize> = (0..2 * n).collect();
    let observed = pooled_statistic(&k, &identity, n);
    let simulated = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, &[tag::REPLICATE, rep as u64]);
            let mut order = identity.clone();
            order.shuffle(&mut rng);
            pooled_statistic(&k, &order, n)
        })
        .collect();
    Ok(NullSimulation { observed, simulated })
}

/// Kernel two-sample test calibrated by the wild bootstrap.
pub fn kernel_2s_test<R: Rng + ?Sized>(
    spec: &KernelSpec,
    x: &Dataset,
    y: &Dataset,
    permutations: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<TestReport> {
    kernel_2s_test_with(spec, x, y, permutations, alpha, NullMethod::WildBootstrap, rng)
}

/// Kernel two-sample test with an explicit null simulation method.
///
/// Replicate `b` draws from its own substream of a seed taken from `rng`,
/// so the result does not depend on thread scheduling.
pub fn kernel_2s_test_with<R: Rng + ?Sized>(
    spec: &KernelSpec,
    x: &Dataset,
    y: &Dataset,
    permutations: usize,
    alpha: f64,
    method: NullMethod,
    rng: &mut R,
) -> Result<TestReport> {
    let n = check_pair(x, y)?;
    if permutations == 0 {
        return Err(invalid("number of simulated statistics must be at least 1"));
    }
    check_alpha(alpha)?;
    let seed: u64 = rng.random();
    let sim = match method {
        NullMethod::WildBootstrap => wild_bootstrap(spec, x, y, permutations, seed),
        NullMethod::Permutation => index_permutation(spec, x, y, permutations, seed)?,
    };
    let p_value = permutation_p_value(sim.observed, &sim.simulated);
    let mut report = TestReport {
        test: "two-sample".into(),
        decision: Decision::from_p_value(p_value, alpha),
        p_value,
        statistic: sim.observed,
        permutations_used: permutations,
        alpha,
        metadata: BTreeMap::new(),
        sub_reports: Vec::new(),
    };
    report.set("null_method", method.as_str());
    report.set("n_test", n);
    report.set("bandwidth", spec.bandwidth());
    report.set("scaled_statistic", n as f64 * sim.observed);
    report.set("bootstrap_seed", seed);
    Ok(report)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}
