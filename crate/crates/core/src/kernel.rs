//! Kernel evaluation, Gram matrices, and bandwidth selection.
//!
//! Only the Gaussian kernel is shipped:
//!
//! ```text
//! k(x, y) = exp(-‖x − y‖² / (2σ²))
//! ```
//!
//! It is bounded, continuous and characteristic, so the MMD it induces is a
//! proper metric on distributions. Distances are always computed directly
//! from coordinate differences in `f64`.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CredalError, Result};

/// An `n × d` matrix of i.i.d. observations, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
}

impl Dataset {
    /// Validates shape (`n ≥ 1`, `d ≥ 1`) and finiteness.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(invalid(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if let Some((idx, _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite value at row {}, column {}",
                idx.0, idx.1
            )));
        }
        let values = values.as_standard_layout().into_owned();
        Ok(Self { values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut flat = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(invalid(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            flat.extend_from_slice(r);
        }
        let values = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| CredalError::Internal(e.to_string()))?;
        Self::new(values)
    }

    /// One-dimensional dataset, one observation per value.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        let values = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| CredalError::Internal(e.to_string()))?;
        Self::new(values)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        let flat = self.values.as_slice().expect("standard layout");
        &flat[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        let d = self.dim();
        self.values
            .as_slice()
            .expect("standard layout")
            .chunks_exact(d)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    /// The rows at `indices`, in that order. Panics on out-of-range indices.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("cannot select zero rows"));
        }
        Ok(Self {
            values: self.values.select(Axis(0), indices),
        })
    }

    /// Stack datasets of equal dimension vertically.
    pub fn concat(parts: &[&Dataset]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| invalid("nothing to concatenate"))?;
        for p in parts {
            check_dims(first.dim(), p.dim())?;
        }
        let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| CredalError::Internal(e.to_string()))?;
        Ok(Self { values })
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(CredalError::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Gaussian,
}

/// A kernel family together with its bandwidth σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Kernel value with no dimension check; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
        }
    }
}

/// `k(x, y)` for two points of equal dimension.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x.len(), y.len())?;
    Ok(spec.eval_unchecked(x, y))
}

/// The `n_A × n_B` matrix of kernel values between the rows of `a` and `b`.
pub fn gram_matrix(spec: &KernelSpec, a: &Dataset, b: &Dataset) -> Result<Array2<f64>> {
    check_dims(a.dim(), b.dim())?;
    let (na, nb) = (a.n_rows(), b.n_rows());
    let mut out = vec![0.0; na * nb];
    out.par_chunks_mut(nb).enumerate().for_each(|(i, dst)| {
        let xi = a.row(i);
        for (j, v) in dst.iter_mut().enumerate() {
            *v = spec.eval_unchecked(xi, b.row(j));
        }
    });
    Array2::from_shape_vec((na, nb), out).map_err(|e| CredalError::Internal(e.to_string()))
}

/// Symmetric Gram matrix of a dataset with itself; evaluates each pair once.
pub(crate) fn gram_self(spec: &KernelSpec, a: &Dataset) -> Array2<f64> {
    let n = a.n_rows();
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        let xi = a.row(i);
        for j in (i + 1)..n {
            let v = spec.eval_unchecked(xi, a.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Sum of all kernel values `Σ_i Σ_j k(a_i, b_j)` without materialising the matrix.
pub(crate) fn gram_sum(spec: &KernelSpec, a: &Dataset, b: &Dataset) -> f64 {
    (0..a.n_rows())
        .into_par_iter()
        .map(|i| {
            let xi = a.row(i);
            b.rows().map(|y| spec.eval_unchecked(xi, y)).sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// `Σ_i Σ_j k(a_i, a_j)` using symmetry.
pub(crate) fn gram_sum_self(spec: &KernelSpec, a: &Dataset) -> f64 {
    let n = a.n_rows();
    let off: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = a.row(i);
            ((i + 1)..n)
                .map(|j| spec.eval_unchecked(xi, a.row(j)))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    // k(x, x) = 1 for the Gaussian kernel
    n as f64 + 2.0 * off
}

/// Median of all pairwise Euclidean distances over the pooled rows.
///
/// For an even number of pairs the two middle values are averaged.
pub fn median_heuristic_bandwidth(datasets: &[&Dataset]) -> Result<f64> {
    let first = datasets
        .first()
        .ok_or_else(|| invalid("median heuristic needs at least one dataset"))?;
    for ds in datasets {
        check_dims(first.dim(), ds.dim())?;
    }
    let pooled: Vec<&[f64]> = datasets.iter().flat_map(|ds| ds.rows()).collect();
    let n = pooled.len();
    if n < 2 {
        return Err(CredalError::InsufficientSamples { needed: 2, got: n });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = pooled[i]
                .iter()
                .zip(pooled[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(sq.sqrt());
        }
    }
    let median = median_in_place(&mut dists);
    if median <= 0.0 {
        return Err(CredalError::DegenerateData(
            "median pairwise distance is zero".into(),
        ));
    }
    Ok(median)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let m = v.len();
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    let (_, upper, _) = v.select_nth_unstable_by(m / 2, cmp);
    let upper = *upper;
    if m % 2 == 1 {
        upper
    } else {
        // largest element of the lower half
        let lower = v[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}
