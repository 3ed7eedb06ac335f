//! Kernel credal discrepancy.
//!
//! For credal sets generated by extreme points `P_X^(1..ℓ)` and `P_Y^(1..r)`,
//! the squared MMD between the mixtures `λᵀP_X` and `ηᵀP_Y` is the quadratic
//!
//! ```text
//! L(λ, η) = λᵀ M_XX λ − 2 λᵀ M_XY η + ηᵀ M_YY η
//! ```
//!
//! where `[M_XY]_ij = ⟨μ_i, μ_j⟩` are inner products of kernel mean
//! embeddings. The empirical version replaces each entry by the grand mean of
//! the cross Gram matrix between the two samples, including the `i = j`
//! terms of within-sample blocks.

use std::ops::Deref;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CredalError, Result};
use crate::kernel::{check_dims, gram_sum, gram_sum_self, Dataset, KernelSpec};
use crate::simplex::{minimize_biconvex, minimize_eta_for_row, OptimizerConfig};

/// One i.i.d. sample per extreme point of a finitely generated credal set.
#[derive(Debug, Clone, PartialEq)]
pub struct CredalSample {
    extremes: Vec<Dataset>,
}

impl CredalSample {
    pub fn new(extremes: Vec<Dataset>) -> Result<Self> {
        let first = extremes
            .first()
            .ok_or_else(|| invalid("a credal sample needs at least one extreme point"))?;
        for ds in &extremes {
            check_dims(first.dim(), ds.dim())?;
        }
        Ok(Self { extremes })
    }

    pub fn singleton(ds: Dataset) -> Self {
        Self { extremes: vec![ds] }
    }

    pub fn len(&self) -> usize {
        self.extremes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extremes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.extremes[0].dim()
    }

    pub fn extremes(&self) -> &[Dataset] {
        &self.extremes
    }

    pub fn extreme(&self, i: usize) -> &Dataset {
        &self.extremes[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.extremes.iter().map(Dataset::n_rows).collect()
    }

    pub fn min_size(&self) -> usize {
        self.sizes().into_iter().min().unwrap_or(0)
    }

    pub fn has_mixed_sizes(&self) -> bool {
        let s = self.sizes();
        s.iter().any(|&v| v != s[0])
    }

    pub fn into_extremes(self) -> Vec<Dataset> {
        self.extremes
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(Vec<f64>);

impl Weights {
    /// Entries down to `−1e-12` are clamped to zero, then the vector is
    /// renormalised. The sum must already be within `1e-9` of one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("weights must be non-empty"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < -1e-12) {
            return Err(invalid(format!("weight entry {v} is not a valid probability")));
        }
        let clamped: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let sum: f64 = clamped.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self(clamped.into_iter().map(|v| v / sum).collect()))
    }

    /// Clamp and renormalise without the sum check; used on solver output.
    pub(crate) fn from_simplex_point(values: Vec<f64>) -> Self {
        let clamped: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let sum: f64 = clamped.iter().sum();
        debug_assert!(sum > 0.0);
        Self(clamped.into_iter().map(|v| v / sum).collect())
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m > 0, "uniform weights need m > 0");
        Self(vec![1.0 / m as f64; m])
    }

    /// The `i`-th vertex of the simplex.
    pub fn vertex(m: usize, i: usize) -> Self {
        assert!(i < m, "vertex index out of range");
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Weights {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Gram matrices between (empirical) kernel mean embeddings of the extreme points.
#[derive(Debug, Clone, PartialEq)]
pub struct KcdGrams {
    mxx: Array2<f64>,
    mxy: Array2<f64>,
    myy: Array2<f64>,
}

impl KcdGrams {
    /// Build from explicit matrices (`ℓ×ℓ`, `ℓ×r`, `r×r`). The diagonal
    /// blocks must be symmetric.
    pub fn from_matrices(mxx: Array2<f64>, mxy: Array2<f64>, myy: Array2<f64>) -> Result<Self> {
        let (l, r) = mxy.dim();
        if l == 0 || r == 0 || mxx.dim() != (l, l) || myy.dim() != (r, r) {
            return Err(invalid(format!(
                "incompatible Gram shapes {:?}, {:?}, {:?}",
                mxx.dim(),
                mxy.dim(),
                myy.dim()
            )));
        }
        for m in [&mxx, &myy] {
            let asym = m
                .indexed_iter()
                .map(|((i, j), v)| (v - m[[j, i]]).abs())
                .fold(0.0, f64::max);
            if asym > 1e-12 || m.iter().any(|v| !v.is_finite()) {
                return Err(invalid("within-set Gram blocks must be finite and symmetric"));
            }
        }
        if mxy.iter().any(|v| !v.is_finite()) {
            return Err(invalid("cross Gram block must be finite"));
        }
        Ok(Self { mxx, mxy, myy })
    }

    pub fn mxx(&self) -> &Array2<f64> {
        &self.mxx
    }

    pub fn mxy(&self) -> &Array2<f64> {
        &self.mxy
    }

    pub fn myy(&self) -> &Array2<f64> {
        &self.myy
    }

    /// Number of X-side extreme points (ℓ).
    pub fn x_len(&self) -> usize {
        self.mxx.nrows()
    }

    /// Number of Y-side extreme points (r).
    pub fn y_len(&self) -> usize {
        self.myy.nrows()
    }

    /// The same record with the roles of X and Y exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            mxx: self.myy.clone(),
            mxy: self.mxy.t().to_owned(),
            myy: self.mxx.clone(),
        }
    }

    /// Restrict the X side to extreme point `i`.
    pub fn x_row(&self, i: usize) -> Self {
        Self {
            mxx: Array2::from_elem((1, 1), self.mxx[[i, i]]),
            mxy: self.mxy.row(i).to_owned().insert_axis(ndarray::Axis(0)),
            myy: self.myy.clone(),
        }
    }
}

/// Empirical KME Gram matrices: each entry is the grand mean of the cross
/// Gram matrix between the two samples.
pub fn kme_grams(spec: &KernelSpec, sx: &CredalSample, sy: &CredalSample) -> Result<KcdGrams> {
    check_dims(sx.dim(), sy.dim())?;
    let mean = |a: &Dataset, b: &Dataset| gram_sum(spec, a, b) / (a.n_rows() * b.n_rows()) as f64;
    let self_mean = |a: &Dataset| gram_sum_self(spec, a) / (a.n_rows() * a.n_rows()) as f64;
    let within = |s: &CredalSample| {
        let m = s.len();
        let mut out = Array2::zeros((m, m));
        for i in 0..m {
            out[[i, i]] = self_mean(s.extreme(i));
            for j in (i + 1)..m {
                let v = mean(s.extreme(i), s.extreme(j));
                out[[i, j]] = v;
                out[[j, i]] = v;
            }
        }
        out
    };
    let mxx = within(sx);
    let myy = within(sy);
    let mut mxy = Array2::zeros((sx.len(), sy.len()));
    for i in 0..sx.len() {
        for j in 0..sy.len() {
            mxy[[i, j]] = mean(sx.extreme(i), sy.extreme(j));
        }
    }
    Ok(KcdGrams { mxx, mxy, myy })
}

fn check_lengths(g: &KcdGrams, lambda: &[f64], eta: &[f64]) -> Result<()> {
    if lambda.len() != g.x_len() || eta.len() != g.y_len() {
        return Err(invalid(format!(
            "weight lengths ({}, {}) do not match Gram dimensions ({}, {})",
            lambda.len(),
            eta.len(),
            g.x_len(),
            g.y_len()
        )));
    }
    Ok(())
}

fn bilinear(m: &Array2<f64>, u: &[f64], v: &[f64]) -> f64 {
    let u = Array1::from(u.to_vec());
    let v = Array1::from(v.to_vec());
    u.dot(&m.dot(&v))
}

/// `λᵀM_XXλ − 2λᵀM_XYη + ηᵀM_YYη`, unclamped.
///
/// Accepts arbitrary real vectors (not only simplex points) so it can be
/// probed by finite differences.
pub fn kcd_value(g: &KcdGrams, lambda: &[f64], eta: &[f64]) -> Result<f64> {
    check_lengths(g, lambda, eta)?;
    Ok(bilinear(&g.mxx, lambda, lambda) - 2.0 * bilinear(&g.mxy, lambda, eta)
        + bilinear(&g.myy, eta, eta))
}

/// Analytic gradient `(2M_XXλ − 2M_XYη, 2M_YYη − 2M_YXλ)`.
pub fn kcd_gradient(g: &KcdGrams, lambda: &[f64], eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(g, lambda, eta)?;
    let l = Array1::from(lambda.to_vec());
    let e = Array1::from(eta.to_vec());
    let dl = (g.mxx.dot(&l) - g.mxy.dot(&e)) * 2.0;
    let de = (g.myy.dot(&e) - g.mxy.t().dot(&l)) * 2.0;
    Ok((dl.to_vec(), de.to_vec()))
}

/// Non-calibrated estimates of the set-level discrepancies between two
/// credal samples (degrees of inclusion, equality and intersection).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredalDiscrepancies {
    /// `max_i min_η L(e_i, η)`: how far X's extreme points sit outside Y's hull.
    pub inclusion_xy: f64,
    pub inclusion_yx: f64,
    /// Hausdorff-type `max(inclusion_xy, inclusion_yx)`.
    pub equality: f64,
    /// `min_{λ,η} L(λ, η)`.
    pub intersection: f64,
}

/// Diagnostic discrepancies computed from empirical KME Grams.
///
/// The supremum over `λ` of a convex function of `λ` is attained at a
/// vertex, so inclusion only needs one convex solve per extreme point.
pub fn credal_discrepancies<R: Rng + ?Sized>(
    spec: &KernelSpec,
    sx: &CredalSample,
    sy: &CredalSample,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<CredalDiscrepancies> {
    let g = kme_grams(spec, sx, sy)?;
    discrepancies_from_grams(&g, cfg, rng)
}

pub fn discrepancies_from_grams<R: Rng + ?Sized>(
    g: &KcdGrams,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<CredalDiscrepancies> {
    let inclusion = |g: &KcdGrams| -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..g.x_len() {
            let res = minimize_eta_for_row(g, i, cfg)?;
            worst = worst.max(res.objective.max(0.0));
        }
        Ok(worst)
    };
    let inclusion_xy = inclusion(g)?;
    let inclusion_yx = inclusion(&g.swapped())?;
    let mut bicfg = cfg.clone();
    bicfg.seed = rng.random();
    let inter = minimize_biconvex(g, &bicfg)?;
    if !inter.objective.is_finite() {
        return Err(CredalError::Internal("non-finite intersection objective".into()));
    }
    Ok(CredalDiscrepancies {
        inclusion_xy,
        inclusion_yx,
        equality: inclusion_xy.max(inclusion_yx),
        intersection: inter.objective.max(0.0),
    })
}
