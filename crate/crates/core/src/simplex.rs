//! Optimisation over probability simplices.
//!
//! Epistemic alignment reduces to quadratics of the form
//!
//! ```text
//! f(w) = wᵀQw − 2cᵀw + κ,   w ∈ Δ_m
//! ```
//!
//! with `Q` a (PSD) KME Gram block. They are solved by projected gradient
//! descent with backtracking, followed by a primal active-set refinement on
//! the identified support which lands exactly on the KKT point whenever the
//! reduced system is non-singular. The two-simplex objective `L(λ, η)` is
//! handled by alternating exact minimisation over `λ` and `η`, finished by
//! the same active-set refinement on `Δ_ℓ × Δ_r` jointly.

use std::ops::Range;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kcd::{kcd_value, KcdGrams, Weights};
use crate::linalg::solve;
use crate::rng::{substream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Uniform,
    /// Flat Dirichlet, i.e. uniform on the simplex.
    RandomDirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub grad_tol: f64,
    pub obj_tol: f64,
    pub init: Init,
    /// Extra starting points beyond the first.
    pub restarts: usize,
    /// Seed for random initialisations; start `k` uses its own substream.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::convex_default()
    }
}

impl OptimizerConfig {
    pub fn convex_default() -> Self {
        Self {
            max_outer_iters: 200,
            max_inner_iters: 1000,
            grad_tol: 1e-7,
            obj_tol: 1e-10,
            init: Init::Uniform,
            restarts: 0,
            seed: 0,
        }
    }

    pub fn biconvex_default() -> Self {
        Self {
            init: Init::RandomDirichlet,
            restarts: 5,
            ..Self::convex_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(invalid("optimizer iteration limits must be at least 1"));
        }
        if !(self.grad_tol > 0.0 && self.obj_tol > 0.0) {
            return Err(invalid("optimizer tolerances must be positive"));
        }
        Ok(())
    }

    fn start(&self, k: usize, m: usize) -> Vec<f64> {
        match (self.init, k) {
            (Init::Uniform, 0) => vec![1.0 / m as f64; m],
            _ => {
                let mut rng = substream(self.seed, &[tag::RESTART, k as u64]);
                random_dirichlet(&mut rng, m)
            }
        }
    }
}

pub(crate) fn random_dirichlet<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Result of an alignment solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub lambda: Weights,
    pub eta: Weights,
    /// `kcd_value(lambda, eta)` at the returned weights.
    pub objective: f64,
    pub converged: bool,
    pub iters: usize,
    /// Objective after each outer iteration of the winning start.
    pub trace: Vec<f64>,
    pub starts: usize,
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Result<Weights> {
    if v.is_empty() {
        return Err(invalid("cannot project an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("cannot project a non-finite vector"));
    }
    Ok(Weights::from_simplex_point(project_raw(v)))
}

fn project_raw(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `wᵀQw − 2cᵀw + κ` over the simplex.
struct SimplexQp<'a> {
    q: &'a Array2<f64>,
    c: Array1<f64>,
    kappa: f64,
}

struct QpSolution {
    w: Vec<f64>,
    value: f64,
    converged: bool,
    iters: usize,
}

impl SimplexQp<'_> {
    fn value(&self, w: &[f64]) -> f64 {
        let w = Array1::from(w.to_vec());
        w.dot(&self.q.dot(&w)) - 2.0 * self.c.dot(&w) + self.kappa
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let w = Array1::from(w.to_vec());
        ((self.q.dot(&w) - &self.c) * 2.0).to_vec()
    }

    /// Step used for the stationarity measure and as the first trial step.
    fn base_step(&self) -> f64 {
        let max_diag = self.q.diag().iter().copied().fold(0.0, f64::max);
        if max_diag > 0.0 {
            1.0 / (2.0 * max_diag)
        } else {
            1.0
        }
    }

    fn stationarity(&self, w: &[f64]) -> f64 {
        let s = self.base_step();
        let g = self.gradient(w);
        let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - s * b).collect();
        let p = project_raw(&trial);
        p.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    fn solve(&self, start: &[f64], cfg: &OptimizerConfig) -> QpSolution {
        let m = start.len();
        let mut w = project_raw(start);
        let mut value = self.value(&w);
        let start_value = value;
        let start_w = w.clone();
        let mut iters = 0;
        if m > 1 {
            let base = self.base_step();
            let mut step = base;
            for _ in 0..cfg.max_inner_iters {
                iters += 1;
                let g = self.gradient(&w);
                let mut accepted = false;
                for _ in 0..60 {
                    let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                    let next = project_raw(&trial);
                    let diff: Vec<f64> = next.iter().zip(&w).map(|(a, b)| a - b).collect();
                    let lin: f64 = g.iter().zip(&diff).map(|(a, b)| a * b).sum();
                    let sq: f64 = diff.iter().map(|d| d * d).sum();
                    let next_value = self.value(&next);
                    if next_value <= value + lin + sq / (2.0 * step) + 1e-15 {
                        accepted = sq > 0.0 && next_value <= value;
                        if accepted {
                            w = next;
                            value = next_value;
                        }
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted || self.stationarity(&w) <= cfg.grad_tol * 1e-3 {
                    break;
                }
                step = (step * 2.0).min(base * 1e6);
            }
            if let Some(polished) = self.active_set(&w) {
                let pv = self.value(&polished);
                if pv <= value {
                    w = polished;
                    value = pv;
                }
            }
        }
        if value > start_value {
            w = start_w;
            value = start_value;
        }
        let converged = self.stationarity(&w) <= cfg.grad_tol;
        QpSolution { w, value, converged, iters }
    }

    fn active_set(&self, start: &[f64]) -> Option<Vec<f64>> {
        let m = start.len();
        block_active_set(self.q, &self.c, std::slice::from_ref(&(0..m)), start)
    }
}

/// Primal active-set method for `wᵀQw − 2cᵀw` over a product of simplices,
/// one per block of coordinates, started from a feasible point.
///
/// Returns a KKT point, or `None` if the method stalls. A singular reduced
/// system (non-unique minimiser) is retried with a tiny ridge on `Q`.
fn block_active_set(
    q: &Array2<f64>,
    c: &Array1<f64>,
    blocks: &[Range<usize>],
    start: &[f64],
) -> Option<Vec<f64>> {
    let m = start.len();
    let block_of: Vec<usize> = (0..m)
        .map(|i| blocks.iter().position(|b| b.contains(&i)).expect("blocks cover all coordinates"))
        .collect();
    let nb = blocks.len();
    let mut w = start.to_vec();
    let mut free: Vec<bool> = w.iter().map(|&v| v > 1e-14).collect();
    for b in blocks {
        if !b.clone().any(|i| free[i]) {
            return None;
        }
        let s: f64 = b.clone().filter(|&i| free[i]).map(|i| w[i]).sum();
        for i in b.clone() {
            w[i] = if free[i] { w[i] / s } else { 0.0 };
        }
    }
    let scale = q.diag().iter().copied().fold(1.0, f64::max);
    let gradient = |w: &[f64]| -> Array1<f64> { (q.dot(&Array1::from(w.to_vec())) - c) * 2.0 };

    for _ in 0..(4 * m + 10) {
        let idx: Vec<usize> = (0..m).filter(|&i| free[i]).collect();
        let k = idx.len();
        // [2Q_FF Aᵀ; A 0] [w_F; ν] = [2c_F; 1], one row of A per block
        let mut a = Array2::<f64>::zeros((k + nb, k + nb));
        let mut rhs = Array1::<f64>::zeros(k + nb);
        for (r, &i) in idx.iter().enumerate() {
            for (col, &j) in idx.iter().enumerate() {
                a[[r, col]] = 2.0 * q[[i, j]];
            }
            a[[r, k + block_of[i]]] = 1.0;
            a[[k + block_of[i], r]] = 1.0;
            rhs[r] = 2.0 * c[i];
        }
        for b in 0..nb {
            rhs[k + b] = 1.0;
        }
        let sol = solve(&a, &rhs).or_else(|| {
            for r in 0..k {
                a[[r, r]] += 2e-10 * scale;
            }
            solve(&a, &rhs)
        })?;
        let target: Vec<f64> = (0..k).map(|r| sol[r]).collect();
        if target.iter().all(|&v| v >= -1e-14) {
            for (r, &i) in idx.iter().enumerate() {
                w[i] = target[r].max(0.0);
            }
            let g = gradient(&w);
            // KKT: g_i = ν_b on the support of block b, g_i ≥ ν_b off it
            let violator = (0..m)
                .filter(|&i| !free[i])
                .map(|i| (i, g[i] + sol[k + block_of[i]]))
                .filter(|&(_, mu)| mu < -1e-12)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match violator {
                Some((i, _)) => free[i] = true,
                None => return Some(w),
            }
        } else {
            // move towards the target until the first free coordinate hits zero
            let mut t = 1.0;
            let mut block = None;
            for (r, &i) in idx.iter().enumerate() {
                let d = target[r] - w[i];
                if d < 0.0 {
                    let ti = w[i] / -d;
                    if ti < t {
                        t = ti;
                        block = Some(i);
                    }
                }
            }
            for (r, &i) in idx.iter().enumerate() {
                w[i] += t * (target[r] - w[i]);
            }
            if let Some(i) = block {
                w[i] = 0.0;
                free[i] = false;
            }
            if blocks.iter().any(|b| !b.clone().any(|i| free[i])) {
                return None;
            }
        }
    }
    None
}

fn check_rows(g: &KcdGrams, row: usize) -> Result<()> {
    if row >= g.x_len() {
        return Err(invalid(format!(
            "row {row} out of range for {} X-side extreme points",
            g.x_len()
        )));
    }
    Ok(())
}

/// Align a single X-side distribution to the Y credal set:
/// minimise `L(1, η)` over `η ∈ Δ_r`. Requires `ℓ = 1`.
pub fn minimize_eta(g: &KcdGrams, cfg: &OptimizerConfig) -> Result<OptResult> {
    if g.x_len() != 1 {
        return Err(invalid(format!(
            "minimize_eta needs a singleton X side, got {} extreme points",
            g.x_len()
        )));
    }
    minimize_eta_for_row(g, 0, cfg)
}

/// Minimise `L(e_row, η)` over `η ∈ Δ_r` for the X-side extreme point `row`.
pub fn minimize_eta_for_row(g: &KcdGrams, row: usize, cfg: &OptimizerConfig) -> Result<OptResult> {
    cfg.validate()?;
    check_rows(g, row)?;
    let qp = SimplexQp {
        q: g.myy(),
        c: g.mxy().row(row).to_owned(),
        kappa: g.mxx()[[row, row]],
    };
    let r = g.y_len();
    let lambda = Weights::vertex(g.x_len(), row);
    let mut best: Option<(QpSolution, usize)> = None;
    for k in 0..=cfg.restarts {
        let sol = qp.solve(&cfg.start(k, r), cfg);
        if best.as_ref().is_none_or(|(b, _)| sol.value < b.value) {
            best = Some((sol, k));
        }
    }
    let (sol, _) = best.expect("at least one start");
    let eta = Weights::from_simplex_point(sol.w);
    let objective = kcd_value(g, &lambda, &eta)?;
    Ok(OptResult {
        lambda,
        eta,
        objective,
        converged: sol.converged,
        iters: sol.iters,
        trace: vec![objective],
        starts: cfg.restarts + 1,
    })
}

/// Alternating minimisation of `L(λ, η)` over `Δ_ℓ × Δ_r`.
///
/// Each half-step solves its convex subproblem from the current iterate and
/// is only accepted if it does not increase the objective, so the recorded
/// trace is non-increasing. The best start (first found on ties) wins.
pub fn minimize_biconvex(g: &KcdGrams, cfg: &OptimizerConfig) -> Result<OptResult> {
    cfg.validate()?;
    let (l, r) = (g.x_len(), g.y_len());
    let mut best: Option<OptResult> = None;
    for k in 0..=cfg.restarts {
        let mut lambda = cfg.start(k, l);
        let mut eta = {
            let mut c = cfg.clone();
            c.seed = crate::rng::derive_seed(cfg.seed, &[1]);
            c.start(k, r)
        };
        let mut value = kcd_value(g, &lambda, &eta)?;
        let mut trace = vec![value];
        let mut converged = false;
        let mut iters = 0;
        for _ in 0..cfg.max_outer_iters {
            iters += 1;
            let before = value;
            // λ-step: Q = M_XX, c = M_XY η
            let qp = SimplexQp {
                q: g.mxx(),
                c: g.mxy().dot(&Array1::from(eta.clone())),
                kappa: 0.0,
            };
            let cand = qp.solve(&lambda, cfg).w;
            let v = kcd_value(g, &cand, &eta)?;
            if v <= value {
                lambda = cand;
                value = v;
            }
            // η-step: Q = M_YY, c = M_YX λ
            let qp = SimplexQp {
                q: g.myy(),
                c: g.mxy().t().dot(&Array1::from(lambda.clone())),
                kappa: 0.0,
            };
            let cand = qp.solve(&eta, cfg).w;
            let v = kcd_value(g, &lambda, &cand)?;
            if v <= value {
                eta = cand;
                value = v;
            }
            trace.push(value);
            if before - value < cfg.obj_tol {
                converged = true;
                break;
            }
        }
        if let Some(z) = joint_polish(g, &lambda, &eta) {
            let v = kcd_value(g, &z[..l], &z[l..])?;
            if v <= value {
                lambda = z[..l].to_vec();
                eta = z[l..].to_vec();
                value = v;
                trace.push(value);
                converged = true;
            }
        }
        let lambda = Weights::from_simplex_point(lambda);
        let eta = Weights::from_simplex_point(eta);
        // renormalisation may move the weights by rounding; report the exact value
        let objective = kcd_value(g, &lambda, &eta)?;
        let result = OptResult {
            lambda,
            eta,
            objective,
            converged,
            iters,
            trace,
            starts: cfg.restarts + 1,
        };
        if best.as_ref().is_none_or(|b| result.objective < b.objective) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Joint KKT polish of `L(λ, η)` over `Δ_ℓ × Δ_r`. The objective is the
/// squared norm of a linear map of `(λ, η)`, hence jointly convex with
/// Hessian `2[[M_XX, −M_XY], [−M_YX, M_YY]]`.
fn joint_polish(g: &KcdGrams, lambda: &[f64], eta: &[f64]) -> Option<Vec<f64>> {
    let (l, r) = (lambda.len(), eta.len());
    let mut q = Array2::<f64>::zeros((l + r, l + r));
    q.slice_mut(s![..l, ..l]).assign(g.mxx());
    q.slice_mut(s![l.., l..]).assign(g.myy());
    q.slice_mut(s![..l, l..]).assign(&(-g.mxy()));
    q.slice_mut(s![l.., ..l]).assign(&(-&g.mxy().t()));
    let start: Vec<f64> = lambda.iter().chain(eta).copied().collect();
    block_active_set(&q, &Array1::zeros(l + r), &[0..l, l..l + r], &start)
}
