//! Best constant state-feedback gain in hindsight:
//! `K* = argmin_K cost_T(K; w)` with
//!
//! ```text
//! cost_T(K; w) = (1/T) Σ_{t=0}^{T-1} x_t'(Q + K'RK) x_t,
//! x_{t+1} = (A - BK) x_t + w_t,  x_0 = 0.
//! ```
//!
//! The objective is a polynomial in K of degree growing with T, so there is
//! no convexity to lean on. This module runs multi-start gradient descent
//! with exact O(T) adjoint gradients and backtracking line search; results
//! are best-found, never certified global.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, sym_norm2};
use crate::model::SystemSpec;
use crate::riccati;

const OVERFLOW_NORM_SQ: f64 = 1e200;

/// Armijo parameter, shrink factor, initial step, and step floor for the
/// backtracking line search.
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const INITIAL_STEP: f64 = 1.0;
const MIN_STEP: f64 = 1e-18;

/// `cost_T` value and, on request, its gradient in K.
#[derive(Debug, Clone)]
pub struct CostTEval {
    pub value: f64,
    pub gradient: Option<DMatrix<f64>>,
}

/// Evaluate `cost_T(K; w)` by forward rollout; the gradient comes from the
/// adjoint (backward) recursion over the same trajectory and is exact.
/// Trajectories that overflow report `+inf` with no gradient.
pub fn cost_t(
    gain: &DMatrix<f64>,
    spec: &SystemSpec,
    w: &[DVector<f64>],
    want_gradient: bool,
) -> CostTEval {
    let t_len = w.len();
    assert!(t_len > 0, "cost_T needs at least one step");
    let n = spec.n();
    let closed = spec.a() - spec.b_ctrl() * gain;
    let m_cost = spec.q() + gain.transpose() * spec.r() * gain;

    let mut states: Vec<DVector<f64>> = Vec::with_capacity(if want_gradient { t_len } else { 0 });
    let mut x = DVector::<f64>::zeros(n);
    let mut total = 0.0;
    for w_t in w.iter().take(t_len) {
        if x.norm_squared() > OVERFLOW_NORM_SQ {
            return CostTEval {
                value: f64::INFINITY,
                gradient: None,
            };
        }
        total += (&m_cost * &x).dot(&x);
        if want_gradient {
            states.push(x.clone());
        }
        x = &closed * &x + w_t;
    }
    let value = total / t_len as f64;
    if !want_gradient {
        return CostTEval {
            value,
            gradient: None,
        };
    }

    // Adjoint pass: lambda_t = 2 M x_t + F' lambda_{t+1} accumulates the
    // sensitivity of the tail cost to x_t; the gradient splits into the
    // explicit K'RK term and the dynamics term through F = A - BK.
    let mut grad = DMatrix::<f64>::zeros(spec.m(), n);
    let mut lambda = DVector::<f64>::zeros(n);
    let rk = spec.r() * gain;
    for t in (0..t_len).rev() {
        let x_t = &states[t];
        grad += 2.0 * &rk * x_t * x_t.transpose();
        if t + 1 < t_len {
            grad -= spec.b_ctrl().transpose() * &lambda * x_t.transpose();
        }
        lambda = 2.0 * (&m_cost * x_t) + closed.transpose() * lambda;
    }
    grad /= t_len as f64;
    CostTEval {
        value,
        gradient: Some(grad),
    }
}

/// Outcome of the multi-start search.
#[derive(Debug, Clone)]
pub struct LinearSearchResult {
    pub k_star: DMatrix<f64>,
    /// Time-averaged `cost_T` at `k_star`.
    pub cost: f64,
    pub starts: usize,
    /// Terminal cost of each start, by start index.
    pub per_start_costs: Vec<f64>,
    pub grad_norm_at_opt: f64,
    /// `ρ(A - B K*)`.
    pub spectral_radius: f64,
}

fn descend(
    spec: &SystemSpec,
    w: &[DVector<f64>],
    start: DMatrix<f64>,
    grad_tol: f64,
    max_iter: usize,
) -> (DMatrix<f64>, f64, f64) {
    let mut k = start;
    let mut eval = cost_t(&k, spec, w, true);
    let mut grad_norm = eval.gradient.as_ref().map_or(f64::INFINITY, |g| g.norm());
    if !eval.value.is_finite() {
        return (k, eval.value, grad_norm);
    }
    for _ in 0..max_iter {
        let grad = match &eval.gradient {
            Some(g) => g.clone(),
            None => break,
        };
        grad_norm = grad.norm();
        if grad_norm <= grad_tol {
            break;
        }
        let mut step = INITIAL_STEP;
        let mut accepted = false;
        while step >= MIN_STEP {
            let candidate = &k - step * &grad;
            let trial = cost_t(&candidate, spec, w, false);
            if trial.value <= eval.value - ARMIJO_C * step * grad_norm * grad_norm {
                k = candidate;
                eval = cost_t(&k, spec, w, true);
                accepted = true;
                break;
            }
            step *= SHRINK;
        }
        if !accepted {
            break;
        }
    }
    grad_norm = eval.gradient.as_ref().map_or(grad_norm, |g| g.norm());
    (k, eval.value, grad_norm)
}

/// Multi-start descent over `cost_T`. Start 0 is always the steady-state
/// Riccati gain (stable, finite value, and in the right basin for large T);
/// the remaining starts perturb it by seeded Gaussian noise of scale
/// `0.1 ‖K_inf‖`. Unstable terminal points are discarded; the untouched
/// Riccati gain itself stays in the candidate pool, so the result is never
/// worse than `cost_T(K_inf; w)`. Deterministic given `seed`.
pub fn optimize(
    spec: &SystemSpec,
    w: &[DVector<f64>],
    starts: usize,
    seed: u64,
    grad_tol: f64,
    max_iter: usize,
) -> Result<LinearSearchResult> {
    if starts == 0 {
        return Err(Error::DimensionMismatch("starts must be >= 1".into()));
    }
    let dare = riccati::solve_dare(spec, riccati::DEFAULT_TOL, riccati::DEFAULT_MAX_ITER)?;
    let k_inf = dare.k.clone();
    let scale = 0.1 * k_inf.norm();

    let inits: Vec<DMatrix<f64>> = (0..starts)
        .map(|j| {
            if j == 0 {
                k_inf.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(j as u64));
                let noise = DMatrix::from_fn(spec.m(), spec.n(), |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    scale * z
                });
                &k_inf + noise
            }
        })
        .collect();

    let outcomes: Vec<(DMatrix<f64>, f64, f64)> = inits
        .into_par_iter()
        .map(|init| descend(spec, w, init, grad_tol, max_iter))
        .collect();

    let per_start_costs: Vec<f64> = outcomes.iter().map(|(_, c, _)| *c).collect();

    // Candidate pool: stable terminal points, plus the raw Riccati gain as
    // a stable fallback. Merge by (cost, index) so the result does not
    // depend on thread scheduling.
    let kinf_cost = cost_t(&k_inf, spec, w, false).value;
    let kinf_rho = dare.closed_loop_radius(spec);
    let mut best: Option<(f64, usize, DMatrix<f64>, f64, f64)> = None;
    for (idx, (k, cost, gnorm)) in outcomes.into_iter().enumerate() {
        if !cost.is_finite() {
            continue;
        }
        let rho = spectral_radius(&(spec.a() - spec.b_ctrl() * &k));
        if rho >= 1.0 {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bc, bi, ..)) => cost < *bc || (cost == *bc && idx < *bi),
        };
        if better {
            best = Some((cost, idx, k, gnorm, rho));
        }
    }
    let (cost, _, k_star, grad_norm_at_opt, rho) = match best {
        Some(b) if b.0 <= kinf_cost => b,
        _ => {
            let gnorm = cost_t(&k_inf, spec, w, true)
                .gradient
                .map_or(f64::NAN, |g| g.norm());
            (kinf_cost, 0, k_inf, gnorm, kinf_rho)
        }
    };
    if rho >= 1.0 {
        return Err(Error::AllStartsDiverged);
    }
    Ok(LinearSearchResult {
        k_star,
        cost,
        starts,
        per_start_costs,
        grad_norm_at_opt,
        spectral_radius: rho,
    })
}

/// A computable witness for the similarity `A - BK = M L M^{-1}` with
/// `‖L‖₂ < 1`: `γ = 1 - ‖L‖₂` and the condition number of `M` feed the
/// concentration bound.
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub rho: f64,
    pub l_norm: f64,
    pub gamma: f64,
    pub kappa_m: f64,
}

/// Build the witness from a real Schur form of `F`: balance each 2x2
/// eigenvalue block so its norm drops to the eigenvalue modulus, then apply
/// geometric diagonal scaling across blocks until the strictly upper part
/// is small enough that `‖L‖₂ <= ρ + (1-ρ)/2`.
pub fn stability_certificate(f: &DMatrix<f64>) -> Result<StabilityCertificate> {
    let rho = spectral_radius(f);
    if rho >= 1.0 {
        return Err(Error::SpectralRadiusTooLarge { rho });
    }
    let n = f.nrows();
    if n == 1 {
        return Ok(StabilityCertificate {
            rho,
            l_norm: rho,
            gamma: 1.0 - rho,
            kappa_m: 1.0,
        });
    }
    let target = rho + 0.5 * (1.0 - rho);
    let schur = nalgebra::linalg::Schur::new(f.clone());
    let (_, t) = schur.unpack();
    let block_eps = 1e-14 * t.norm().max(1.0);

    // Per-row balance ratios inside 2x2 blocks, and the block index of each
    // row for the cross-block scaling.
    let mut base = vec![1.0f64; n];
    let mut group = vec![0usize; n];
    let mut g = 0usize;
    let mut i = 0usize;
    while i < n {
        group[i] = g;
        if i + 1 < n && t[(i + 1, i)].abs() > block_eps {
            let num = t[(i, i + 1)].abs().max(f64::MIN_POSITIVE);
            let den = t[(i + 1, i)].abs().max(f64::MIN_POSITIVE);
            base[i + 1] = (num / den).sqrt();
            group[i + 1] = g;
            i += 2;
        } else {
            i += 1;
        }
        g += 1;
    }

    let mut alpha = 1.0f64;
    let mut best = None;
    for _ in 0..60 {
        let mut d = vec![0.0f64; n];
        for row in 0..n {
            d[row] = base[row] * alpha.powi(group[row] as i32);
        }
        let l = DMatrix::from_fn(n, n, |r, c| t[(r, c)] * d[r] / d[c]);
        let l_norm = l
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(0.0, f64::max);
        let kappa = d.iter().copied().fold(0.0f64, f64::max)
            / d.iter().copied().fold(f64::INFINITY, f64::min);
        match &best {
            Some((bn, _)) if *bn <= l_norm => {}
            _ => best = Some((l_norm, kappa)),
        }
        if l_norm <= target {
            return Ok(StabilityCertificate {
                rho,
                l_norm,
                gamma: 1.0 - l_norm,
                kappa_m: kappa,
            });
        }
        alpha *= 2.0;
    }
    // Block norms themselves stopped short of the target (near-defective
    // pair); report the best contraction found, still strictly below 1 when
    // possible.
    let (l_norm, kappa_m) = best.expect("at least one scaling attempted");
    if l_norm >= 1.0 {
        return Err(Error::SpectralRadiusTooLarge { rho: l_norm });
    }
    Ok(StabilityCertificate {
        rho,
        l_norm,
        gamma: 1.0 - l_norm,
        kappa_m,
    })
}

/// The bounded-differences tail bound for `cost_T` at deviation `eps`:
/// `2 exp(-2 ε² γ⁴ T / (25 B⁴ κ⁴(M) σ_max²(Q + K'RK)))`. Values above 1
/// are returned as-is (the bound is simply vacuous there).
pub fn mcdiarmid_bound(
    eps: f64,
    horizon: usize,
    cert: &StabilityCertificate,
    noise_bound: f64,
    sigma_max_cost: f64,
) -> f64 {
    let num = 2.0 * eps * eps * cert.gamma.powi(4) * horizon as f64;
    let den = 25.0 * noise_bound.powi(4) * cert.kappa_m.powi(4) * sigma_max_cost * sigma_max_cost;
    2.0 * (-num / den).exp()
}

/// `σ_max(Q + K'RK)`, the cost curvature entering the bound.
pub fn cost_curvature(spec: &SystemSpec, gain: &DMatrix<f64>) -> f64 {
    sym_norm2(&(spec.q() + gain.transpose() * spec.r() * gain))
}
