//! Riccati recursions: the finite-horizon backward pass, the algebraic
//! Riccati fixed point, and discrete Lyapunov solves.
//!
//! Backward step, for t = T-1 .. 0 with `P_T = Q_f`:
//!
//! ```text
//! K_t = (R + B'P_{t+1}B)^{-1} B'P_{t+1}A
//! P_t = Q + A'P_{t+1}A - A'P_{t+1}B (R + B'P_{t+1}B)^{-1} B'P_{t+1}A
//! S_t = P_{t+1} - P_{t+1}B (R + B'P_{t+1}B)^{-1} B'P_{t+1}
//! ```
//!
//! The steady state `(P, K, S)` is the fixed point of the same step started
//! from `P = Q`. Inner solves go through a Cholesky factorization of
//! `R + B'PB`; every updated matrix is re-symmetrized to suppress round-off
//! drift.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, symmetrize};
use crate::model::{Horizon, SystemSpec};

/// Relative fixed-point tolerance used when callers do not override it.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Iteration cap; generous because convergence slows near marginal systems.
pub const DEFAULT_MAX_ITER: usize = 100_000;

const DIVERGENCE_NORM: f64 = 1e100;

/// Steady-state Riccati quantities.
#[derive(Debug, Clone)]
pub struct DareSolution {
    /// Fixed point of the Riccati recursion.
    pub p: DMatrix<f64>,
    /// Optimal steady-state gain `(R + B'PB)^{-1} B'PA`.
    pub k: DMatrix<f64>,
    /// `P - PB (R + B'PB)^{-1} B'P`.
    pub s: DMatrix<f64>,
    /// Frobenius norm of the algebraic Riccati residual at `p`.
    pub residual: f64,
    /// Fixed-point iterations used.
    pub iterations: usize,
}

impl DareSolution {
    /// `ρ(A - B K)` for this solution's gain.
    pub fn closed_loop_radius(&self, spec: &SystemSpec) -> f64 {
        spectral_radius(&(spec.a() - spec.b_ctrl() * &self.k))
    }
}

/// Finite-horizon sequences plus the steady state they converge to.
///
/// All sequences are forward-indexed: `p_seq[t] = P_t` (length T+1 with
/// `p_seq[T] = Q_f`), `k_seq[t] = K_t`, and `s_seq[t] = S_t` (both length T,
/// both built from `P_{t+1}`).
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p_seq: Vec<DMatrix<f64>>,
    pub k_seq: Vec<DMatrix<f64>>,
    pub s_seq: Vec<DMatrix<f64>>,
    pub steady: DareSolution,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.k_seq.len()
    }

    pub fn p_inf(&self) -> &DMatrix<f64> {
        &self.steady.p
    }

    pub fn k_inf(&self) -> &DMatrix<f64> {
        &self.steady.k
    }

    pub fn s_inf(&self) -> &DMatrix<f64> {
        &self.steady.s
    }

    pub fn residual(&self) -> f64 {
        self.steady.residual
    }
}

/// One backward step from `p_next = P_{t+1}`; returns `(P_t, K_t, S_t)`.
fn riccati_step(
    spec: &SystemSpec,
    p_next: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (a, b) = (spec.a(), spec.b_ctrl());
    let btp = b.transpose() * p_next; // m x n
    let inner = symmetrize(&(spec.r() + &btp * b));
    let chol = Cholesky::new(inner).ok_or(Error::SingularInnerMatrix)?;
    let btpa = &btp * a;
    let k = chol.solve(&btpa);
    let p = symmetrize(&(spec.q() + a.transpose() * p_next * a - btpa.transpose() * &k));
    let s = symmetrize(&(p_next - btp.transpose() * chol.solve(&btp)));
    Ok((p, k, s))
}

/// Algebraic Riccati residual `‖P - Q - A'PA + A'PB(R+B'PB)^{-1}B'PA‖_F`.
pub fn are_residual(spec: &SystemSpec, p: &DMatrix<f64>) -> Result<f64> {
    let (a, b) = (spec.a(), spec.b_ctrl());
    let btp = b.transpose() * p;
    let inner = symmetrize(&(spec.r() + &btp * b));
    let chol = Cholesky::new(inner).ok_or(Error::SingularInnerMatrix)?;
    let btpa = &btp * a;
    let res = p - spec.q() - a.transpose() * p * a + btpa.transpose() * chol.solve(&btpa);
    Ok(res.norm())
}

/// Fixed-point iteration of the backward step from `P = Q`, stopping when
/// `‖P_next - P‖_F <= tol * ‖P‖_F`. Errors with [`Error::NoConvergence`]
/// when the iterate diverges, the cap is hit, or the converged gain fails
/// to be stabilizing; each of those signals a non-stabilizable or
/// near-marginal system.
pub fn solve_dare(spec: &SystemSpec, tol: f64, max_iter: usize) -> Result<DareSolution> {
    let mut p = symmetrize(spec.q());
    for it in 0..max_iter {
        let (p_next, _, _) = riccati_step(spec, &p)?;
        let diff = (&p_next - &p).norm();
        let done = diff <= tol * p_next.norm();
        p = p_next;
        if p.norm() > DIVERGENCE_NORM {
            return Err(Error::NoConvergence { iterations: it + 1 });
        }
        if done {
            let (_, k, s) = riccati_step(spec, &p)?;
            let rho = spectral_radius(&(spec.a() - spec.b_ctrl() * &k));
            if rho >= 1.0 {
                return Err(Error::NoConvergence { iterations: it + 1 });
            }
            let residual = are_residual(spec, &p)?;
            return Ok(DareSolution {
                p,
                k,
                s,
                residual,
                iterations: it + 1,
            });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

/// Backward Riccati pass over `T` steps with `P_T = Q_f`, plus the steady
/// state from [`solve_dare`] (the policies built on top need both).
pub fn backward_riccati(spec: &SystemSpec, horizon: Horizon) -> Result<RiccatiSolution> {
    let t = horizon.steps();
    let steady = solve_dare(spec, DEFAULT_TOL, DEFAULT_MAX_ITER)?;

    let mut p_seq = vec![DMatrix::zeros(0, 0); t + 1];
    let mut k_seq = vec![DMatrix::zeros(0, 0); t];
    let mut s_seq = vec![DMatrix::zeros(0, 0); t];
    p_seq[t] = symmetrize(spec.q_f());
    for step in (0..t).rev() {
        let (p, k, s) = riccati_step(spec, &p_seq[step + 1])?;
        p_seq[step] = p;
        k_seq[step] = k;
        s_seq[step] = s;
    }
    Ok(RiccatiSolution {
        p_seq,
        k_seq,
        s_seq,
        steady,
    })
}

fn check_dlyap_radius(f: &DMatrix<f64>) -> Result<()> {
    let rho = spectral_radius(f);
    if rho >= 1.0 - 1e-9 {
        return Err(Error::SpectralRadiusTooLarge { rho });
    }
    Ok(())
}

/// Solve `V = G + F'VF` by accumulating the series `Σ (F')^i G F^i` with
/// repeated squaring, stopping once the residual drops below `tol * ‖V‖_F`.
pub fn solve_dlyap_iterative(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    check_dlyap_radius(f)?;
    let mut v = symmetrize(g);
    let mut fk = f.clone();
    for it in 0..200 {
        let res = (&v - g - f.transpose() * &v * f).norm();
        if res <= tol * v.norm().max(f64::MIN_POSITIVE) {
            return Ok(v);
        }
        v = symmetrize(&(&v + fk.transpose() * &v * &fk));
        fk = &fk * &fk;
        let _ = it;
    }
    Err(Error::NoConvergence { iterations: 200 })
}

/// Solve `V = G + F'VF` as the n² x n² linear system
/// `(I - F' ⊗ F') vec(V) = vec(G)`.
pub fn solve_dlyap_direct(f: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    check_dlyap_radius(f)?;
    let n = f.nrows();
    let ft = f.transpose();
    let mut sys = DMatrix::identity(n * n, n * n) - ft.kronecker(&ft);
    let rhs = nalgebra::DVector::from_column_slice(g.as_slice());
    let lu = sys.clone().lu();
    let sol = lu.solve(&rhs).ok_or(Error::NoConvergence { iterations: 1 })?;
    sys.fill(0.0); // large scratch; drop eagerly in spirit
    let v = symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice()));
    let res = (&v - g - f.transpose() * &v * f).norm();
    if res > tol * v.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::FormulaMismatch(format!(
            "direct Lyapunov solve residual {res:e} above tolerance"
        )));
    }
    Ok(v)
}

/// Solve the discrete Lyapunov equation `V = G + F'VF` for `ρ(F) < 1`.
/// Small systems go through the direct vectorized solve, larger ones through
/// the series iteration; the two are cross-checked in tests.
pub fn solve_dlyap(f: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if f.nrows() <= 8 {
        solve_dlyap_direct(f, g, tol)
    } else {
        solve_dlyap_iterative(f, g, tol)
    }
}
