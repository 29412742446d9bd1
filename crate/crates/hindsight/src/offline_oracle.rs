//! Ground-truth offline solver: one dense convex QP in the stacked control
//! vector, assembled straight from the affine state map
//! `x_t = Σ_{s<t} A^{t-1-s} (B u_s + w_s)`. No Riccati machinery on this
//! path; that independence is the point, since the recursive offline policy
//! is checked against it.
//!
//! Desk-scale by design: dense `(mT)²` assembly with a hard cap.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::SystemSpec;

/// Cap on the stacked dimension `m*T`; beyond this the dense oracle is the
/// wrong tool.
pub const MAX_STACKED_DIM: usize = 2000;

/// Offline cost as an explicit quadratic: `u'Hu + 2g'u + c0` over the
/// stacked control `u = (u_0; ...; u_{T-1})`.
#[derive(Debug, Clone)]
pub struct StackedProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c0: f64,
    pub m: usize,
    pub horizon: usize,
}

impl StackedProblem {
    /// Evaluate the quadratic at a stacked control vector.
    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        (&self.h * u).dot(u) + 2.0 * self.g.dot(u) + self.c0
    }

    /// Split a stacked vector into per-step controls.
    pub fn unstack(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.horizon)
            .map(|t| DVector::from(u.rows(t * self.m, self.m).clone_owned()))
            .collect()
    }
}

/// Build the stacked quadratic for one noise realization.
pub fn assemble(spec: &SystemSpec, w: &[DVector<f64>]) -> Result<StackedProblem> {
    let t_len = w.len();
    if t_len == 0 {
        return Err(Error::DimensionMismatch("empty noise sequence".into()));
    }
    let (n, m) = (spec.n(), spec.m());
    let dim = m * t_len;
    if dim > MAX_STACKED_DIM {
        return Err(Error::ProblemTooLarge {
            size: dim,
            max: MAX_STACKED_DIM,
        });
    }
    for (t, w_t) in w.iter().enumerate() {
        if w_t.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "noise vector at step {t} has length {}, expected {n}",
                w_t.len()
            )));
        }
    }

    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for t in 0..t_len {
        h.view_mut((t * m, t * m), (m, m)).copy_from(spec.r());
    }
    let mut g = DVector::<f64>::zeros(dim);
    let mut c0 = 0.0;

    // phi holds the control-to-state map for the current x_t: its first
    // m*t columns are A^{t-1-s} B. xi is the noise response.
    let mut phi = DMatrix::<f64>::zeros(n, dim);
    let mut xi = DVector::<f64>::zeros(n);
    for t in 1..=t_len {
        let prev_cols = m * (t - 1);
        let advanced = spec.a() * phi.columns(0, prev_cols);
        phi.view_mut((0, 0), (n, prev_cols)).copy_from(&advanced);
        phi.view_mut((0, prev_cols), (n, m)).copy_from(spec.b_ctrl());
        xi = spec.a() * &xi + &w[t - 1];

        let cost = if t == t_len { spec.q_f() } else { spec.q() };
        if cost.norm() == 0.0 {
            continue;
        }
        let active = phi.columns(0, m * t).clone_owned();
        let c_phi = cost * &active;
        let mut h_block = h.view_mut((0, 0), (m * t, m * t));
        h_block += active.transpose() * &c_phi;
        let mut g_block = g.rows_mut(0, m * t);
        g_block += c_phi.transpose() * &xi;
        c0 += (cost * &xi).dot(&xi);
    }
    h = symmetrize(&h);
    Ok(StackedProblem {
        h,
        g,
        c0,
        m,
        horizon: t_len,
    })
}

/// Exact minimizer and minimum of a stacked problem.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    pub cost: f64,
    /// `‖2 H u* + 2 g‖`, the first-order optimality residual.
    pub grad_residual: f64,
}

impl QpSolution {
    pub fn controls(&self, problem: &StackedProblem) -> Vec<DVector<f64>> {
        problem.unstack(&self.u_star)
    }
}

/// Minimize `u'Hu + 2g'u + c0` by a symmetric PD factorization of `H`.
pub fn solve_qp(problem: &StackedProblem) -> Result<QpSolution> {
    let chol = Cholesky::new(problem.h.clone()).ok_or(Error::NotPositiveDefinite)?;
    let u_star = -chol.solve(&problem.g);
    let cost = problem.c0 + problem.g.dot(&u_star);
    let grad_residual = 2.0 * (&problem.h * &u_star + &problem.g).norm();
    debug_assert!(grad_residual <= 1e-9 * (1.0 + problem.g.norm()) * problem.h.ncols() as f64);
    Ok(QpSolution {
        u_star,
        cost,
        grad_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_noise, Horizon, NoiseModel};
    use crate::policies::make_clairvoyant;
    use crate::sim::rollout;

    fn dvec(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn single_step_expansion_by_hand() {
        // T=1: only u_0, cost = u'(R + B'QfB)u + 2 (B'Qf w_0)'u + w_0'Qf w_0.
        let spec = SystemSpec::scalar(0.5, 1.0, 1.0, 1.0)
            .with_terminal_cost(DMatrix::from_element(1, 1, 2.0))
            .unwrap();
        let w0 = 0.7;
        let p = assemble(&spec, &[dvec(&[w0])]).unwrap();
        assert!((p.h[(0, 0)] - (1.0 + 2.0)).abs() < 1e-15);
        assert!((p.g[0] - 2.0 * w0).abs() < 1e-15);
        assert!((p.c0 - 2.0 * w0 * w0).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_has_no_affine_term() {
        let spec = SystemSpec::scalar(0.5, 1.0, 1.0, 1.0);
        let w = vec![DVector::zeros(1); 6];
        let p = assemble(&spec, &w).unwrap();
        assert_eq!(p.g.norm(), 0.0);
        assert_eq!(p.c0, 0.0);
        let sol = solve_qp(&p).unwrap();
        assert_eq!(sol.u_star.norm(), 0.0);
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn two_step_scalar_hand_expansion() {
        // a=0.5, b=1, q=r=1, Qf=0, T=2: x_1 = u_0 + w_0, so
        // cost = 2 u_0^2 + 2 w_0 u_0 + w_0^2 + u_1^2.
        let spec = SystemSpec::scalar(0.5, 1.0, 1.0, 1.0);
        let w0 = 1.3;
        let p = assemble(&spec, &[dvec(&[w0]), dvec(&[0.0])]).unwrap();
        let expected_h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((&p.h - expected_h).norm() < 1e-15);
        assert!((p.g[0] - w0).abs() < 1e-15);
        assert!(p.g[1].abs() < 1e-15);
        assert!((p.c0 - w0 * w0).abs() < 1e-15);
    }

    #[test]
    fn qp_minimizes_one_step_tradeoff() {
        // Qf = q = 1, r = 1, w_0 = 1: minimize (u+1)^2 + u^2 -> u* = -1/2,
        // cost 1/2.
        let spec = SystemSpec::scalar(0.5, 1.0, 1.0, 1.0)
            .with_terminal_cost(DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        let p = assemble(&spec, &[dvec(&[1.0])]).unwrap();
        let sol = solve_qp(&p).unwrap();
        assert!((sol.u_star[0] + 0.5).abs() < 1e-14);
        assert!((sol.cost - 0.5).abs() < 1e-14);
        assert!(sol.grad_residual <= 1e-9 * (1.0 + p.g.norm()));
    }

    #[test]
    fn quadratic_matches_rollout_cost_at_arbitrary_controls() {
        use rand::{Rng, SeedableRng};
        let spec = SystemSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.4, 0.5]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.1]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]),
            DMatrix::from_element(1, 1, 0.5),
            Some(DMatrix::identity(2, 2) * 0.7),
        )
        .unwrap();
        let t = 9;
        let model = NoiseModel::unit_variance_uniform(2);
        let w = sample_noise(&model, Horizon::new(t).unwrap(), 21);
        let p = assemble(&spec, &w).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let u = DVector::from_fn(t, |_, _| rng.random_range(-2.0..2.0));
            let policy = make_clairvoyant(p.unstack(&u));
            let traj = rollout(&spec, &policy, &w).unwrap();
            let quad = p.eval(&u);
            assert!(
                (quad - traj.total).abs() <= 1e-9 * traj.total.abs().max(1.0),
                "quadratic {quad} vs rollout {}",
                traj.total
            );
        }
    }

    #[test]
    fn minimizer_beats_random_perturbations() {
        use rand::{Rng, SeedableRng};
        let spec = SystemSpec::scalar(0.8, 1.0, 1.0, 0.3);
        let model = NoiseModel::unit_variance_uniform(1);
        let w = sample_noise(&model, Horizon::new(12).unwrap(), 17);
        let p = assemble(&spec, &w).unwrap();
        let sol = solve_qp(&p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut dir = DVector::from_fn(sol.u_star.len(), |_, _| rng.random_range(-1.0..1.0));
            dir *= 1e-3 / dir.norm();
            let perturbed = p.eval(&(&sol.u_star + dir));
            assert!(perturbed > sol.cost);
        }
    }

    #[test]
    fn oracle_never_exceeds_a_feasible_linear_policy() {
        let spec = SystemSpec::scalar(0.5, 1.0, 1.0, 1.0);
        let model = NoiseModel::unit_variance_uniform(1);
        let h = Horizon::new(15).unwrap();
        let ric = crate::riccati::backward_riccati(&spec, h).unwrap();
        let online = crate::policies::make_online(&spec, &ric, true).unwrap();
        for seed in 0..10 {
            let w = sample_noise(&model, h, seed);
            let sol = solve_qp(&assemble(&spec, &w).unwrap()).unwrap();
            let traj = rollout(&spec, &online, &w).unwrap();
            assert!(sol.cost <= traj.total + 1e-12 * traj.total.abs().max(1.0));
        }
    }

    #[test]
    fn hessian_floor_is_the_control_cost() {
        let spec = SystemSpec::scalar(0.5, 1.0, 1.0, 0.25);
        let w = vec![dvec(&[1.0]); 8];
        let p = assemble(&spec, &w).unwrap();
        assert!(crate::linalg::sym_min_eig(&p.h) >= 0.25 - 1e-12);
    }

    #[test]
    fn cap_on_stacked_dimension() {
        let spec = SystemSpec::scalar(0.5, 1.0, 1.0, 1.0);
        let w = vec![dvec(&[0.0]); MAX_STACKED_DIM + 1];
        match assemble(&spec, &w) {
            Err(Error::ProblemTooLarge { .. }) => {}
            other => panic!("expected ProblemTooLarge, got {other:?}"),
        }
    }
}
