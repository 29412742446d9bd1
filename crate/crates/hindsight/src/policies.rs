//! The three controller families behind one `Policy` abstraction.
//!
//! Online policies act on `(t, x_t)` alone. The offline-optimal policy is
//! built from the full noise sequence and follows the recursive structure
//!
//! ```text
//! u_t* = -K_t x_t - (R + B'P_{t+1}B)^{-1} B' (P_{t+1} w_t + v_{t+1}/2)
//! v_t  = 2 A'S_t w_t + (A - B K_t)' v_{t+1},    v_T = 0,
//! ```
//!
//! i.e. the online action plus a state-independent correction driven by the
//! future disturbances. The textbook form of the `v` recursion multiplies by
//! `A'S_t P_{t+1}^{-1}`, which does not exist when `Q_f = 0`; we use the
//! algebraically equal factor `(A - B K_t)'` instead, which needs no inverse
//! and is better conditioned.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SystemSpec;
use crate::riccati::RiccatiSolution;

/// A control law `u_t = pi(t, x_t)`; offline kinds bake the noise in at
/// construction time, online kinds never see it.
#[derive(Debug, Clone)]
pub enum Policy {
    /// `u_t = -K_t x_t` with the finite-horizon gains.
    OnlineTimeVarying { gains: Vec<DMatrix<f64>> },
    /// `u_t = -K x_t` with the steady-state gain; usable at any horizon.
    OnlineSteadyState { gain: DMatrix<f64> },
    /// `u_t = -K x_t` for an arbitrary constant gain.
    ConstantLinear { gain: DMatrix<f64> },
    /// Optimal offline policy: online gains plus precomputed corrections.
    OfflineOptimal {
        gains: Vec<DMatrix<f64>>,
        corrections: Vec<DVector<f64>>,
    },
    /// Replays a fixed action sequence (e.g. a QP minimizer).
    Clairvoyant { actions: Vec<DVector<f64>> },
}

impl Policy {
    /// Action at time `t` in state `x`.
    pub fn action(&self, t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Policy::OnlineTimeVarying { gains } => {
                let k = gains.get(t).ok_or(Error::HorizonMismatch {
                    expected: gains.len(),
                    actual: t + 1,
                })?;
                Ok(-(k * x))
            }
            Policy::OnlineSteadyState { gain } | Policy::ConstantLinear { gain } => {
                if gain.ncols() != x.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "gain expects state dimension {}, got {}",
                        gain.ncols(),
                        x.len()
                    )));
                }
                Ok(-(gain * x))
            }
            Policy::OfflineOptimal { gains, corrections } => {
                let k = gains.get(t).ok_or(Error::HorizonMismatch {
                    expected: gains.len(),
                    actual: t + 1,
                })?;
                Ok(-(k * x) - &corrections[t])
            }
            Policy::Clairvoyant { actions } => actions
                .get(t)
                .cloned()
                .ok_or(Error::HorizonMismatch {
                    expected: actions.len(),
                    actual: t + 1,
                }),
        }
    }

    /// Fixed horizon, when the policy has one.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Policy::OnlineTimeVarying { gains } => Some(gains.len()),
            Policy::OfflineOptimal { gains, .. } => Some(gains.len()),
            Policy::Clairvoyant { actions } => Some(actions.len()),
            Policy::OnlineSteadyState { .. } | Policy::ConstantLinear { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Policy::OnlineTimeVarying { .. } => "online-time-varying",
            Policy::OnlineSteadyState { .. } => "online-steady",
            Policy::ConstantLinear { .. } => "constant-linear",
            Policy::OfflineOptimal { .. } => "offline-optimal",
            Policy::Clairvoyant { .. } => "clairvoyant",
        }
    }
}

/// Backward-pass byproducts of the offline policy: the correction vectors
/// `v_t` and the scalar `q_0` (the offline cost-to-go at `x_0 = 0`, kept as
/// a diagnostic; measured costs always come from rollouts).
#[derive(Debug, Clone)]
pub struct OfflineAux {
    /// `v_0 .. v_T`, with `v_T = 0` exactly.
    pub v_seq: Vec<DVector<f64>>,
    pub q0: f64,
}

/// Online policy from a Riccati solution: time-varying gains for the
/// solution's horizon, or the steady-state gain.
pub fn make_online(spec: &SystemSpec, ric: &RiccatiSolution, steady: bool) -> Result<Policy> {
    if ric.k_inf().ncols() != spec.n() || ric.k_inf().nrows() != spec.m() {
        return Err(Error::DimensionMismatch(
            "Riccati solution does not match the spec's dimensions".into(),
        ));
    }
    if steady {
        Ok(Policy::OnlineSteadyState {
            gain: ric.k_inf().clone(),
        })
    } else {
        Ok(Policy::OnlineTimeVarying {
            gains: ric.k_seq.clone(),
        })
    }
}

/// `u_t = -K x_t` for a caller-supplied gain; stability is the caller's
/// concern.
pub fn make_constant_linear(gain: DMatrix<f64>) -> Policy {
    Policy::ConstantLinear { gain }
}

/// Replay a precomputed action sequence.
pub fn make_clairvoyant(actions: Vec<DVector<f64>>) -> Policy {
    Policy::Clairvoyant { actions }
}

/// Backward pass for `v_t` (inverse-free form) and the `q_0` accumulator.
pub fn build_offline_aux(
    spec: &SystemSpec,
    ric: &RiccatiSolution,
    w: &[DVector<f64>],
) -> Result<OfflineAux> {
    let t_len = ric.horizon();
    if w.len() != t_len {
        return Err(Error::HorizonMismatch {
            expected: t_len,
            actual: w.len(),
        });
    }
    let (a, b) = (spec.a(), spec.b_ctrl());
    let mut v_seq = vec![DVector::zeros(spec.n()); t_len + 1];
    let mut q = 0.0;
    for t in (0..t_len).rev() {
        if w[t].len() != spec.n() {
            return Err(Error::DimensionMismatch(format!(
                "noise vector at step {t} has length {}, expected {}",
                w[t].len(),
                spec.n()
            )));
        }
        let p_next = &ric.p_seq[t + 1];
        let s_t = &ric.s_seq[t];
        let closed_t = a - b * &ric.k_seq[t];
        let v_next = &v_seq[t + 1];

        let inner = crate::linalg::symmetrize(&(spec.r() + b.transpose() * p_next * b));
        let chol = Cholesky::new(inner).ok_or(Error::SingularInnerMatrix)?;
        let bv = chol.solve(&(b.transpose() * v_next));
        let bw = chol.solve(&(b.transpose() * (p_next * &w[t])));

        // q_t = w'S_t w + v_{t+1}'(I - B J^{-1} B'P_{t+1}) w + q_{t+1}
        //       - v_{t+1}' B J^{-1} B' v_{t+1} / 4, with J = R + B'P_{t+1}B.
        q += (s_t * &w[t]).dot(&w[t]) + v_next.dot(&w[t]) - (b * &bw).dot(v_next)
            - 0.25 * (b * &bv).dot(v_next);

        v_seq[t] = 2.0 * a.transpose() * (s_t * &w[t]) + closed_t.transpose() * v_next;
    }
    Ok(OfflineAux { v_seq, q0: q })
}

/// The optimal offline policy of the recursive form above, for one noise
/// realization. Its rollout attains the minimum of the offline objective;
/// the stacked-QP oracle cross-checks that claim in the test suite.
pub fn make_offline_optimal(
    spec: &SystemSpec,
    ric: &RiccatiSolution,
    w: &[DVector<f64>],
) -> Result<Policy> {
    let aux = build_offline_aux(spec, ric, w)?;
    let b = spec.b_ctrl();
    let t_len = ric.horizon();
    let mut corrections = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let p_next = &ric.p_seq[t + 1];
        let inner = crate::linalg::symmetrize(&(spec.r() + b.transpose() * p_next * b));
        let chol = Cholesky::new(inner).ok_or(Error::SingularInnerMatrix)?;
        let rhs = b.transpose() * (p_next * &w[t] + 0.5 * &aux.v_seq[t + 1]);
        corrections.push(chol.solve(&rhs));
    }
    Ok(Policy::OfflineOptimal {
        gains: ric.k_seq.clone(),
        corrections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_noise, Horizon, NoiseModel};
    use crate::riccati::backward_riccati;

    fn scalar_spec() -> SystemSpec {
        SystemSpec::scalar(0.5, 1.0, 1.0, 1.0)
    }

    fn dvec(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn steady_policy_is_linear_in_the_state() {
        let spec = scalar_spec();
        let ric = backward_riccati(&spec, Horizon::new(10).unwrap()).unwrap();
        let policy = make_online(&spec, &ric, true).unwrap();
        let k = ric.k_inf()[(0, 0)];
        let u = policy.action(3, &dvec(&[2.0])).unwrap();
        assert!((u[0] + 2.0 * k).abs() < 1e-14);
        assert!((u[0] + 0.531129).abs() < 1e-5);
        assert!(policy.action(0, &dvec(&[0.0])).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn zero_dynamics_gives_zero_gain_policy() {
        let spec = SystemSpec::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            None,
        )
        .unwrap();
        let ric = backward_riccati(&spec, Horizon::new(5).unwrap()).unwrap();
        let policy = make_online(&spec, &ric, false).unwrap();
        for t in 0..5 {
            let u = policy.action(t, &dvec(&[3.0, -4.0])).unwrap();
            assert!(u.norm() < 1e-12);
        }
    }

    #[test]
    fn constant_linear_arithmetic() {
        let policy = make_constant_linear(DMatrix::from_element(1, 1, 0.3));
        let u = policy.action(0, &dvec(&[-2.0])).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15);

        let zero = make_constant_linear(DMatrix::zeros(1, 1));
        assert!(zero.action(9, &dvec(&[5.0])).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn constant_gain_at_k_inf_matches_steady_policy() {
        let spec = scalar_spec();
        let ric = backward_riccati(&spec, Horizon::new(8).unwrap()).unwrap();
        let steady = make_online(&spec, &ric, true).unwrap();
        let constant = make_constant_linear(ric.k_inf().clone());
        for x in [-2.0, 0.0, 0.7, 10.0] {
            let a = steady.action(0, &dvec(&[x])).unwrap();
            let b = constant.action(0, &dvec(&[x])).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn offline_aux_zero_noise_kills_the_recursion() {
        let spec = scalar_spec();
        let t = 6;
        let ric = backward_riccati(&spec, Horizon::new(t).unwrap()).unwrap();
        let w = vec![DVector::zeros(1); t];
        let aux = build_offline_aux(&spec, &ric, &w).unwrap();
        for v in &aux.v_seq {
            assert!(v.norm() < 1e-15);
        }
        assert!(aux.q0.abs() < 1e-15);
    }

    #[test]
    fn offline_aux_single_step_unrolls_once() {
        let spec = scalar_spec();
        let ric = backward_riccati(&spec, Horizon::new(1).unwrap()).unwrap();
        let w = vec![dvec(&[0.8])];
        let aux = build_offline_aux(&spec, &ric, &w).unwrap();
        assert!(aux.v_seq[1].norm() < 1e-15);
        let expected = 2.0 * 0.5 * ric.s_seq[0][(0, 0)] * 0.8;
        assert!((aux.v_seq[0][0] - expected).abs() < 1e-14);
    }

    #[test]
    fn offline_aux_two_step_hand_unroll() {
        // a=0.5, b=1, q=r=1, Qf=0, T=2, w=(1,1):
        // P_2 = 0 so S_1 = 0, K_1 = 0, v_1 = 0; P_1 = 1, S_0 = 1 - 1/2 = 0.5,
        // v_0 = 2 a S_0 w_0 = 0.5.
        let spec = scalar_spec();
        let ric = backward_riccati(&spec, Horizon::new(2).unwrap()).unwrap();
        assert!((ric.s_seq[1][(0, 0)] - 0.0).abs() < 1e-15);
        assert!((ric.p_seq[1][(0, 0)] - 1.0).abs() < 1e-15);
        assert!((ric.s_seq[0][(0, 0)] - 0.5).abs() < 1e-15);
        let aux = build_offline_aux(&spec, &ric, &[dvec(&[1.0]), dvec(&[1.0])]).unwrap();
        assert!(aux.v_seq[1].norm() < 1e-15);
        assert!((aux.v_seq[0][0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn offline_policy_single_step_without_terminal_cost_does_nothing() {
        let spec = scalar_spec();
        let ric = backward_riccati(&spec, Horizon::new(1).unwrap()).unwrap();
        for w0 in [-3.0, 0.0, 1.7] {
            let policy = make_offline_optimal(&spec, &ric, &[dvec(&[w0])]).unwrap();
            let u = policy.action(0, &dvec(&[0.0])).unwrap();
            assert!(u[0].abs() < 1e-15, "w0 = {w0} gave u = {}", u[0]);
        }
    }

    #[test]
    fn offline_policy_with_zero_noise_equals_online() {
        let spec = scalar_spec();
        let t = 7;
        let ric = backward_riccati(&spec, Horizon::new(t).unwrap()).unwrap();
        let w = vec![DVector::zeros(1); t];
        let offline = make_offline_optimal(&spec, &ric, &w).unwrap();
        let online = make_online(&spec, &ric, false).unwrap();
        for step in 0..t {
            for x in [-1.5, 0.0, 2.0] {
                let uo = offline.action(step, &dvec(&[x])).unwrap();
                let un = online.action(step, &dvec(&[x])).unwrap();
                assert!((uo[0] - un[0]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn offline_minus_online_action_is_state_independent() {
        let spec = SystemSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.7, 0.2, -0.1, 0.5]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.3]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            None,
        )
        .unwrap();
        let t = 5;
        let ric = backward_riccati(&spec, Horizon::new(t).unwrap()).unwrap();
        let model = NoiseModel::unit_variance_uniform(2);
        let w = sample_noise(&model, Horizon::new(t).unwrap(), 12);
        let offline = make_offline_optimal(&spec, &ric, &w).unwrap();
        let online = make_online(&spec, &ric, false).unwrap();
        for step in 0..t {
            let x1 = dvec(&[1.0, -2.0]);
            let x2 = dvec(&[-0.4, 3.3]);
            let d1 = offline.action(step, &x1).unwrap() - online.action(step, &x1).unwrap();
            let d2 = offline.action(step, &x2).unwrap() - online.action(step, &x2).unwrap();
            assert!((d1 - d2).norm() < 1e-12);
        }
    }

    #[test]
    fn v_recursion_recomputes_from_its_definition() {
        let spec = scalar_spec();
        let t = 9;
        let ric = backward_riccati(&spec, Horizon::new(t).unwrap()).unwrap();
        let model = NoiseModel::unit_variance_uniform(1);
        let w = sample_noise(&model, Horizon::new(t).unwrap(), 4);
        let aux = build_offline_aux(&spec, &ric, &w).unwrap();
        assert!(aux.v_seq[t].norm() == 0.0);
        for step in 0..t {
            let closed = spec.a() - spec.b_ctrl() * &ric.k_seq[step];
            let expected = 2.0 * spec.a().transpose() * (&ric.s_seq[step] * &w[step])
                + closed.transpose() * &aux.v_seq[step + 1];
            assert!((&aux.v_seq[step] - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn v0_is_zero_mean_over_seeded_draws() {
        let spec = scalar_spec();
        let t = 8;
        let ric = backward_riccati(&spec, Horizon::new(t).unwrap()).unwrap();
        let model = NoiseModel::unit_variance_uniform(1);
        let trials = 10_000;
        let mut v0: Vec<f64> = Vec::with_capacity(trials);
        for seed in 0..trials as u64 {
            let w = sample_noise(&model, Horizon::new(t).unwrap(), seed);
            v0.push(build_offline_aux(&spec, &ric, &w).unwrap().v_seq[0][0]);
        }
        let mean = v0.iter().sum::<f64>() / trials as f64;
        let std = (v0.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (trials as f64 - 1.0))
            .sqrt();
        assert!(mean.abs() <= 5.0 * std / (trials as f64).sqrt());
    }

    #[test]
    fn horizon_mismatch_is_reported() {
        let spec = scalar_spec();
        let ric = backward_riccati(&spec, Horizon::new(3).unwrap()).unwrap();
        let w = vec![DVector::zeros(1); 2];
        match build_offline_aux(&spec, &ric, &w) {
            Err(Error::HorizonMismatch { expected: 3, actual: 2 }) => {}
            other => panic!("expected HorizonMismatch, got {other:?}"),
        }
        let policy = make_online(&spec, &ric, false).unwrap();
        assert!(policy.action(3, &dvec(&[1.0])).is_err());
    }
}
