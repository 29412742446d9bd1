//! Rollout engine and seeded Monte Carlo harness.
//!
//! The engine enforces the information pattern: a policy acts on `x_t`
//! before `w_t` is revealed, so online policies are never handed the noise.
//! Offline policies already absorbed it at construction.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::quad_form;
use crate::model::{sample_noise, Horizon, NoiseModel, SystemSpec};
use crate::policies::Policy;

/// One closed-loop run: `T+1` states from `x_0 = 0`, `T` controls, and the
/// cost split per step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// `x_t'Q x_t + u_t'R u_t` for t = 0 .. T-1.
    pub step_costs: Vec<f64>,
    /// `x_T' Q_f x_T`.
    pub terminal_cost: f64,
    pub total: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// `total / T`, the paper-normalized statistic.
    pub fn time_averaged(&self) -> f64 {
        self.total / self.horizon() as f64
    }
}

/// Roll `policy` against the noise sequence `w` from `x_0 = 0`.
pub fn rollout(spec: &SystemSpec, policy: &Policy, w: &[DVector<f64>]) -> Result<Trajectory> {
    let t_len = w.len();
    if t_len == 0 {
        return Err(Error::HorizonMismatch {
            expected: 1,
            actual: 0,
        });
    }
    if let Some(h) = policy.horizon() {
        if h != t_len {
            return Err(Error::HorizonMismatch {
                expected: h,
                actual: t_len,
            });
        }
    }
    let n = spec.n();
    let mut states = Vec::with_capacity(t_len + 1);
    let mut controls = Vec::with_capacity(t_len);
    let mut step_costs = Vec::with_capacity(t_len);
    let mut x = DVector::zeros(n);
    let mut total = 0.0;
    for (t, w_t) in w.iter().enumerate() {
        if w_t.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "noise vector at step {t} has length {}, expected {n}",
                w_t.len()
            )));
        }
        let u = policy.action(t, &x)?;
        if u.len() != spec.m() {
            return Err(Error::DimensionMismatch(format!(
                "policy returned a control of length {}, expected {}",
                u.len(),
                spec.m()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: t });
        }
        let cost = quad_form(spec.q(), &x) + quad_form(spec.r(), &u);
        let x_next = spec.a() * &x + spec.b_ctrl() * &u + w_t;
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: t });
        }
        states.push(x);
        controls.push(u);
        step_costs.push(cost);
        total += cost;
        x = x_next;
    }
    let terminal_cost = quad_form(spec.q_f(), &x);
    states.push(x);
    total += terminal_cost;
    Ok(Trajectory {
        states,
        controls,
        step_costs,
        terminal_cost,
        total,
    })
}

/// Mean, spread, and raw per-trial values of a Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation (n-1 normalization).
    pub std: f64,
    /// `1.96 * std / sqrt(trials)`.
    pub ci95_halfwidth: f64,
    pub per_trial: Vec<f64>,
}

impl MonteCarloSummary {
    pub fn from_values(per_trial: Vec<f64>) -> Self {
        let trials = per_trial.len();
        let mean = per_trial.iter().sum::<f64>() / trials as f64;
        let std = if trials > 1 {
            (per_trial.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0))
                .sqrt()
        } else {
            0.0
        };
        MonteCarloSummary {
            trials,
            mean,
            std,
            ci95_halfwidth: 1.96 * std / (trials as f64).sqrt(),
            per_trial,
        }
    }
}

/// Rebuilds the policy per trial; offline kinds need that trial's noise.
/// The third argument is the trial's seed, for factories with their own
/// internal randomization (e.g. multi-start search).
pub type PolicyFactory<'a> =
    dyn Fn(&SystemSpec, &[DVector<f64>], u64) -> Result<Policy> + Sync + 'a;

/// Monte Carlo over time-averaged rollout costs. Trial `k` draws its noise
/// from seed `base_seed + k`, so the whole experiment is a pure function of
/// its arguments; trials run in parallel and are stored by index.
pub fn monte_carlo(
    spec: &SystemSpec,
    model: &NoiseModel,
    horizon: Horizon,
    trials: usize,
    base_seed: u64,
    factory: &PolicyFactory<'_>,
) -> Result<MonteCarloSummary> {
    if trials < 2 {
        return Err(Error::DimensionMismatch(
            "monte_carlo needs at least 2 trials".into(),
        ));
    }
    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed.wrapping_add(k as u64);
            let w = sample_noise(model, horizon, seed);
            let policy = factory(spec, &w, seed).map_err(|e| Error::Trial {
                index: k,
                source: Box::new(e),
            })?;
            let traj = rollout(spec, &policy, &w).map_err(|e| Error::Trial {
                index: k,
                source: Box::new(e),
            })?;
            Ok(traj.time_averaged())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MonteCarloSummary::from_values(per_trial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{make_constant_linear, make_offline_optimal, make_online};
    use crate::riccati::backward_riccati;
    use nalgebra::DMatrix;

    fn scalar_spec() -> SystemSpec {
        SystemSpec::scalar(0.5, 1.0, 1.0, 1.0)
    }

    fn dvec(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    #[test]
    fn zero_noise_linear_policy_stays_at_rest() {
        let spec = scalar_spec();
        let policy = make_constant_linear(DMatrix::from_element(1, 1, 0.2));
        let w = vec![DVector::zeros(1); 5];
        let traj = rollout(&spec, &policy, &w).unwrap();
        assert!(traj.states.iter().all(|x| x.norm() == 0.0));
        assert!(traj.controls.iter().all(|u| u.norm() == 0.0));
        assert_eq!(traj.total, 0.0);
    }

    #[test]
    fn open_loop_decay_hand_iteration() {
        // a=0.5, K=0, w=(1,0,0): states 0, 1, 0.5, 0.25; costs 0, 1, 0.25.
        let spec = scalar_spec();
        let policy = make_constant_linear(DMatrix::zeros(1, 1));
        let w = vec![dvec(&[1.0]), dvec(&[0.0]), dvec(&[0.0])];
        let traj = rollout(&spec, &policy, &w).unwrap();
        let expected_states = [0.0, 1.0, 0.5, 0.25];
        for (x, e) in traj.states.iter().zip(expected_states) {
            assert!((x[0] - e).abs() < 1e-15);
        }
        let expected_costs = [0.0, 1.0, 0.25];
        for (c, e) in traj.step_costs.iter().zip(expected_costs) {
            assert!((c - e).abs() < 1e-15);
        }
        assert!((traj.total - 1.25).abs() < 1e-15);
        assert_eq!(traj.terminal_cost, 0.0);
    }

    #[test]
    fn trajectory_satisfies_dynamics_replay_and_cost_sum() {
        let spec = SystemSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.3, 0.8]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.4]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            Some(DMatrix::identity(2, 2) * 0.5),
        )
        .unwrap();
        let t = 12;
        let ric = backward_riccati(&spec, Horizon::new(t).unwrap()).unwrap();
        let policy = make_online(&spec, &ric, false).unwrap();
        let model = NoiseModel::unit_variance_uniform(2);
        let w = sample_noise(&model, Horizon::new(t).unwrap(), 99);
        let traj = rollout(&spec, &policy, &w).unwrap();

        assert_eq!(traj.states[0].norm(), 0.0);
        for step in 0..t {
            let predicted = spec.a() * &traj.states[step]
                + spec.b_ctrl() * &traj.controls[step]
                + &w[step];
            assert!((&traj.states[step + 1] - predicted).norm() < 1e-14);
        }
        let sum: f64 = traj.step_costs.iter().sum::<f64>() + traj.terminal_cost;
        assert!((traj.total - sum).abs() <= 1e-10 * traj.total.abs().max(1.0));
    }

    #[test]
    fn causality_of_online_policies() {
        // Changing w_s for s >= t must not change online actions up to t.
        let spec = scalar_spec();
        let t = 10;
        let ric = backward_riccati(&spec, Horizon::new(t).unwrap()).unwrap();
        let policy = make_online(&spec, &ric, false).unwrap();
        let model = NoiseModel::unit_variance_uniform(1);
        let w1 = sample_noise(&model, Horizon::new(t).unwrap(), 5);
        let cut = 6;
        let mut w2 = w1.clone();
        for v in w2.iter_mut().skip(cut) {
            *v = -v.clone() + dvec(&[0.31]);
        }
        let t1 = rollout(&spec, &policy, &w1).unwrap();
        let t2 = rollout(&spec, &policy, &w2).unwrap();
        for step in 0..=cut {
            assert_eq!(t1.controls[step], t2.controls[step]);
        }
        assert_ne!(t1.controls[cut + 1], t2.controls[cut + 1]);
    }

    #[test]
    fn noise_scaling_scales_costs_quadratically() {
        let spec = scalar_spec();
        let policy = make_constant_linear(DMatrix::from_element(1, 1, 0.25));
        let model = NoiseModel::unit_variance_uniform(1);
        let w = sample_noise(&model, Horizon::new(40).unwrap(), 8);
        let c = 3.7;
        let w_scaled: Vec<DVector<f64>> = w.iter().map(|v| v * c).collect();
        let base = rollout(&spec, &policy, &w).unwrap().total;
        let scaled = rollout(&spec, &policy, &w_scaled).unwrap().total;
        assert!((scaled - c * c * base).abs() <= 1e-10 * scaled.abs());
    }

    #[test]
    fn diverging_policy_reports_non_finite_state() {
        let spec = scalar_spec();
        // u = -K x with K huge drives x to overflow within a few steps.
        let policy = make_constant_linear(DMatrix::from_element(1, 1, -1e160));
        let w = vec![dvec(&[1.0]); 4];
        match rollout(&spec, &policy, &w) {
            Err(Error::NonFiniteState { .. }) => {}
            other => panic!("expected NonFiniteState, got {other:?}"),
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_and_indexes_by_seed() {
        let spec = scalar_spec();
        let model = NoiseModel::unit_variance_uniform(1);
        let factory = |spec: &SystemSpec, _w: &[DVector<f64>], _seed: u64| {
            let ric = backward_riccati(spec, Horizon::new(50).unwrap()).unwrap();
            make_online(spec, &ric, true)
        };
        let s1 = monte_carlo(&spec, &model, Horizon::new(50).unwrap(), 8, 123, &factory).unwrap();
        let s2 = monte_carlo(&spec, &model, Horizon::new(50).unwrap(), 8, 123, &factory).unwrap();
        assert_eq!(s1.per_trial, s2.per_trial);
        assert!((s1.ci95_halfwidth - 1.96 * s1.std / (8f64).sqrt()).abs() < 1e-15);
        let mean = s1.per_trial.iter().sum::<f64>() / 8.0;
        assert_eq!(s1.mean, mean);
    }

    #[test]
    fn degenerate_single_atom_noise_gives_zero_spread() {
        // A single empirical atom re-centers to zero noise: every trial is
        // identical, so the spread across trials is exactly zero.
        let spec = scalar_spec();
        let model = NoiseModel::empirical(vec![dvec(&[0.4])]).unwrap();
        let factory = |_: &SystemSpec, _: &[DVector<f64>], _: u64| {
            Ok(make_constant_linear(DMatrix::from_element(1, 1, 0.2)))
        };
        let s = monte_carlo(&spec, &model, Horizon::new(10).unwrap(), 2, 0, &factory).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn offline_factory_is_rebuilt_per_trial() {
        let spec = scalar_spec();
        let model = NoiseModel::unit_variance_uniform(1);
        let h = Horizon::new(30).unwrap();
        let ric = backward_riccati(&spec, h).unwrap();
        let factory = move |spec: &SystemSpec, w: &[DVector<f64>], _seed: u64| {
            make_offline_optimal(spec, &ric, w)
        };
        let s = monte_carlo(&spec, &model, h, 6, 77, &factory).unwrap();
        // Different noise per trial must give different offline costs.
        let all_equal = s.per_trial.windows(2).all(|p| p[0] == p[1]);
        assert!(!all_equal);
    }

    #[test]
    fn trial_errors_carry_the_trial_index() {
        let spec = scalar_spec();
        let model = NoiseModel::unit_variance_uniform(1);
        let factory = |_: &SystemSpec, _: &[DVector<f64>], seed: u64| {
            if seed == 11 {
                Err(Error::AllStartsDiverged)
            } else {
                Ok(make_constant_linear(DMatrix::zeros(1, 1)))
            }
        };
        match monte_carlo(&spec, &model, Horizon::new(5).unwrap(), 4, 10, &factory) {
            Err(Error::Trial { index: 1, .. }) => {}
            other => panic!("expected Trial {{ index: 1 }}, got {other:?}"),
        }
    }
}
