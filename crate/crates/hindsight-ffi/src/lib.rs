//! C ABI over the hindsight toolkit.
//!
//! Conventions: opaque handles created and freed by this library, status
//! codes for every call, row-major `f64` output buffers sized by the caller
//! (dimensions come from `hs_system_dims`). On any non-OK status,
//! `hs_last_error_message` returns a thread-local, NUL-terminated
//! description valid until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hindsight::analysis;
use hindsight::error::Error;
use hindsight::linear_search;
use hindsight::model::{load_spec_json, sample_noise, Horizon, NoiseModel, SystemSpec};
use hindsight::policies::{make_constant_linear, make_offline_optimal, make_online};
use hindsight::riccati::{self, backward_riccati, solve_dare};
use hindsight::sim::{monte_carlo, rollout};
use nalgebra::DMatrix;

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    HsOk = 0,
    /// A required pointer argument was NULL.
    HsNullArgument = 1,
    /// The input document failed to parse.
    HsParseError = 2,
    /// A structural assumption (PSD costs, stabilizability, dimensions)
    /// failed.
    HsValidationError = 3,
    /// A solver failed to converge or a numerical guard tripped.
    HsNumericalError = 4,
    /// The implementation panicked; state is still consistent.
    HsInternalError = 5,
}

/// Policy selector for simulation entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsPolicy {
    HsPolicyOnlineSteady = 0,
    HsPolicyOnlineTimeVarying = 1,
    HsPolicyOfflineOptimal = 2,
}

/// Opaque problem instance: dynamics, costs, and noise model.
pub struct HsSystem {
    spec: SystemSpec,
    model: NoiseModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> HsStatus {
    match err {
        Error::Parse { .. } => HsStatus::HsParseError,
        e if e.is_validation() => HsStatus::HsValidationError,
        _ => HsStatus::HsNumericalError,
    }
}

fn fail(err: &Error) -> HsStatus {
    set_error(&err.to_string());
    status_for(err)
}

fn guarded(f: impl FnOnce() -> HsStatus) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            HsStatus::HsInternalError
        }
    }
}

/// Message for the most recent failure on this thread. Never NULL; empty
/// before the first failure. The pointer is invalidated by the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse a JSON problem document (the same schema the CLI consumes) into a
/// system handle. On success writes the handle through `out_system`; free
/// it with `hs_system_free`.
///
/// # Safety
/// `json` must point to a NUL-terminated string; `out_system` must be a
/// valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn hs_system_from_json(
    json: *const c_char,
    out_system: *mut *mut HsSystem,
) -> HsStatus {
    if json.is_null() || out_system.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let text = match std::ffi::CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("spec JSON is not valid UTF-8");
            return HsStatus::HsParseError;
        }
    };
    guarded(|| match load_spec_json(text) {
        Ok((spec, model)) => {
            *out_system = Box::into_raw(Box::new(HsSystem { spec, model }));
            HsStatus::HsOk
        }
        Err(e) => fail(&e),
    })
}

/// Release a handle returned by `hs_system_from_json`. NULL is a no-op.
///
/// # Safety
/// `system` must be NULL or a pointer previously returned by
/// `hs_system_from_json` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn hs_system_free(system: *mut HsSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// State and control dimensions of a system.
///
/// # Safety
/// All pointers must be valid; `system` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_system_dims(
    system: *const HsSystem,
    out_n: *mut usize,
    out_m: *mut usize,
) -> HsStatus {
    if system.is_null() || out_n.is_null() || out_m.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    *out_n = sys.spec.n();
    *out_m = sys.spec.m();
    HsStatus::HsOk
}

/// Validate the structural assumptions; on success writes
/// `rho(A - B K_stab)` of the stabilizing witness.
///
/// # Safety
/// `system` must be a live handle; `out_radius` may be NULL to skip it.
#[no_mangle]
pub unsafe extern "C" fn hs_system_validate(
    system: *const HsSystem,
    out_radius: *mut f64,
) -> HsStatus {
    if system.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    guarded(|| match sys.spec.validate().as_result() {
        Ok(witness) => {
            if !out_radius.is_null() {
                *out_radius = witness.closed_loop_radius;
            }
            HsStatus::HsOk
        }
        Err(e) => fail(&e),
    })
}

unsafe fn write_matrix(dst: *mut f64, m: &DMatrix<f64>) {
    // Row-major copy.
    let mut idx = 0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            *dst.add(idx) = m[(i, j)];
            idx += 1;
        }
    }
}

/// Solve the algebraic Riccati equation. `p_out` (n*n), `k_out` (m*n) and
/// `s_out` (n*n) are optional row-major output buffers; `residual_out`
/// receives the fixed-point residual.
///
/// # Safety
/// `system` must be a live handle; non-NULL buffers must have the stated
/// capacities.
#[no_mangle]
pub unsafe extern "C" fn hs_solve_dare(
    system: *const HsSystem,
    p_out: *mut f64,
    k_out: *mut f64,
    s_out: *mut f64,
    residual_out: *mut f64,
) -> HsStatus {
    if system.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    guarded(
        || match solve_dare(&sys.spec, riccati::DEFAULT_TOL, riccati::DEFAULT_MAX_ITER) {
            Ok(sol) => {
                if !p_out.is_null() {
                    write_matrix(p_out, &sol.p);
                }
                if !k_out.is_null() {
                    write_matrix(k_out, &sol.k);
                }
                if !s_out.is_null() {
                    write_matrix(s_out, &sol.s);
                }
                if !residual_out.is_null() {
                    *residual_out = sol.residual;
                }
                HsStatus::HsOk
            }
            Err(e) => fail(&e),
        },
    )
}

/// Closed-form infinite-horizon costs: `Tr(PW)`, the offline value, and the
/// series correction separating them from `Tr(WS)`.
///
/// # Safety
/// `system` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_closed_form_costs(
    system: *const HsSystem,
    online_out: *mut f64,
    offline_out: *mut f64,
    correction_out: *mut f64,
) -> HsStatus {
    if system.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    guarded(|| match analysis::closed_form_costs(&sys.spec, &sys.model) {
        Ok(f) => {
            if !online_out.is_null() {
                *online_out = f.online_cost;
            }
            if !offline_out.is_null() {
                *offline_out = f.offline_cost;
            }
            if !correction_out.is_null() {
                *correction_out = f.series_correction;
            }
            HsStatus::HsOk
        }
        Err(e) => fail(&e),
    })
}

/// Asymptotic per-step policy regrets. `online_vs_linear_out` always
/// receives exactly zero; it is part of the result contract.
///
/// # Safety
/// `system` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_asymptotic_regret(
    system: *const HsSystem,
    online_vs_offline_out: *mut f64,
    linear_vs_offline_out: *mut f64,
    online_vs_linear_out: *mut f64,
) -> HsStatus {
    if system.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    guarded(|| match analysis::regret_report(&sys.spec, &sys.model, None) {
        Ok(r) => {
            if !online_vs_offline_out.is_null() {
                *online_vs_offline_out = r.online_vs_offline;
            }
            if !linear_vs_offline_out.is_null() {
                *linear_vs_offline_out = r.linear_vs_offline;
            }
            if !online_vs_linear_out.is_null() {
                *online_vs_linear_out = r.online_vs_linear;
            }
            HsStatus::HsOk
        }
        Err(e) => fail(&e),
    })
}

fn run_rollout(sys: &HsSystem, policy: HsPolicy, steps: usize, seed: u64) -> Result<f64, Error> {
    let horizon = Horizon::new(steps)?;
    let ric = backward_riccati(&sys.spec, horizon)?;
    let w = sample_noise(&sys.model, horizon, seed);
    let pol = match policy {
        HsPolicy::HsPolicyOnlineSteady => make_online(&sys.spec, &ric, true)?,
        HsPolicy::HsPolicyOnlineTimeVarying => make_online(&sys.spec, &ric, false)?,
        HsPolicy::HsPolicyOfflineOptimal => make_offline_optimal(&sys.spec, &ric, &w)?,
    };
    Ok(rollout(&sys.spec, &pol, &w)?.time_averaged())
}

/// Time-averaged cost of one seeded rollout under the selected policy.
///
/// # Safety
/// `system` must be a live handle; `cost_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_rollout_cost(
    system: *const HsSystem,
    policy: HsPolicy,
    steps: usize,
    seed: u64,
    cost_out: *mut f64,
) -> HsStatus {
    if system.is_null() || cost_out.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    guarded(|| match run_rollout(sys, policy, steps, seed) {
        Ok(c) => {
            *cost_out = c;
            HsStatus::HsOk
        }
        Err(e) => fail(&e),
    })
}

/// Seeded Monte Carlo of time-averaged cost; trial k uses seed
/// `base_seed + k`. Writes the mean and the 95% CI half-width.
///
/// # Safety
/// `system` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_monte_carlo(
    system: *const HsSystem,
    policy: HsPolicy,
    steps: usize,
    trials: usize,
    base_seed: u64,
    mean_out: *mut f64,
    ci95_out: *mut f64,
) -> HsStatus {
    if system.is_null() || mean_out.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    guarded(|| {
        let result = (|| {
            let horizon = Horizon::new(steps)?;
            let ric = backward_riccati(&sys.spec, horizon)?;
            monte_carlo(
                &sys.spec,
                &sys.model,
                horizon,
                trials,
                base_seed,
                &|spec, w, _seed| match policy {
                    HsPolicy::HsPolicyOnlineSteady => make_online(spec, &ric, true),
                    HsPolicy::HsPolicyOnlineTimeVarying => make_online(spec, &ric, false),
                    HsPolicy::HsPolicyOfflineOptimal => make_offline_optimal(spec, &ric, w),
                },
            )
        })();
        match result {
            Ok(summary) => {
                *mean_out = summary.mean;
                if !ci95_out.is_null() {
                    *ci95_out = summary.ci95_halfwidth;
                }
                HsStatus::HsOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Best constant gain in hindsight for one seeded noise realization.
/// `k_out` (m*n, row-major) receives the gain; `cost_out` its
/// time-averaged cost.
///
/// # Safety
/// `system` must be a live handle; non-NULL buffers must have the stated
/// capacities.
#[no_mangle]
pub unsafe extern "C" fn hs_optimal_linear_gain(
    system: *const HsSystem,
    steps: usize,
    seed: u64,
    starts: usize,
    k_out: *mut f64,
    cost_out: *mut f64,
) -> HsStatus {
    if system.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    guarded(|| {
        let result = (|| {
            let horizon = Horizon::new(steps)?;
            let w = sample_noise(&sys.model, horizon, seed);
            linear_search::optimize(&sys.spec, &w, starts, seed, 1e-7, 500)
        })();
        match result {
            Ok(found) => {
                if !k_out.is_null() {
                    write_matrix(k_out, &found.k_star);
                }
                if !cost_out.is_null() {
                    *cost_out = found.cost;
                }
                HsStatus::HsOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Rollout cost of a caller-supplied constant gain (`gain` is m*n,
/// row-major) on one seeded noise realization.
///
/// # Safety
/// `system` must be a live handle; `gain` must hold m*n readable values;
/// `cost_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_constant_gain_cost(
    system: *const HsSystem,
    gain: *const f64,
    steps: usize,
    seed: u64,
    cost_out: *mut f64,
) -> HsStatus {
    if system.is_null() || gain.is_null() || cost_out.is_null() {
        set_error("NULL argument");
        return HsStatus::HsNullArgument;
    }
    let sys = &*system;
    let (n, m) = (sys.spec.n(), sys.spec.m());
    let k = DMatrix::from_fn(m, n, |i, j| *gain.add(i * n + j));
    guarded(|| {
        let result = (|| {
            let horizon = Horizon::new(steps)?;
            let w = sample_noise(&sys.model, horizon, seed);
            rollout(&sys.spec, &make_constant_linear(k.clone()), &w)
        })();
        match result {
            Ok(traj) => {
                *cost_out = traj.time_averaged();
                HsStatus::HsOk
            }
            Err(e) => fail(&e),
        }
    })
}
