//! Policy-regret toolkit for discrete-time LQR control.
//!
//! Three controllers for `x_{t+1} = A x_t + B u_t + w_t` with quadratic
//! costs and bounded i.i.d. noise:
//!
//! 1. the optimal online policy `u_t = -K x_t` from the Riccati fixed point,
//! 2. the optimal offline *linear* policy, the best constant gain in
//!    hindsight for one noise realization, and
//! 3. the optimal offline policy, the unconstrained cost minimizer given
//!    the whole noise sequence, built recursively from the online gains
//!    and the future noise.
//!
//! The crate pairs every closed-form quantity with an independent check:
//! the recursive offline policy against a stacked convex QP, the Lyapunov
//! solve against series truncation, adjoint gradients against finite
//! differences, and the infinite-horizon cost formulas against seeded
//! Monte Carlo rollouts.

#![forbid(unsafe_code)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod linear_search;
pub mod model;
pub mod offline_oracle;
pub mod policies;
pub mod riccati;
pub mod sim;

pub use error::{Error, Result};
