//! Numerical solution of closed moment systems and the Monte Carlo oracle.

mod mc;
mod residual;
mod rk4;

pub use mc::{euler_maruyama, simulate, within_band, McConfig, McEstimate, RawEstimate, BAND_SLACK, Z95};
pub use residual::{derivative_match_residual, Residual};
pub use rk4::{integrate_closed, Trajectory};

use num_complex::Complex64;

use crate::expr::eval_basis;
use crate::index::{ExtIndex, StateSpace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("integration diverged after t = {last_finite}")]
    Diverged { last_finite: f64 },
    #[error("drift of `{state}` has imaginary part {imag:e} at t = {t}; model is not real")]
    ModelNotReal { state: String, t: f64, imag: f64 },
    #[error("{failed} of {total} Monte Carlo paths became non-finite")]
    PathFailures { failed: usize, total: usize },
    #[error("extended system does not contain {missing}; raise its order")]
    InsufficientExtension { missing: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

/// Moments of a point mass at `x0`: `Π x0^m · Π exp(j q θ0)` per label.
pub fn initial_moments(space: &StateSpace, x0: &[f64], basis: &[ExtIndex]) -> Vec<Complex64> {
    assert_eq!(x0.len(), space.dim(), "initial state dimension mismatch");
    basis.iter().map(|idx| eval_basis(space, idx, x0)).collect()
}

/// Step counts at which values are recorded: every `save_every`-th step and
/// always the final one.
pub fn save_steps(steps: usize, save_every: usize) -> Vec<usize> {
    let every = save_every.max(1);
    let mut out: Vec<usize> = (0..=steps).step_by(every).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

/// Number of fixed steps of size `dt` covering `[t0, t1]`.
pub fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize, SimError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SimError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if t0.is_nan() || t1.is_nan() || t1 <= t0 {
        return Err(SimError::InvalidArgument(format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    let n = ((t1 - t0) / dt).round();
    if n < 1.0 {
        return Err(SimError::InvalidArgument("interval shorter than one step".into()));
    }
    Ok(n as usize)
}
