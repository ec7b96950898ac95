use num_complex::Complex64;

use super::{initial_moments, SimError};
use crate::closure::ClosedMomentSystem;
use crate::expr::eval_basis;
use crate::momentgen::OpenMomentSystem;

/// Components smaller than this fraction of the largest one are compared
/// against the largest instead of themselves.
const REL_FLOOR: f64 = 1e-6;

/// Relative mismatch of the first two time derivatives at a point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub first: f64,
    pub second: f64,
}

/// Compares `dν/dt`, `d²ν/dt²` of the closed system with the exact `dμ/dt`,
/// `d²μ/dt²` at the deterministic initial condition `x0` at time `t0`.
///
/// `open_ext` supplies the exact rates of the moments the closure replaces;
/// it must contain every one of them in its basis.
pub fn derivative_match_residual(
    open_ext: &OpenMomentSystem,
    closed: &ClosedMomentSystem,
    x0: &[f64],
    t0: f64,
) -> Result<Residual, SimError> {
    let open = closed.open();
    let space = open.space();
    if x0.len() != space.dim() {
        return Err(SimError::InvalidArgument(format!(
            "initial state has {} entries, model has {}",
            x0.len(),
            space.dim()
        )));
    }
    let positions = open
        .higher()
        .iter()
        .map(|idx| {
            open_ext.basis_position(idx).ok_or_else(|| SimError::InsufficientExtension {
                missing: space.moment_label(idx),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let exact = |idx: &crate::index::ExtIndex| eval_basis(space, idx, x0);
    let mu0 = initial_moments(space, x0, open.basis());
    let bar0: Vec<Complex64> = open.higher().iter().map(exact).collect();
    let bar_dot: Vec<Complex64> = positions
        .iter()
        .map(|&q| open_ext.rhs()[q].eval_with(t0, exact))
        .collect();

    // exact side
    let mu_dot = open.eval(t0, &mu0, &bar0);
    let (_, a, b) = open.matrices(t0);
    let mut mu_ddot = open.eval_dt(t0, &mu0, &bar0);
    add_matvec(&mut mu_ddot, &a, &mu_dot);
    add_matvec(&mut mu_ddot, &b, &bar_dot);

    // closed side
    let phi0 = closed.closures(&mu0);
    let nu_dot = open.eval(t0, &mu0, &phi0);
    let phi_dot = closed.closure_rates(&mu0, &nu_dot);
    let mut nu_ddot = open.eval_dt(t0, &mu0, &phi0);
    add_matvec(&mut nu_ddot, &a, &nu_dot);
    add_matvec(&mut nu_ddot, &b, &phi_dot);

    Ok(Residual {
        first: relative_mismatch(&nu_dot, &mu_dot),
        second: relative_mismatch(&nu_ddot, &mu_ddot),
    })
}

fn add_matvec(out: &mut [Complex64], m: &[Vec<Complex64>], v: &[Complex64]) {
    for (o, row) in out.iter_mut().zip(m) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<Complex64>();
    }
}

/// `max_p |got_p − want_p| / max(|want_p|, floor)`.
pub(crate) fn relative_mismatch(got: &[Complex64], want: &[Complex64]) -> f64 {
    let scale = want.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let floor = (REL_FLOOR * scale).max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).norm() / w.norm().max(floor))
        .fold(0.0, f64::max)
}
