//! Moment closure for stochastic differential equations with polynomial and
//! trigonometric dynamics.
//!
//! The pipeline is:
//!
//! 1. [`expr::parse_model`] turns a model description into an [`SdeModel`],
//!    rewriting `sin`/`cos` of angle states as complex exponentials.
//! 2. [`momentgen::build_open_system`] applies the Itô generator to every
//!    moment up to a truncation order, producing an [`OpenMomentSystem`].
//! 3. [`closure::close_system`] replaces the moments above the truncation
//!    order with derivative-matching (or mean-field) closures.
//! 4. [`sim::integrate_closed`] integrates the closed system, and
//!    [`sim::euler_maruyama`] estimates the same moments by Monte Carlo.

pub mod closure;
pub mod expr;
pub mod index;
mod linsolve;
pub mod models;
pub mod momentgen;
pub mod sim;

pub use closure::{ClosedMomentSystem, ClosureError, ClosureRule, Scheme};
pub use expr::{Harmonic, ParseError, PolyExpr, SdeModel, Term};
pub use index::{ExtIndex, IndexError, StateKind, StateSpace};
pub use momentgen::{MomentCombo, OpenMomentSystem};
pub use num_complex::Complex64;
pub use sim::{McConfig, McEstimate, SimError, Trajectory};

/// Errors surfaced by the end-to-end pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Closure(#[from] ClosureError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
