//! Closure of the open moment system.
//!
//! Every moment above the truncation order is replaced by a separable
//! product `φ = Π ν_p^{α_p}` over basis moments. Derivative matching picks
//! the exponents so that `φ` and its first time derivative agree with the
//! true moment at any deterministic initial state; the mean-field scheme
//! factors a mixed moment into its exponential part times its monomial part.

use std::fmt;

use num_complex::Complex64;

use crate::index::{binom_product, ExtIndex, StateKind, StateSpace};
use crate::linsolve;
use crate::momentgen::OpenMomentSystem;

/// Distance to the nearest integer under which a solved exponent is snapped.
pub const INTEGER_SNAP: f64 = 1e-9;

/// Default magnitude floor for closure denominators.
pub const DEFAULT_DELTA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClosureError {
    #[error("derivative-matching system for {target} has no unique solution")]
    Singular { target: String },
    #[error("{target} cannot be split into basis moments of order <= {order}")]
    NotSplittable { target: String, order: usize },
    #[error("{target} is already a basis moment")]
    InBasis { target: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    DerivativeMatching,
    MeanField,
}

impl Scheme {
    pub fn short_name(&self) -> &'static str {
        match self {
            Scheme::DerivativeMatching => "dm",
            Scheme::MeanField => "mf",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::DerivativeMatching => "derivative matching",
            Scheme::MeanField => "mean field",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureRule {
    pub target: ExtIndex,
    /// One exponent per basis moment, in basis order.
    pub exponents: Vec<f64>,
    pub scheme: Scheme,
    /// Size of the linear system solved (0 for mean field).
    pub system_dim: usize,
}

impl ClosureRule {
    /// `(basis position, exponent)` for every non-zero exponent.
    pub fn factors(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.exponents
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(p, a)| (p, *a))
    }

    pub fn is_integral(&self) -> bool {
        self.exponents.iter().all(|a| a.fract() == 0.0)
    }

    /// `E[target] ≈ num / den` in moment-label notation.
    pub fn render(&self, space: &StateSpace, basis: &[ExtIndex]) -> String {
        let mut num = Vec::new();
        let mut den = Vec::new();
        for (p, a) in self.factors() {
            let label = space.moment_label(&basis[p]);
            let (list, mag) = if a > 0.0 { (&mut num, a) } else { (&mut den, -a) };
            if mag == 1.0 {
                list.push(label);
            } else if mag.fract() == 0.0 {
                list.push(format!("{label}^{}", mag as i64));
            } else {
                list.push(format!("{label}^{mag:.6}"));
            }
        }
        let num = if num.is_empty() { "1".to_string() } else { num.join("*") };
        let rhs = match den.len() {
            0 => num,
            1 => format!("{num} / {}", den[0]),
            _ => format!("{num} / ({})", den.join("*")),
        };
        format!("{} ≈ {rhs}", space.moment_label(&self.target))
    }
}

fn sign_compatible(space: &StateSpace, candidate: &ExtIndex, target: &ExtIndex) -> bool {
    (0..space.dim()).all(|i| {
        space.kind(i) == StateKind::Linear || {
            let c = candidate.get(i);
            c == 0 || c.signum() == target.get(i).signum()
        }
    })
}

/// Derivative-matching exponents for `target` over `basis`.
pub fn dm_close(space: &StateSpace, basis: &[ExtIndex], target: &ExtIndex) -> Result<ClosureRule, ClosureError> {
    let label = || space.moment_label(target);
    if basis.contains(target) {
        return Err(ClosureError::InBasis { target: label() });
    }
    let active: Vec<usize> = (0..basis.len())
        .filter(|&p| sign_compatible(space, &basis[p], target))
        .collect();
    let pseudo: Vec<_> = active.iter().map(|&p| space.pseudo(&basis[p])).collect();
    let pseudo_target = space.pseudo(target);

    // rows: matching index s, columns: candidate p
    let mat: Vec<Vec<f64>> = pseudo
        .iter()
        .map(|ms| pseudo.iter().map(|mp| binom_product(mp, ms) as f64).collect())
        .collect();
    let rhs: Vec<f64> = pseudo
        .iter()
        .map(|ms| binom_product(&pseudo_target, ms) as f64)
        .collect();
    let sol = linsolve::solve(mat, rhs).ok_or_else(|| ClosureError::Singular { target: label() })?;

    let mut exponents = vec![0.0; basis.len()];
    for (&p, mut a) in active.iter().zip(sol) {
        let r = a.round();
        if (a - r).abs() < INTEGER_SNAP {
            a = r;
        }
        // avoid -0.0 in reports
        exponents[p] = if a == 0.0 { 0.0 } else { a };
    }
    Ok(ClosureRule {
        target: target.clone(),
        exponents,
        scheme: Scheme::DerivativeMatching,
        system_dim: active.len(),
    })
}

/// Factorization into the exponential part times the monomial part.
pub fn mean_field_close(space: &StateSpace, basis: &[ExtIndex], target: &ExtIndex) -> Result<ClosureRule, ClosureError> {
    let order = basis.iter().map(ExtIndex::order).max().unwrap_or(0);
    let not_splittable = || ClosureError::NotSplittable {
        target: space.moment_label(target),
        order,
    };
    let angle_part = target.project(|i| space.kind(i) == StateKind::Angle);
    let linear_part = target.project(|i| space.kind(i) == StateKind::Linear);
    let mut exponents = vec![0.0; basis.len()];
    for part in [angle_part, linear_part] {
        if part.is_zero() {
            continue;
        }
        let p = basis.iter().position(|b| *b == part).ok_or_else(not_splittable)?;
        exponents[p] = 1.0;
    }
    if exponents.iter().filter(|a| **a != 0.0).count() < 2 {
        return Err(not_splittable());
    }
    Ok(ClosureRule {
        target: target.clone(),
        exponents,
        scheme: Scheme::MeanField,
        system_dim: 0,
    })
}

fn ipow(mut base: Complex64, mut exp: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

fn clamp(b: Complex64, delta: f64) -> Complex64 {
    let r = b.norm();
    if r >= delta {
        b
    } else if r == 0.0 {
        Complex64::new(delta, 0.0)
    } else {
        b * (delta / r)
    }
}

fn power(base: Complex64, a: f64) -> Complex64 {
    if a.fract() == 0.0 && a.abs() < u32::MAX as f64 {
        let p = ipow(base, a.abs() as u32);
        if a < 0.0 {
            Complex64::new(1.0, 0.0) / p
        } else {
            p
        }
    } else {
        base.powf(a)
    }
}

/// `Π b_p^{α_p}` with bases under negative exponents lifted to magnitude
/// `delta` (phase kept).
pub fn eval_closure(rule: &ClosureRule, nu: &[Complex64], delta: f64) -> Complex64 {
    rule.factors()
        .map(|(p, a)| {
            let b = if a < 0.0 { clamp(nu[p], delta) } else { nu[p] };
            power(b, a)
        })
        .product()
}

#[derive(Debug, Clone)]
pub struct ClosedMomentSystem {
    open: OpenMomentSystem,
    rules: Vec<ClosureRule>,
    scheme: Scheme,
    delta: f64,
}

pub fn close_system(open: OpenMomentSystem, scheme: Scheme, delta: f64) -> Result<ClosedMomentSystem, ClosureError> {
    let rules = open
        .higher()
        .iter()
        .map(|target| match scheme {
            Scheme::DerivativeMatching => dm_close(open.space(), open.basis(), target),
            Scheme::MeanField => mean_field_close(open.space(), open.basis(), target),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClosedMomentSystem {
        open,
        rules,
        scheme,
        delta,
    })
}

impl ClosedMomentSystem {
    pub fn open(&self) -> &OpenMomentSystem {
        &self.open
    }

    pub fn rules(&self) -> &[ClosureRule] {
        &self.rules
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.open.basis().len()
    }

    /// `φ̄(ν)`, one value per higher moment.
    pub fn closures(&self, nu: &[Complex64]) -> Vec<Complex64> {
        self.rules.iter().map(|r| eval_closure(r, nu, self.delta)).collect()
    }

    /// `a(t) + A(t)ν + B(t)φ̄(ν)`.
    pub fn rhs_into(&self, t: f64, nu: &[Complex64], out: &mut [Complex64]) {
        let phi = self.closures(nu);
        self.open.eval_into(t, nu, &phi, out);
    }

    pub fn rhs(&self, t: f64, nu: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.rhs_into(t, nu, &mut out);
        out
    }

    /// `dφ̄/dt` along a direction `nu_dot`, by the chain rule
    /// `∂φ/∂ν_p = α_p φ / ν_p` (clamped bases where the exponent is negative).
    pub fn closure_rates(&self, nu: &[Complex64], nu_dot: &[Complex64]) -> Vec<Complex64> {
        self.rules
            .iter()
            .map(|rule| {
                let phi = eval_closure(rule, nu, self.delta);
                rule.factors()
                    .map(|(p, a)| {
                        let b = if a < 0.0 { clamp(nu[p], self.delta) } else { nu[p] };
                        if b == Complex64::new(0.0, 0.0) {
                            // only reachable for a > 0; the factor is b^a
                            if a == 1.0 {
                                phi_without(rule, p, nu, self.delta) * nu_dot[p]
                            } else {
                                Complex64::new(0.0, 0.0)
                            }
                        } else {
                            phi * a / b * nu_dot[p]
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// One line per closure rule.
    pub fn render_rules(&self) -> String {
        let mut s = String::new();
        for rule in &self.rules {
            s.push_str(&rule.render(self.open.space(), self.open.basis()));
            s.push('\n');
        }
        s
    }
}

fn phi_without(rule: &ClosureRule, skip: usize, nu: &[Complex64], delta: f64) -> Complex64 {
    rule.factors()
        .filter(|(p, _)| *p != skip)
        .map(|(p, a)| {
            let b = if a < 0.0 { clamp(nu[p], delta) } else { nu[p] };
            power(b, a)
        })
        .product()
}
