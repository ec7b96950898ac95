//! Mixed polynomial / complex-exponential expressions with harmonic forcing.
//!
//! A [`PolyExpr`] is a finite sum of [`Term`]s, each the product of a complex
//! coefficient, an optional time factor `cos(freq*t + phase)` and a basis
//! element labelled by an [`ExtIndex`]. Drifts, diffusions and moment
//! right-hand sides all live in this class.

mod parse;

pub use parse::{parse_model, render_model, ParseError, ParseErrorKind, SdeModel};

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::index::{ExtIndex, StateKind, StateSpace};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExprError {
    #[error("product of two time-harmonic factors is not supported")]
    UnsupportedForcing,
    #[error("trigonometric function of linear state `{0}`; declare it as `angle`")]
    TrigOfLinear(String),
}

/// Time factor `cos(freq*t + phase)`; `freq == 0` means the constant 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub freq: f64,
    pub phase: f64,
}

impl Harmonic {
    pub const NONE: Harmonic = Harmonic { freq: 0.0, phase: 0.0 };

    pub fn is_none(&self) -> bool {
        self.freq == 0.0
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.is_none() {
            1.0
        } else {
            (self.freq * t + self.phase).cos()
        }
    }

    /// d/dt of the factor.
    pub fn rate(&self, t: f64) -> f64 {
        if self.is_none() {
            0.0
        } else {
            -self.freq * (self.freq * t + self.phase).sin()
        }
    }

    // Canonical form plus the constant multiplier it absorbed.
    fn normalized(self) -> (Harmonic, f64) {
        if self.freq == 0.0 {
            return (Harmonic::NONE, self.phase.cos());
        }
        let (freq, mut phase) = if self.freq < 0.0 {
            (-self.freq, -self.phase)
        } else {
            (self.freq, self.phase)
        };
        if !(phase > -PI && phase <= PI) {
            phase = (phase + PI).rem_euclid(2.0 * PI) - PI;
            if phase <= -PI {
                phase += 2.0 * PI;
            }
        }
        (Harmonic { freq, phase }, 1.0)
    }

    fn key_cmp(&self, other: &Harmonic) -> Ordering {
        self.freq
            .total_cmp(&other.freq)
            .then(self.phase.total_cmp(&other.phase))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: Complex64,
    pub harmonic: Harmonic,
    pub basis: ExtIndex,
}

impl Term {
    pub fn new(coeff: Complex64, harmonic: Harmonic, basis: ExtIndex) -> Self {
        Self {
            coeff,
            harmonic,
            basis,
        }
    }

    fn key_cmp(&self, other: &Term) -> Ordering {
        self.basis
            .cmp(&other.basis)
            .then_with(|| self.harmonic.key_cmp(&other.harmonic))
    }
}

/// Normalized sum of terms: sorted by `(basis, freq, phase)`, no repeated
/// keys, no zero coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyExpr {
    terms: Vec<Term>,
}

impl PolyExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Self {
        let mut terms: Vec<Term> = terms
            .into_iter()
            .map(|mut t| {
                let (h, factor) = t.harmonic.normalized();
                t.harmonic = h;
                t.coeff *= factor;
                t
            })
            .collect();
        terms.sort_by(|a, b| a.key_cmp(b));
        let mut out: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match out.last_mut() {
                Some(last) if last.key_cmp(&t) == Ordering::Equal => last.coeff += t.coeff,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
        Self { terms: out }
    }

    pub fn constant(space: &StateSpace, c: Complex64) -> Self {
        Self::from_terms([Term::new(c, Harmonic::NONE, space.zero())])
    }

    pub fn monomial(coeff: Complex64, basis: ExtIndex) -> Self {
        Self::from_terms([Term::new(coeff, Harmonic::NONE, basis)])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The constant value, if the expression has no state or time dependence.
    pub fn as_constant(&self) -> Option<Complex64> {
        match self.terms.as_slice() {
            [] => Some(Complex64::new(0.0, 0.0)),
            [t] if t.basis.is_zero() && t.harmonic.is_none() => Some(t.coeff),
            _ => None,
        }
    }

    pub fn is_harmonic_free(&self) -> bool {
        self.terms.iter().all(|t| t.harmonic.is_none())
    }

    /// Largest basis order among the terms (0 for constants and zero).
    pub fn max_order(&self) -> usize {
        self.terms.iter().map(|t| t.basis.order()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &PolyExpr) -> PolyExpr {
        Self::from_terms(self.terms.iter().chain(&other.terms).cloned())
    }

    pub fn scale(&self, c: Complex64) -> PolyExpr {
        Self::from_terms(self.terms.iter().map(|t| Term {
            coeff: t.coeff * c,
            ..t.clone()
        }))
    }

    pub fn neg(&self) -> PolyExpr {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// Product of two expressions over the same state space.
    pub fn mul(&self, other: &PolyExpr) -> Result<PolyExpr, ExprError> {
        poly_mul(self, other)
    }

    /// Coefficient-wise complex conjugate with windings negated.
    pub fn conjugate(&self, space: &StateSpace) -> PolyExpr {
        Self::from_terms(self.terms.iter().map(|t| Term {
            coeff: t.coeff.conj(),
            harmonic: t.harmonic,
            basis: space.conjugate(&t.basis),
        }))
    }

    pub fn eval(&self, space: &StateSpace, x: &[f64], t: f64) -> Complex64 {
        eval_poly(self, space, x, t)
    }

    /// Human-readable rendering, basis elements shown through `label`.
    pub fn render_with(&self, label: impl Fn(&ExtIndex) -> String, digits: Option<usize>) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (k, term) in self.terms.iter().enumerate() {
            let (negative, mag) = signed_parts(term.coeff);
            let mut factors = Vec::new();
            let unit = mag == Complex64::new(1.0, 0.0);
            if !unit || (term.basis.is_zero() && term.harmonic.is_none()) {
                factors.push(fmt_coeff(mag, digits));
            }
            if !term.harmonic.is_none() {
                factors.push(fmt_harmonic(&term.harmonic, digits));
            }
            if !term.basis.is_zero() {
                factors.push(label(&term.basis));
            }
            let body = factors.join("*");
            match (k, negative) {
                (0, false) => s.push_str(&body),
                (0, true) => {
                    let _ = write!(s, "-{body}");
                }
                (_, false) => {
                    let _ = write!(s, " + {body}");
                }
                (_, true) => {
                    let _ = write!(s, " - {body}");
                }
            }
        }
        s
    }
}

// Splits a coefficient into a sign and a value that renders without a
// leading minus where possible.
fn signed_parts(c: Complex64) -> (bool, Complex64) {
    if c.im == 0.0 {
        (c.re < 0.0, Complex64::new(c.re.abs(), 0.0))
    } else if c.re == 0.0 {
        (c.im < 0.0, Complex64::new(0.0, c.im.abs()))
    } else {
        (false, c)
    }
}

pub(crate) fn fmt_real(v: f64, digits: Option<usize>) -> String {
    match digits {
        None => format!("{v:?}"),
        Some(d) => {
            let s = format!("{:.*e}", d.saturating_sub(1), v);
            // back to plain notation when short enough
            let parsed: f64 = s.parse().unwrap_or(v);
            let plain = format!("{parsed}");
            if plain.len() <= d + 8 {
                plain
            } else {
                s
            }
        }
    }
}

fn fmt_coeff(c: Complex64, digits: Option<usize>) -> String {
    if c.im == 0.0 {
        fmt_real(c.re, digits)
    } else if c.re == 0.0 {
        format!("{}j", fmt_real(c.im, digits))
    } else {
        let sign = if c.im < 0.0 { '-' } else { '+' };
        format!(
            "({} {} {}j)",
            fmt_real(c.re, digits),
            sign,
            fmt_real(c.im.abs(), digits)
        )
    }
}

fn fmt_harmonic(h: &Harmonic, digits: Option<usize>) -> String {
    if h.phase == 0.0 {
        format!("cos({}*t)", fmt_real(h.freq, digits))
    } else {
        let sign = if h.phase < 0.0 { '-' } else { '+' };
        format!(
            "cos({}*t {} {})",
            fmt_real(h.freq, digits),
            sign,
            fmt_real(h.phase.abs(), digits)
        )
    }
}

/// Value of a single basis element at state `x`.
pub fn eval_basis(space: &StateSpace, basis: &ExtIndex, x: &[f64]) -> Complex64 {
    let mut v = Complex64::new(1.0, 0.0);
    for (i, &e) in basis.exps().iter().enumerate() {
        if e == 0 {
            continue;
        }
        match space.kind(i) {
            StateKind::Linear => v *= x[i].powi(e),
            StateKind::Angle => v *= Complex64::from_polar(1.0, e as f64 * x[i]),
        }
    }
    v
}

/// Σ coeff · cos(freq·t + phase) · basis(x).
pub fn eval_poly(p: &PolyExpr, space: &StateSpace, x: &[f64], t: f64) -> Complex64 {
    assert_eq!(x.len(), space.dim(), "state dimension mismatch");
    p.terms
        .iter()
        .map(|term| term.coeff * term.harmonic.value(t) * eval_basis(space, &term.basis, x))
        .sum()
}

pub fn poly_mul(a: &PolyExpr, b: &PolyExpr) -> Result<PolyExpr, ExprError> {
    let mut out = Vec::with_capacity(a.terms.len() * b.terms.len());
    for ta in &a.terms {
        for tb in &b.terms {
            let harmonic = match (ta.harmonic.is_none(), tb.harmonic.is_none()) {
                (true, _) => tb.harmonic,
                (false, true) => ta.harmonic,
                (false, false) => return Err(ExprError::UnsupportedForcing),
            };
            out.push(Term::new(ta.coeff * tb.coeff, harmonic, ta.basis.combine(&tb.basis)));
        }
    }
    Ok(PolyExpr::from_terms(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Sin,
    Cos,
}

/// `scale·sin(θ)` or `scale·cos(θ)` rewritten through Euler's relation.
pub fn expand_trig(
    space: &StateSpace,
    fun: Trig,
    state: usize,
    scale: Complex64,
) -> Result<PolyExpr, ExprError> {
    if space.kind(state) != StateKind::Angle {
        return Err(ExprError::TrigOfLinear(space.names()[state].clone()));
    }
    let plus = space.unit(state);
    let minus = space.conjugate(&plus);
    let (cp, cm) = match fun {
        // 1/(2j) = -j/2
        Trig::Sin => (Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5)),
        Trig::Cos => (Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)),
    };
    Ok(PolyExpr::from_terms([
        Term::new(scale * cp, Harmonic::NONE, plus),
        Term::new(scale * cm, Harmonic::NONE, minus),
    ]))
}
