//! Itô generator applied to moment labels, and assembly of the open moment
//! system `dμ/dt = a(t) + A(t)μ + B(t)μ̄`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::expr::{poly_mul, ExprError, Harmonic, PolyExpr, SdeModel};
use crate::index::{ExtIndex, StateKind, StateSpace};

/// Right-hand side `Σ c_r(t) · E[idx_r]` of one moment equation. The zero
/// label stands for the constant 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentCombo(PolyExpr);

impl MomentCombo {
    pub fn from_poly(p: PolyExpr) -> Self {
        Self(p)
    }

    pub fn as_poly(&self) -> &PolyExpr {
        &self.0
    }

    pub fn terms(&self) -> &[crate::expr::Term] {
        self.0.terms()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Every moment label read by this combination (excluding the constant).
    pub fn moments(&self) -> impl Iterator<Item = &ExtIndex> {
        self.0.terms().iter().map(|t| &t.basis).filter(|b| !b.is_zero())
    }

    /// Evaluates with moment values supplied by `moment`.
    pub fn eval_with(&self, t: f64, mut moment: impl FnMut(&ExtIndex) -> Complex64) -> Complex64 {
        self.0
            .terms()
            .iter()
            .map(|term| {
                let m = if term.basis.is_zero() {
                    Complex64::new(1.0, 0.0)
                } else {
                    moment(&term.basis)
                };
                term.coeff * term.harmonic.value(t) * m
            })
            .sum()
    }

    /// Partial time derivative: moments held fixed, harmonic coefficients
    /// differentiated.
    pub fn eval_dt_with(&self, t: f64, mut moment: impl FnMut(&ExtIndex) -> Complex64) -> Complex64 {
        self.0
            .terms()
            .iter()
            .filter(|term| !term.harmonic.is_none())
            .map(|term| {
                let m = if term.basis.is_zero() {
                    Complex64::new(1.0, 0.0)
                } else {
                    moment(&term.basis)
                };
                term.coeff * term.harmonic.rate(t) * m
            })
            .sum()
    }

    pub fn render(&self, space: &StateSpace) -> String {
        self.0.render_with(|i| space.moment_label(i), Some(12))
    }
}

/// `∂ basis / ∂ x_state` as at most one `(factor, label)` pair.
pub fn basis_derivative(space: &StateSpace, idx: &ExtIndex, state: usize) -> Vec<(Complex64, ExtIndex)> {
    let e = idx.get(state);
    if e == 0 {
        return Vec::new();
    }
    match space.kind(state) {
        StateKind::Linear => vec![(Complex64::new(e as f64, 0.0), idx.with(state, e - 1))],
        StateKind::Angle => vec![(Complex64::new(0.0, e as f64), idx.clone())],
    }
}

fn derivative_poly(space: &StateSpace, idx: &ExtIndex, state: usize) -> PolyExpr {
    PolyExpr::from_terms(
        basis_derivative(space, idx, state)
            .into_iter()
            .map(|(c, b)| crate::expr::Term::new(c, Harmonic::NONE, b)),
    )
}

fn second_derivative_poly(space: &StateSpace, idx: &ExtIndex, i: usize, j: usize) -> PolyExpr {
    let mut terms = Vec::new();
    for (c1, b1) in basis_derivative(space, idx, i) {
        for (c2, b2) in basis_derivative(space, &b1, j) {
            terms.push(crate::expr::Term::new(c1 * c2, Harmonic::NONE, b2));
        }
    }
    PolyExpr::from_terms(terms)
}

/// `(G Gᵀ)` for a model, computed once per system build.
struct Diffusion(Vec<Vec<PolyExpr>>);

impl Diffusion {
    fn of(model: &SdeModel) -> Result<Self, ExprError> {
        let n = model.space().dim();
        let mut rows = vec![vec![PolyExpr::zero(); n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = model.diffusion(i, j)?;
            }
        }
        Ok(Self(rows))
    }
}

fn generator(model: &SdeModel, diffusion: &Diffusion, idx: &ExtIndex) -> Result<MomentCombo, ExprError> {
    let space = model.space();
    let n = space.dim();
    let mut acc = PolyExpr::zero();
    for i in 0..n {
        let d = derivative_poly(space, idx, i);
        if d.is_zero() || model.drift(i).is_zero() {
            continue;
        }
        acc = acc.add(&poly_mul(model.drift(i), &d)?);
    }
    let half = Complex64::new(0.5, 0.0);
    for i in 0..n {
        for j in 0..n {
            let g = &diffusion.0[i][j];
            if g.is_zero() {
                continue;
            }
            let d2 = second_derivative_poly(space, idx, i, j);
            if d2.is_zero() {
                continue;
            }
            acc = acc.add(&poly_mul(g, &d2)?.scale(half));
        }
    }
    Ok(MomentCombo(acc))
}

/// `d E[idx] / dt` from the Itô formula.
pub fn ito_rhs(model: &SdeModel, idx: &ExtIndex) -> Result<MomentCombo, ExprError> {
    generator(model, &Diffusion::of(model)?, idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Const,
    Basis(usize),
    Higher(usize),
}

#[derive(Debug, Clone)]
struct Entry {
    coeff: Complex64,
    harmonic: Harmonic,
    slot: Slot,
}

/// Moment equations up to order `M`, not yet closed.
#[derive(Debug, Clone)]
pub struct OpenMomentSystem {
    space: StateSpace,
    order: usize,
    basis: Vec<ExtIndex>,
    higher: Vec<ExtIndex>,
    rhs: Vec<MomentCombo>,
    entries: Vec<Vec<Entry>>,
    slots: HashMap<ExtIndex, Slot>,
}

pub fn build_open_system(model: &SdeModel, order: usize) -> Result<OpenMomentSystem, crate::Error> {
    let space = model.space().clone();
    let basis = space.enumerate_upto(order)?;
    let diffusion = Diffusion::of(model)?;
    let rhs = basis
        .iter()
        .map(|idx| generator(model, &diffusion, idx))
        .collect::<Result<Vec<_>, _>>()?;

    let mut slots: HashMap<ExtIndex, Slot> = basis
        .iter()
        .enumerate()
        .map(|(p, idx)| (idx.clone(), Slot::Basis(p)))
        .collect();
    slots.insert(space.zero(), Slot::Const);
    let mut higher: Vec<ExtIndex> = rhs
        .iter()
        .flat_map(MomentCombo::moments)
        .filter(|idx| !slots.contains_key(*idx))
        .cloned()
        .collect();
    higher.sort();
    higher.dedup();
    for (r, idx) in higher.iter().enumerate() {
        slots.insert(idx.clone(), Slot::Higher(r));
    }

    let entries = rhs
        .iter()
        .map(|combo| {
            combo
                .terms()
                .iter()
                .map(|t| Entry {
                    coeff: t.coeff,
                    harmonic: t.harmonic,
                    slot: slots[&t.basis],
                })
                .collect()
        })
        .collect();

    Ok(OpenMomentSystem {
        space,
        order,
        basis,
        higher,
        rhs,
        entries,
        slots,
    })
}

impl OpenMomentSystem {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> &[ExtIndex] {
        &self.basis
    }

    /// Moments above the truncation order read by some equation, sorted.
    pub fn higher(&self) -> &[ExtIndex] {
        &self.higher
    }

    pub fn rhs(&self) -> &[MomentCombo] {
        &self.rhs
    }

    pub fn slot(&self, idx: &ExtIndex) -> Option<Slot> {
        self.slots.get(idx).copied()
    }

    pub fn basis_position(&self, idx: &ExtIndex) -> Option<usize> {
        match self.slot(idx) {
            Some(Slot::Basis(p)) => Some(p),
            _ => None,
        }
    }

    fn slot_value(slot: Slot, basis: &[Complex64], higher: &[Complex64]) -> Complex64 {
        match slot {
            Slot::Const => Complex64::new(1.0, 0.0),
            Slot::Basis(p) => basis[p],
            Slot::Higher(r) => higher[r],
        }
    }

    /// `a(t) + A(t)μ + B(t)μ̄` written into `out`.
    pub fn eval_into(&self, t: f64, basis: &[Complex64], higher: &[Complex64], out: &mut [Complex64]) {
        for (o, eq) in out.iter_mut().zip(&self.entries) {
            *o = eq
                .iter()
                .map(|e| e.coeff * e.harmonic.value(t) * Self::slot_value(e.slot, basis, higher))
                .sum();
        }
    }

    pub fn eval(&self, t: f64, basis: &[Complex64], higher: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        self.eval_into(t, basis, higher, &mut out);
        out
    }

    /// `ȧ(t) + Ȧ(t)μ + Ḃ(t)μ̄`: explicit time dependence only.
    pub fn eval_dt(&self, t: f64, basis: &[Complex64], higher: &[Complex64]) -> Vec<Complex64> {
        self.entries
            .iter()
            .map(|eq| {
                eq.iter()
                    .filter(|e| !e.harmonic.is_none())
                    .map(|e| e.coeff * e.harmonic.rate(t) * Self::slot_value(e.slot, basis, higher))
                    .sum()
            })
            .collect()
    }

    /// Dense `(a, A, B)` at time `t`.
    pub fn matrices(&self, t: f64) -> (Vec<Complex64>, Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
        let k = self.basis.len();
        let r = self.higher.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut a = vec![zero; k];
        let mut am = vec![vec![zero; k]; k];
        let mut bm = vec![vec![zero; r]; k];
        for (row, eq) in self.entries.iter().enumerate() {
            for e in eq {
                let c = e.coeff * e.harmonic.value(t);
                match e.slot {
                    Slot::Const => a[row] += c,
                    Slot::Basis(p) => am[row][p] += c,
                    Slot::Higher(q) => bm[row][q] += c,
                }
            }
        }
        (a, am, bm)
    }

    /// One `d E[..]/dt = ...` line per basis moment.
    pub fn render_equations(&self) -> String {
        let mut s = String::new();
        for (idx, combo) in self.basis.iter().zip(&self.rhs) {
            s.push_str(&format!(
                "d {}/dt = {}\n",
                self.space.moment_label(idx),
                combo.render(&self.space)
            ));
        }
        s
    }
}
