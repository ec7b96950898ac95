//! Moment labels over mixed polynomial / complex-exponential state spaces.
//!
//! A linear state `x` contributes a monomial factor `x^m` (`m >= 0`); an angle
//! state `θ` contributes `exp(j*q*θ)` with a signed winding `q`. An
//! [`ExtIndex`] stores one integer per state in declaration order, so a label
//! never carries both `exp(jθ)` and `exp(-jθ)` factors.
//!
//! Labels are ordered graded-lexicographically: by total order first, then
//! lexicographically (largest first) on the [`PseudoExponents`] embedding,
//! where each angle state is split into a positive and a negative slot.

use std::cmp::Ordering;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("truncation order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("state space must declare at least one state")]
    EmptySpace,
    #[error("state name must be non-empty")]
    EmptyName,
    #[error("duplicate state name `{0}`")]
    DuplicateName(String),
    #[error("names and kinds have different lengths ({names} vs {kinds})")]
    KindCount { names: usize, kinds: usize },
    #[error("index has {got} components, state space has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("negative exponent {exp} on linear state `{state}`")]
    NegativeExponent { state: String, exp: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateKind {
    /// Appears through monomials `x^m`.
    Linear,
    /// Appears only through `exp(j*q*x)`.
    Angle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    names: Vec<String>,
    kinds: Vec<StateKind>,
}

impl StateSpace {
    pub fn new(names: Vec<String>, kinds: Vec<StateKind>) -> Result<Self, IndexError> {
        if names.len() != kinds.len() {
            return Err(IndexError::KindCount {
                names: names.len(),
                kinds: kinds.len(),
            });
        }
        if names.is_empty() {
            return Err(IndexError::EmptySpace);
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(IndexError::EmptyName);
            }
            if names[..i].contains(name) {
                return Err(IndexError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { names, kinds })
    }

    /// A space of `n` linear states named `x1..xn`.
    pub fn linear(n: usize) -> Result<Self, IndexError> {
        let names = (1..=n).map(|i| format!("x{i}")).collect();
        Self::new(names, vec![StateKind::Linear; n])
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[StateKind] {
        &self.kinds
    }

    pub fn kind(&self, state: usize) -> StateKind {
        self.kinds[state]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn has_angles(&self) -> bool {
        self.kinds.contains(&StateKind::Angle)
    }

    /// Validates raw per-state exponents against the state kinds.
    pub fn index(&self, exps: Vec<i32>) -> Result<ExtIndex, IndexError> {
        if exps.len() != self.dim() {
            return Err(IndexError::Dimension {
                expected: self.dim(),
                got: exps.len(),
            });
        }
        for (i, &e) in exps.iter().enumerate() {
            if e < 0 && self.kinds[i] == StateKind::Linear {
                return Err(IndexError::NegativeExponent {
                    state: self.names[i].clone(),
                    exp: e,
                });
            }
        }
        Ok(ExtIndex(exps))
    }

    pub fn zero(&self) -> ExtIndex {
        ExtIndex(vec![0; self.dim()])
    }

    /// Unit label for a single state: `x_i` or `exp(j*x_i)`.
    pub fn unit(&self, state: usize) -> ExtIndex {
        let mut e = vec![0; self.dim()];
        e[state] = 1;
        ExtIndex(e)
    }

    pub fn pseudo(&self, idx: &ExtIndex) -> PseudoExponents {
        let mut out = Vec::with_capacity(self.dim() + self.kinds.len());
        for (&e, kind) in idx.0.iter().zip(&self.kinds) {
            match kind {
                StateKind::Linear => out.push(e as u32),
                StateKind::Angle => {
                    out.push(e.max(0) as u32);
                    out.push((-e).max(0) as u32);
                }
            }
        }
        PseudoExponents(out)
    }

    /// Complex conjugate label: every winding negated.
    pub fn conjugate(&self, idx: &ExtIndex) -> ExtIndex {
        ExtIndex(
            idx.0
                .iter()
                .zip(&self.kinds)
                .map(|(&e, k)| if *k == StateKind::Angle { -e } else { e })
                .collect(),
        )
    }

    /// Every label of order `1..=max_order`, in graded-lex order.
    pub fn enumerate_upto(&self, max_order: usize) -> Result<Vec<ExtIndex>, IndexError> {
        if max_order < 1 {
            return Err(IndexError::InvalidOrder(max_order));
        }
        let mut out = Vec::new();
        let mut cur = vec![0i32; self.dim()];
        self.fill(0, max_order as i32, &mut cur, &mut out);
        out.retain(|i| !i.is_zero());
        out.sort();
        Ok(out)
    }

    fn fill(&self, pos: usize, budget: i32, cur: &mut Vec<i32>, out: &mut Vec<ExtIndex>) {
        if pos == self.dim() {
            out.push(ExtIndex(cur.clone()));
            return;
        }
        for e in 0..=budget {
            cur[pos] = e;
            self.fill(pos + 1, budget - e, cur, out);
            if e > 0 && self.kinds[pos] == StateKind::Angle {
                cur[pos] = -e;
                self.fill(pos + 1, budget - e, cur, out);
            }
        }
        cur[pos] = 0;
    }

    /// Body of a moment label, e.g. `x1^2*x2` or `exp(-2j*x1)*x2`; `1` for
    /// the constant element.
    pub fn label(&self, idx: &ExtIndex) -> String {
        let mut s = String::new();
        for (i, &e) in idx.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !s.is_empty() {
                s.push('*');
            }
            let name = &self.names[i];
            match self.kinds[i] {
                StateKind::Linear if e == 1 => s.push_str(name),
                StateKind::Linear => {
                    let _ = write!(s, "{name}^{e}");
                }
                StateKind::Angle => {
                    let _ = match e {
                        1 => write!(s, "exp(j*{name})"),
                        -1 => write!(s, "exp(-j*{name})"),
                        _ => write!(s, "exp({e}j*{name})"),
                    };
                }
            }
        }
        if s.is_empty() {
            s.push('1');
        }
        s
    }

    /// `E[...]` label used in reports and CSV headers.
    pub fn moment_label(&self, idx: &ExtIndex) -> String {
        if idx.is_zero() {
            "1".to_string()
        } else {
            format!("E[{}]", self.label(idx))
        }
    }
}

/// Mixed moment label: one integer per state (exponent or winding).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExtIndex(Vec<i32>);

impl ExtIndex {
    pub fn exps(&self) -> &[i32] {
        &self.0
    }

    pub fn get(&self, state: usize) -> i32 {
        self.0[state]
    }

    /// Σ exponents + Σ |windings|.
    pub fn order(&self) -> usize {
        self.0.iter().map(|e| e.unsigned_abs() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Product of the two basis elements (exponents and windings add).
    pub fn combine(&self, other: &ExtIndex) -> ExtIndex {
        debug_assert_eq!(self.0.len(), other.0.len());
        ExtIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub(crate) fn with(&self, state: usize, value: i32) -> ExtIndex {
        let mut e = self.0.clone();
        e[state] = value;
        ExtIndex(e)
    }

    /// Keeps only the components selected by `keep`.
    pub(crate) fn project(&self, keep: impl Fn(usize) -> bool) -> ExtIndex {
        ExtIndex(
            self.0
                .iter()
                .enumerate()
                .map(|(i, &e)| if keep(i) { e } else { 0 })
                .collect(),
        )
    }
}

// Rank of one component under descending lex on the pseudo-exponent pair:
// positive windings (largest first), then negative (largest magnitude
// first), then zero. Linear exponents are never negative, so the same rank
// gives plain descending order for them.
fn component_rank(e: i32) -> (u8, i32) {
    match e.cmp(&0) {
        Ordering::Greater => (0, -e),
        Ordering::Less => (1, e),
        Ordering::Equal => (2, 0),
    }
}

impl Ord for ExtIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order().cmp(&other.order()).then_with(|| {
            self.0
                .iter()
                .map(|&e| component_rank(e))
                .cmp(other.0.iter().map(|&e| component_rank(e)))
        })
    }
}

impl PartialOrd for ExtIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Non-negative embedding of an [`ExtIndex`]: each angle state becomes a
/// `(positive, negative)` slot pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PseudoExponents(pub Vec<u32>);

impl PseudoExponents {
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// `C(h, l)`, zero when `l > h`.
pub fn binom(h: u32, l: u32) -> u64 {
    if l > h {
        return 0;
    }
    let l = l.min(h - l) as u64;
    let h = h as u64;
    (0..l).fold(1u64, |acc, i| acc * (h - i) / (i + 1))
}

/// Componentwise product of binomial coefficients `Π C(hat_i, breve_i)`.
pub fn binom_product(hat: &PseudoExponents, breve: &PseudoExponents) -> u64 {
    assert_eq!(hat.0.len(), breve.0.len(), "pseudo-exponent length mismatch");
    hat.0
        .iter()
        .zip(&breve.0)
        .map(|(&h, &l)| binom(h, l))
        .product()
}
