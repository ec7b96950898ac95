//! Line-oriented model language.
//!
//! ```text
//! # Van der Pol oscillator
//! states: x1, x2
//! param eps = 0.1
//! drift x1 = x2
//! drift x2 = eps*(1 - x1^2)*x2 - x1
//! noise x2 = 0.5
//! ```
//!
//! Parameters are substituted numerically while parsing; `sin`/`cos` of an
//! angle state are expanded into complex exponentials immediately.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;

use super::{expand_trig, poly_mul, ExprError, Harmonic, PolyExpr, Term, Trig};
use crate::index::{IndexError, StateKind, StateSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.kind)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    Undeclared(String),
    #[error("missing `states:` declaration")]
    MissingStates,
    #[error("duplicate declaration: {0}")]
    Duplicate(String),
    #[error("angle state `{0}` may only appear inside sin(), cos() or exp(j*..)")]
    BareAngle(String),
    #[error("unsupported time dependence: {0}")]
    TimeDependence(String),
    #[error("unsupported expression: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// `dx = f(x,t) dt + G(x,t) dW` with `G` an `n × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeModel {
    pub name: String,
    space: StateSpace,
    params: Vec<(String, f64)>,
    drift: Vec<PolyExpr>,
    noise: Vec<Vec<PolyExpr>>,
}

impl SdeModel {
    /// Assembles a model from already-built expressions; `noise[i][c]` is the
    /// coefficient of channel `c` in the equation for state `i`.
    pub fn new(
        name: impl Into<String>,
        space: StateSpace,
        params: Vec<(String, f64)>,
        drift: Vec<PolyExpr>,
        noise: Vec<Vec<PolyExpr>>,
    ) -> Self {
        assert_eq!(drift.len(), space.dim(), "one drift per state");
        assert_eq!(noise.len(), space.dim(), "one noise row per state");
        let d = noise.iter().map(Vec::len).max().unwrap_or(0);
        let noise = noise
            .into_iter()
            .map(|mut row| {
                row.resize(d, PolyExpr::zero());
                row
            })
            .collect();
        Self {
            name: name.into(),
            space,
            params,
            drift,
            noise,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|p| p.1)
    }

    pub fn drift(&self, state: usize) -> &PolyExpr {
        &self.drift[state]
    }

    pub fn noise(&self, state: usize, channel: usize) -> &PolyExpr {
        &self.noise[state][channel]
    }

    pub fn channels(&self) -> usize {
        self.noise.first().map_or(0, Vec::len)
    }

    /// Number of non-zero noise entries.
    pub fn noise_entries(&self) -> usize {
        self.noise.iter().flatten().filter(|p| !p.is_zero()).count()
    }

    /// `(G Gᵀ)_{ij}`.
    pub fn diffusion(&self, i: usize, j: usize) -> Result<PolyExpr, ExprError> {
        let mut acc = PolyExpr::zero();
        for c in 0..self.channels() {
            let (gi, gj) = (&self.noise[i][c], &self.noise[j][c]);
            if gi.is_zero() || gj.is_zero() {
                continue;
            }
            acc = acc.add(&poly_mul(gi, gj)?);
        }
        Ok(acc)
    }
}

/// Canonical text for a model; parsing it back yields an identical model.
pub fn render_model(model: &SdeModel) -> String {
    let space = &model.space;
    let label = |i: &crate::index::ExtIndex| space.label(i);
    let mut out = String::new();
    let states: Vec<String> = space
        .names()
        .iter()
        .zip(space.kinds())
        .map(|(n, k)| match k {
            StateKind::Linear => format!("{n}:linear"),
            StateKind::Angle => format!("{n}:angle"),
        })
        .collect();
    out.push_str(&format!("states: {}\n", states.join(", ")));
    for (name, value) in &model.params {
        out.push_str(&format!("param {name} = {value:?}\n"));
    }
    for (i, name) in space.names().iter().enumerate() {
        out.push_str(&format!("drift {name} = {}\n", model.drift[i].render_with(label, None)));
    }
    for c in 0..model.channels() {
        let mut any = false;
        for (i, name) in space.names().iter().enumerate() {
            let g = &model.noise[i][c];
            if !g.is_zero() {
                any = true;
                out.push_str(&format!("noise {name}[{c}] = {}\n", g.render_with(label, None)));
            }
        }
        if !any {
            out.push_str(&format!("noise {}[{c}] = 0\n", space.names()[0]));
        }
    }
    out
}

pub fn parse_model(text: &str) -> Result<SdeModel, ParseError> {
    let mut lines = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let toks = lex(content, k + 1)?;
        if !toks.is_empty() {
            lines.push((k + 1, toks));
        }
    }

    // states first, wherever they are declared
    let mut space: Option<StateSpace> = None;
    for (line, toks) in &lines {
        if is_keyword(toks, "states") {
            if space.is_some() {
                return Err(err(*line, toks[0].col, ParseErrorKind::Duplicate("states".into())));
            }
            space = Some(parse_states(*line, toks)?);
        }
    }
    let space = space.ok_or(ParseError {
        line: 1,
        col: 1,
        kind: ParseErrorKind::MissingStates,
    })?;
    let n = space.dim();

    let mut params: Vec<(String, f64)> = Vec::new();
    let mut drift: Vec<Option<PolyExpr>> = vec![None; n];
    let mut noise: Vec<Vec<Option<PolyExpr>>> = vec![Vec::new(); n];

    for (line, toks) in &lines {
        let line = *line;
        let head = match &toks[0].tok {
            Tok::Ident(s) => s.as_str(),
            _ => return Err(syntax(line, toks[0].col, "expected a statement keyword")),
        };
        match head {
            "states" => {}
            "param" => {
                let (name, col) = ident_at(line, toks, 1)?;
                expect_sym(line, toks, 2, '=')?;
                if RESERVED.contains(&name.as_str()) || space.position(&name).is_some() {
                    return Err(err(line, col, ParseErrorKind::Duplicate(format!("`{name}` is reserved or a state"))));
                }
                if params.iter().any(|(p, _)| *p == name) {
                    return Err(err(line, col, ParseErrorKind::Duplicate(format!("param `{name}`"))));
                }
                let ast = parse_expr_tokens(line, &toks[3..], toks[2].col)?;
                let ctx = Ctx { space: None, params: &params };
                let value = ctx.eval(&ast)?;
                let v = match value {
                    Value::Poly(p) => p.as_constant().filter(|c| c.im == 0.0).map(|c| c.re),
                    _ => None,
                }
                .ok_or_else(|| err(line, ast.col, ParseErrorKind::Unsupported("parameter must be a real constant".into())))?;
                params.push((name, v));
            }
            "drift" | "noise" => {
                let (name, col) = ident_at(line, toks, 1)?;
                let state = space
                    .position(&name)
                    .ok_or_else(|| err(line, col, ParseErrorKind::Undeclared(name.clone())))?;
                let mut pos = 2;
                let mut channel = 0usize;
                if head == "noise" && matches!(toks.get(2).map(|t| &t.tok), Some(Tok::Sym('['))) {
                    channel = match toks.get(3).map(|t| &t.tok) {
                        Some(Tok::Num(v)) if *v >= 0.0 && v.fract() == 0.0 => *v as usize,
                        _ => return Err(syntax(line, toks.get(3).map_or(toks[2].col, |t| t.col), "expected channel number")),
                    };
                    expect_sym(line, toks, 4, ']')?;
                    pos = 5;
                }
                expect_sym(line, toks, pos, '=')?;
                let ast = parse_expr_tokens(line, &toks[pos + 1..], toks[pos].col)?;
                let ctx = Ctx { space: Some(&space), params: &params };
                let expr = ctx.eval_state_expr(&ast)?;
                if head == "drift" {
                    if drift[state].is_some() {
                        return Err(err(line, col, ParseErrorKind::Duplicate(format!("drift for `{name}`"))));
                    }
                    drift[state] = Some(expr);
                } else {
                    let row = &mut noise[state];
                    if row.len() <= channel {
                        row.resize(channel + 1, None);
                    }
                    if row[channel].is_some() {
                        return Err(err(line, col, ParseErrorKind::Duplicate(format!("noise for `{name}[{channel}]`"))));
                    }
                    row[channel] = Some(expr);
                }
            }
            other => return Err(syntax(line, toks[0].col, &format!("unknown statement `{other}`"))),
        }
    }

    let drift = drift.into_iter().map(Option::unwrap_or_default).collect();
    let noise = noise
        .into_iter()
        .map(|row| row.into_iter().map(Option::unwrap_or_default).collect())
        .collect();
    Ok(SdeModel::new("model", space, params, drift, noise))
}

const RESERVED: &[&str] = &["t", "pi", "j", "sin", "cos", "exp", "states", "param", "drift", "noise"];

fn err(line: usize, col: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, col, kind }
}

fn syntax(line: usize, col: usize, msg: &str) -> ParseError {
    err(line, col, ParseErrorKind::Syntax(msg.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn lex(src: &str, line: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    i = k;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| syntax(line, col, &format!("malformed number `{text}`")))?;
            let imag = i < chars.len()
                && chars[i] == 'j'
                && !chars.get(i + 1).is_some_and(|c| c.is_alphanumeric() || *c == '_');
            if imag {
                i += 1;
                out.push(Token { tok: Tok::Imag(v), col });
            } else {
                out.push(Token { tok: Tok::Num(v), col });
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
        } else if "+-*/^()[]=,:".contains(c) {
            out.push(Token { tok: Tok::Sym(c), col });
            i += 1;
        } else {
            return Err(syntax(line, col, &format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

fn is_keyword(toks: &[Token], kw: &str) -> bool {
    matches!(&toks[0].tok, Tok::Ident(s) if s == kw)
}

fn ident_at(line: usize, toks: &[Token], pos: usize) -> Result<(String, usize), ParseError> {
    match toks.get(pos) {
        Some(Token { tok: Tok::Ident(s), col }) => Ok((s.clone(), *col)),
        Some(t) => Err(syntax(line, t.col, "expected identifier")),
        None => Err(syntax(line, toks.last().map_or(1, |t| t.col + 1), "expected identifier")),
    }
}

fn expect_sym(line: usize, toks: &[Token], pos: usize, sym: char) -> Result<(), ParseError> {
    match toks.get(pos) {
        Some(Token { tok: Tok::Sym(c), .. }) if *c == sym => Ok(()),
        Some(t) => Err(syntax(line, t.col, &format!("expected `{sym}`"))),
        None => Err(syntax(line, toks.last().map_or(1, |t| t.col + 1), &format!("expected `{sym}`"))),
    }
}

fn parse_states(line: usize, toks: &[Token]) -> Result<StateSpace, ParseError> {
    expect_sym(line, toks, 1, ':')?;
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut pos = 2;
    loop {
        let (name, col) = ident_at(line, toks, pos)?;
        if RESERVED.contains(&name.as_str()) {
            return Err(err(line, col, ParseErrorKind::Duplicate(format!("`{name}` is reserved"))));
        }
        if names.contains(&name) {
            return Err(err(line, col, ParseErrorKind::Duplicate(format!("state `{name}`"))));
        }
        pos += 1;
        let mut kind = StateKind::Linear;
        if matches!(toks.get(pos).map(|t| &t.tok), Some(Tok::Sym(':'))) {
            let (k, kcol) = ident_at(line, toks, pos + 1)?;
            kind = match k.as_str() {
                "linear" => StateKind::Linear,
                "angle" => StateKind::Angle,
                _ => return Err(syntax(line, kcol, "state kind must be `linear` or `angle`")),
            };
            pos += 2;
        }
        names.push(name);
        kinds.push(kind);
        match toks.get(pos) {
            None => break,
            Some(Token { tok: Tok::Sym(','), .. }) => pos += 1,
            Some(t) => return Err(syntax(line, t.col, "expected `,`")),
        }
    }
    StateSpace::new(names, kinds).map_err(|e| err(line, toks[0].col, e.into()))
}

#[derive(Debug, Clone)]
enum Node {
    Num(Complex64),
    Ident(String),
    Call(String, Box<Ast>),
    Neg(Box<Ast>),
    Bin(char, Box<Ast>, Box<Ast>),
}

#[derive(Debug, Clone)]
struct Ast {
    node: Node,
    line: usize,
    col: usize,
}

struct ExprParser<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    end_col: usize,
}

fn parse_expr_tokens(line: usize, toks: &[Token], anchor_col: usize) -> Result<Ast, ParseError> {
    if toks.is_empty() {
        return Err(syntax(line, anchor_col + 1, "expected an expression"));
    }
    let mut p = ExprParser {
        toks,
        pos: 0,
        line,
        end_col: toks.last().map_or(anchor_col, |t| t.col + 1),
    };
    let ast = p.sum()?;
    if let Some(t) = p.toks.get(p.pos) {
        return Err(syntax(line, t.col, "unexpected token"));
    }
    Ok(ast)
}

impl ExprParser<'_> {
    fn peek_sym(&self) -> Option<char> {
        match self.toks.get(self.pos) {
            Some(Token { tok: Tok::Sym(c), .. }) => Some(*c),
            _ => None,
        }
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn sum(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek_sym() {
            let col = self.col();
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Ast { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), line: self.line, col };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_sym() {
            let col = self.col();
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Ast { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), line: self.line, col };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        match self.peek_sym() {
            Some('-') => {
                let col = self.col();
                self.pos += 1;
                let inner = self.unary()?;
                Ok(Ast { node: Node::Neg(Box::new(inner)), line: self.line, col })
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            let col = self.col();
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Ast { node: Node::Bin('^', Box::new(base), Box::new(exp)), line: self.line, col });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast, ParseError> {
        let col = self.col();
        let tok = self
            .toks
            .get(self.pos)
            .ok_or_else(|| syntax(self.line, col, "expected an operand"))?;
        self.pos += 1;
        let node = match &tok.tok {
            Tok::Num(v) => Node::Num(Complex64::new(*v, 0.0)),
            Tok::Imag(v) => Node::Num(Complex64::new(0.0, *v)),
            Tok::Ident(name) => {
                if self.peek_sym() == Some('(') {
                    self.pos += 1;
                    let arg = self.sum()?;
                    if self.peek_sym() != Some(')') {
                        return Err(syntax(self.line, self.col(), "expected `)`"));
                    }
                    self.pos += 1;
                    Node::Call(name.clone(), Box::new(arg))
                } else {
                    Node::Ident(name.clone())
                }
            }
            Tok::Sym('(') => {
                let inner = self.sum()?;
                if self.peek_sym() != Some(')') {
                    return Err(syntax(self.line, self.col(), "expected `)`"));
                }
                self.pos += 1;
                return Ok(inner);
            }
            Tok::Sym(c) => return Err(syntax(self.line, col, &format!("unexpected `{c}`"))),
        };
        Ok(Ast { node, line: self.line, col })
    }
}

#[derive(Debug, Clone)]
enum Value {
    Poly(PolyExpr),
    /// `slope*t + offset`, legal only as a sin/cos argument.
    Time { slope: f64, offset: f64 },
    /// `scale * θ` for an angle state θ, legal only inside sin/cos/exp.
    Angle { state: usize, scale: Complex64 },
}

struct Ctx<'a> {
    space: Option<&'a StateSpace>,
    params: &'a [(String, f64)],
}

// Constants need a space to live in; parameter expressions use a throwaway one.
fn const_space() -> StateSpace {
    StateSpace::linear(1).expect("one linear state")
}

impl Ctx<'_> {
    fn konst(&self, c: Complex64) -> Value {
        match self.space {
            Some(s) => Value::Poly(PolyExpr::constant(s, c)),
            None => Value::Poly(PolyExpr::constant(&const_space(), c)),
        }
    }

    fn zero_basis(&self) -> crate::index::ExtIndex {
        match self.space {
            Some(s) => s.zero(),
            None => const_space().zero(),
        }
    }

    fn eval_state_expr(&self, ast: &Ast) -> Result<PolyExpr, ParseError> {
        match self.eval(ast)? {
            Value::Poly(p) => Ok(p),
            Value::Time { .. } => Err(err(ast.line, ast.col, ParseErrorKind::TimeDependence(
                "`t` may only appear as sin(w*t) or cos(w*t)".into(),
            ))),
            Value::Angle { state, .. } => Err(err(
                ast.line,
                ast.col,
                ParseErrorKind::BareAngle(self.space.unwrap().names()[state].clone()),
            )),
        }
    }

    fn bare_angle(&self, ast: &Ast, state: usize) -> ParseError {
        let name = self.space.map_or_else(String::new, |s| s.names()[state].clone());
        err(ast.line, ast.col, ParseErrorKind::BareAngle(name))
    }

    fn eval(&self, ast: &Ast) -> Result<Value, ParseError> {
        let at = |kind: ParseErrorKind| err(ast.line, ast.col, kind);
        match &ast.node {
            Node::Num(c) => Ok(self.konst(*c)),
            Node::Ident(name) => match name.as_str() {
                "pi" => Ok(self.konst(Complex64::new(PI, 0.0))),
                "j" => Ok(self.konst(Complex64::new(0.0, 1.0))),
                "t" => Ok(Value::Time { slope: 1.0, offset: 0.0 }),
                _ => {
                    if let Some((_, v)) = self.params.iter().find(|(p, _)| p == name) {
                        return Ok(self.konst(Complex64::new(*v, 0.0)));
                    }
                    let space = self.space.ok_or_else(|| at(ParseErrorKind::Undeclared(name.clone())))?;
                    let state = space
                        .position(name)
                        .ok_or_else(|| at(ParseErrorKind::Undeclared(name.clone())))?;
                    match space.kind(state) {
                        StateKind::Linear => Ok(Value::Poly(PolyExpr::monomial(
                            Complex64::new(1.0, 0.0),
                            space.unit(state),
                        ))),
                        StateKind::Angle => Ok(Value::Angle { state, scale: Complex64::new(1.0, 0.0) }),
                    }
                }
            },
            Node::Neg(inner) => Ok(match self.eval(inner)? {
                Value::Poly(p) => Value::Poly(p.neg()),
                Value::Time { slope, offset } => Value::Time { slope: -slope, offset: -offset },
                Value::Angle { state, scale } => Value::Angle { state, scale: -scale },
            }),
            Node::Call(fun, arg) => self.call(ast, fun, arg),
            Node::Bin(op, lhs, rhs) => {
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                self.binary(ast, *op, l, r, lhs, rhs)
            }
        }
    }

    fn call(&self, ast: &Ast, fun: &str, arg: &Ast) -> Result<Value, ParseError> {
        let at = |kind: ParseErrorKind| err(ast.line, ast.col, kind);
        let value = self.eval(arg)?;
        match fun {
            "sin" | "cos" => {
                let trig = if fun == "sin" { Trig::Sin } else { Trig::Cos };
                match value {
                    Value::Angle { state, scale } => {
                        if scale != Complex64::new(1.0, 0.0) {
                            return Err(at(ParseErrorKind::Unsupported(format!(
                                "{fun}() of a scaled angle; only {fun}(state) is supported"
                            ))));
                        }
                        let space = self.space.expect("angle values need a space");
                        Ok(Value::Poly(
                            expand_trig(space, trig, state, Complex64::new(1.0, 0.0)).map_err(|e| at(e.into()))?,
                        ))
                    }
                    Value::Time { slope, offset } => {
                        let phase = if trig == Trig::Sin { offset - FRAC_PI_2 } else { offset };
                        if self.space.is_none() {
                            return Err(at(ParseErrorKind::TimeDependence("parameters cannot depend on `t`".into())));
                        }
                        Ok(Value::Poly(PolyExpr::from_terms([Term::new(
                            Complex64::new(1.0, 0.0),
                            Harmonic { freq: slope, phase },
                            self.zero_basis(),
                        )])))
                    }
                    Value::Poly(p) => {
                        if let Some(c) = p.as_constant() {
                            return Ok(self.konst(if trig == Trig::Sin { c.sin() } else { c.cos() }));
                        }
                        let space = self.space.expect("non-constant values need a space");
                        let state = p.terms().iter().find_map(|t| {
                            t.basis.exps().iter().position(|&e| e != 0)
                        });
                        match state {
                            Some(s) => Err(at(ParseErrorKind::Expr(ExprError::TrigOfLinear(space.names()[s].clone())))),
                            None => Err(at(ParseErrorKind::TimeDependence(format!("{fun}() of a time-harmonic expression")))),
                        }
                    }
                }
            }
            "exp" => match value {
                Value::Angle { state, scale } => {
                    if scale.re != 0.0 || scale.im.fract() != 0.0 || scale.im == 0.0 {
                        return Err(at(ParseErrorKind::Unsupported("exp() only accepts exp(q*j*angle) with integer q".into())));
                    }
                    let space = self.space.expect("angle values need a space");
                    let idx = space.zero().with(state, scale.im as i32);
                    Ok(Value::Poly(PolyExpr::monomial(Complex64::new(1.0, 0.0), idx)))
                }
                Value::Poly(p) if p.as_constant().is_some() => Ok(self.konst(p.as_constant().unwrap().exp())),
                _ => Err(at(ParseErrorKind::Unsupported("exp() only accepts exp(q*j*angle) with integer q".into()))),
            },
            other => Err(at(ParseErrorKind::Unsupported(format!("unknown function `{other}`")))),
        }
    }

    fn binary(&self, ast: &Ast, op: char, l: Value, r: Value, la: &Ast, ra: &Ast) -> Result<Value, ParseError> {
        let at = |kind: ParseErrorKind| err(ast.line, ast.col, kind);
        let real_const = |v: &Value| match v {
            Value::Poly(p) => p.as_constant().filter(|c| c.im == 0.0).map(|c| c.re),
            _ => None,
        };
        let time_err = || at(ParseErrorKind::TimeDependence("`t` may only appear as sin(w*t) or cos(w*t)".into()));
        match op {
            '+' | '-' => {
                let sign = if op == '+' { 1.0 } else { -1.0 };
                match (&l, &r) {
                    (Value::Poly(a), Value::Poly(b)) => Ok(Value::Poly(if op == '+' { a.add(b) } else { a.add(&b.neg()) })),
                    (Value::Time { slope: s1, offset: o1 }, Value::Time { slope: s2, offset: o2 }) => {
                        Ok(Value::Time { slope: s1 + sign * s2, offset: o1 + sign * o2 })
                    }
                    (Value::Time { slope, offset }, other) => match real_const(other) {
                        Some(c) => Ok(Value::Time { slope: *slope, offset: offset + sign * c }),
                        None => Err(time_err()),
                    },
                    (other, Value::Time { slope, offset }) => match real_const(other) {
                        Some(c) => Ok(Value::Time { slope: sign * slope, offset: c + sign * offset }),
                        None => Err(time_err()),
                    },
                    (Value::Angle { state, .. }, _) => Err(self.bare_angle(la, *state)),
                    (_, Value::Angle { state, .. }) => Err(self.bare_angle(ra, *state)),
                }
            }
            '*' => match (l, r) {
                (Value::Poly(a), Value::Poly(b)) => Ok(Value::Poly(poly_mul(&a, &b).map_err(|e| at(e.into()))?)),
                (Value::Time { slope, offset }, other) | (other, Value::Time { slope, offset }) => match real_const(&other) {
                    Some(c) => Ok(Value::Time { slope: slope * c, offset: offset * c }),
                    None => Err(time_err()),
                },
                (Value::Angle { state, scale }, Value::Poly(p)) | (Value::Poly(p), Value::Angle { state, scale }) => {
                    match p.as_constant() {
                        Some(c) => Ok(Value::Angle { state, scale: scale * c }),
                        None => Err(self.bare_angle(ast, state)),
                    }
                }
                (Value::Angle { state, .. }, Value::Angle { .. }) => Err(self.bare_angle(ast, state)),
            },
            '/' => {
                let d = match &r {
                    Value::Poly(p) => p.as_constant(),
                    _ => None,
                }
                .ok_or_else(|| at(ParseErrorKind::Unsupported("division by a non-constant expression".into())))?;
                if d == Complex64::new(0.0, 0.0) {
                    return Err(at(ParseErrorKind::Unsupported("division by zero".into())));
                }
                let inv = Complex64::new(1.0, 0.0) / d;
                match l {
                    Value::Poly(p) => Ok(Value::Poly(p.scale(inv))),
                    Value::Time { slope, offset } if inv.im == 0.0 => Ok(Value::Time { slope: slope * inv.re, offset: offset * inv.re }),
                    Value::Time { .. } => Err(time_err()),
                    Value::Angle { state, scale } => Ok(Value::Angle { state, scale: scale * inv }),
                }
            }
            '^' => {
                let e = match &r {
                    Value::Poly(p) => p.as_constant(),
                    _ => None,
                }
                .ok_or_else(|| err(ra.line, ra.col, ParseErrorKind::Unsupported("exponent must be constant".into())))?;
                match l {
                    Value::Poly(p) => {
                        if let Some(b) = p.as_constant() {
                            let v = if e.im == 0.0 && e.re.fract() == 0.0 && e.re.abs() < 1024.0 {
                                b.powi(e.re as i32)
                            } else if b.im == 0.0 && b.re >= 0.0 && e.im == 0.0 {
                                Complex64::new(b.re.powf(e.re), 0.0)
                            } else {
                                b.powc(e)
                            };
                            return Ok(self.konst(v));
                        }
                        if e.im != 0.0 || e.re < 0.0 || e.re.fract() != 0.0 {
                            return Err(err(ra.line, ra.col, ParseErrorKind::Unsupported(
                                "powers of state expressions must be non-negative integers".into(),
                            )));
                        }
                        let mut acc = self.konst(Complex64::new(1.0, 0.0));
                        for _ in 0..e.re as u32 {
                            if let Value::Poly(a) = acc {
                                acc = Value::Poly(poly_mul(&a, &p).map_err(|x| at(x.into()))?);
                            }
                        }
                        Ok(acc)
                    }
                    Value::Time { .. } => Err(time_err()),
                    Value::Angle { state, .. } => Err(self.bare_angle(la, state)),
                }
            }
            _ => unreachable!("parser only produces + - * / ^"),
        }
    }
}
