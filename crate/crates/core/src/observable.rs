//! Observables φ : [−1, 1] → ℝ given by short symbolic expressions per branch.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number | base ['^' number]
//! base   := 'x' | '|x|' | '(1+x)' | '(1-x)'
//! ```
//!
//! `(1+x)` and `(1-x)` read the stored endpoint distance of a [`Point`], so
//! values stay accurate arbitrarily close to ±1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::MapModel;
use crate::point::{BranchId, Point};

/// Endpoint values smaller than this count as zero.
pub const ENDPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    X,
    AbsX,
    OnePlusX,
    OneMinusX,
}

impl Base {
    fn value(self, p: Point) -> f64 {
        match self {
            Base::X => p.x(),
            Base::AbsX => p.x().abs(),
            Base::OnePlusX => p.lower_gap(),
            Base::OneMinusX => p.upper_gap(),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Base::X => "x",
            Base::AbsX => "|x|",
            Base::OnePlusX => "(1+x)",
            Base::OneMinusX => "(1-x)",
        }
    }
}

/// coef · Π baseᵢ^powerᵢ
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub factors: Vec<(Base, f64)>,
}

impl Term {
    fn value(&self, p: Point) -> f64 {
        self.factors.iter().fold(self.coef, |acc, &(base, power)| {
            let v = base.value(p);
            let f = if power.fract() == 0.0 && power.abs() < 64.0 { v.powi(power as i32) } else { v.powf(power) };
            acc * f
        })
    }
}

/// Sum of terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr { terms: vec![Term { coef: c, factors: Vec::new() }] }
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.terms.iter().map(|t| t.value(p)).sum()
    }

    /// Smallest positive power, capped at 1; 1 when there is none.
    pub fn natural_holder(&self) -> f64 {
        self.terms.iter().flat_map(|t| t.factors.iter().map(|&(_, p)| p)).filter(|&p| p > 0.0).fold(1.0, f64::min)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let c = if i > 0 {
                write!(f, " {} ", if t.coef < 0.0 { '-' } else { '+' })?;
                t.coef.abs()
            } else {
                t.coef
            };
            write!(f, "{c}")?;
            for (base, power) in &t.factors {
                write!(f, "*{}", base.label())?;
                if *power != 1.0 {
                    write!(f, "^{power}")?;
                }
            }
        }
        Ok(())
    }
}

impl From<Expr> for String {
    fn from(e: Expr) -> String {
        e.to_string()
    }
}

impl TryFrom<String> for Expr {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut parser = Parser { chars: &chars, pos: 0 };
        let e = parser.expr()?;
        if parser.pos != chars.len() {
            return Err(parser.fail("unexpected trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
}

impl Parser<'_> {
    fn fail(&self, msg: &str) -> Error {
        let text: String = self.chars.iter().collect();
        Error::Observable(format!("{msg} at position {} in '{text}'", self.pos))
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, lit: &str) -> bool {
        let n = lit.chars().count();
        if self.pos + n <= self.chars.len() && self.chars[self.pos..self.pos + n].iter().copied().eq(lit.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = Vec::new();
        let mut sign = if self.eat("-") {
            -1.0
        } else {
            self.eat("+");
            1.0
        };
        loop {
            let mut t = self.term()?;
            t.coef *= sign;
            terms.push(t);
            if self.eat("+") {
                sign = 1.0;
            } else if self.eat("-") {
                sign = -1.0;
            } else {
                break;
            }
        }
        Ok(Expr { terms })
    }

    fn term(&mut self) -> Result<Term> {
        let mut t = Term { coef: 1.0, factors: Vec::new() };
        loop {
            if let Some(base) = self.base() {
                let power = if self.eat("^") { self.number()? } else { 1.0 };
                t.factors.push((base, power));
            } else {
                t.coef *= self.number()?;
            }
            if !self.eat("*") {
                return Ok(t);
            }
        }
    }

    fn base(&mut self) -> Option<Base> {
        if self.eat("|x|") {
            Some(Base::AbsX)
        } else if self.eat("(1+x)") {
            Some(Base::OnePlusX)
        } else if self.eat("(1-x)") {
            Some(Base::OneMinusX)
        } else if self.eat("x") {
            Some(Base::X)
        } else {
            None
        }
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.pos += 1;
        }
        while let Some(c) = self.peek() {
            let exp_sign = matches!(c, '+' | '-') && matches!(self.chars.get(self.pos - 1), Some('e') | Some('E'));
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.fail("expected a number or one of x, |x|, (1+x), (1-x)")
        })
    }
}

/// What an observable computes before centring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    /// Separate expressions on [−1, 0] and (0, 1].
    Piecewise { left: Expr, right: Expr },
    /// log g′.
    LogDerivative,
    /// χ∘g − χ for piecewise χ.
    Coboundary { left: Expr, right: Expr },
    /// Indicator of (0, 1].
    IndicatorPlus,
}

/// Subtracted multiple of a fixed profile, used to enforce ∫φ dμ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Constant,
    /// 1 − x² = (1+x)(1−x), which vanishes at both fixed points.
    Bump,
}

impl Profile {
    pub fn value(self, p: Point) -> f64 {
        match self {
            Profile::Constant => 1.0,
            Profile::Bump => p.lower_gap() * p.upper_gap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    /// φ(−1) and φ(1) after centring.
    pub value_at_minus1: f64,
    pub value_at_plus1: f64,
    /// Declared Hölder exponents on [−1, 0] and (0, 1].
    pub holder_nu1: f64,
    pub holder_nu2: f64,
    /// φ − amount·profile.
    pub centering: Option<(f64, Profile)>,
}

impl Observable {
    /// Piecewise observable with endpoint values and Hölder exponents read off the expressions.
    pub fn piecewise(left: Expr, right: Expr) -> Self {
        let (nu1, nu2) = (left.natural_holder(), right.natural_holder());
        let v_minus = left.eval(Point::from_lower_gap(0.0));
        let v_plus = right.eval(Point::from_upper_gap(0.0));
        Observable {
            kind: ObservableKind::Piecewise { left, right },
            value_at_minus1: v_minus,
            value_at_plus1: v_plus,
            holder_nu1: nu1,
            holder_nu2: nu2,
            centering: None,
        }
    }

    /// Same expression on both branches.
    pub fn uniform(expr: Expr) -> Self {
        Self::piecewise(expr.clone(), expr)
    }

    pub fn constant(c: f64) -> Self {
        Self::uniform(Expr::constant(c))
    }

    /// log g′; not Hölder at the critical point.
    pub fn log_derivative(map: &MapModel) -> Self {
        Observable {
            kind: ObservableKind::LogDerivative,
            value_at_minus1: map.slope(Point::from_lower_gap(0.0)).ln(),
            value_at_plus1: map.slope(Point::from_upper_gap(0.0)).ln(),
            holder_nu1: 0.0,
            holder_nu2: 0.0,
            centering: None,
        }
    }

    pub fn coboundary(left: Expr, right: Expr) -> Self {
        let (nu1, nu2) = (left.natural_holder(), right.natural_holder());
        Observable {
            kind: ObservableKind::Coboundary { left, right },
            value_at_minus1: 0.0,
            value_at_plus1: 0.0,
            holder_nu1: nu1,
            holder_nu2: nu2,
            centering: None,
        }
    }

    pub fn indicator_plus() -> Self {
        Observable {
            kind: ObservableKind::IndicatorPlus,
            value_at_minus1: 0.0,
            value_at_plus1: 1.0,
            holder_nu1: 1.0,
            holder_nu2: 1.0,
            centering: None,
        }
    }

    pub fn with_holder(mut self, nu1: f64, nu2: f64) -> Self {
        self.holder_nu1 = nu1;
        self.holder_nu2 = nu2;
        self
    }

    /// Uncentred value.
    pub fn raw(&self, map: &MapModel, p: Point) -> f64 {
        match &self.kind {
            ObservableKind::Piecewise { left, right } => match p.branch() {
                BranchId::Left => left.eval(p),
                BranchId::Right => right.eval(p),
            },
            ObservableKind::LogDerivative => map.slope(p).ln(),
            ObservableKind::Coboundary { left, right } => {
                let chi = |q: Point| match q.branch() {
                    BranchId::Left => left.eval(q),
                    BranchId::Right => right.eval(q),
                };
                chi(map.apply(p)) - chi(p)
            }
            ObservableKind::IndicatorPlus => {
                if p.x() > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn eval(&self, map: &MapModel, p: Point) -> f64 {
        let v = self.raw(map, p);
        match self.centering {
            Some((c, profile)) => v - c * profile.value(p),
            None => v,
        }
    }

    /// Copy with `mean` removed. Observables vanishing at both fixed points
    /// are centred with the bump profile so that they keep vanishing there.
    pub fn centered(&self, mean: f64, bump_mean: f64) -> Self {
        let mut out = self.clone();
        let zero_ends = self.value_at_minus1.abs() <= ENDPOINT_TOL && self.value_at_plus1.abs() <= ENDPOINT_TOL;
        if zero_ends && bump_mean > 0.0 {
            out.centering = Some((mean / bump_mean, Profile::Bump));
        } else {
            out.centering = Some((mean, Profile::Constant));
            out.value_at_minus1 -= mean;
            out.value_at_plus1 -= mean;
        }
        out
    }

    /// Checks finiteness on a grid and the declared endpoint values against
    /// the evaluator along points approaching ±1.
    pub fn validate(&self, map: &MapModel) -> Result<()> {
        for i in 0..2000 {
            let x = -1.0 + (i as f64 + 0.5) / 1000.0;
            let v = self.eval(map, Point::new(x));
            if !v.is_finite() {
                return Err(Error::Observable(format!("value {v} at x = {x}")));
            }
        }
        let near_minus = self.eval(map, Point::from_lower_gap(1e-300));
        let near_plus = self.eval(map, Point::from_upper_gap(1e-300));
        let tol = |v: f64| 1e-6 * (1.0 + v.abs());
        if (near_minus - self.value_at_minus1).abs() > tol(self.value_at_minus1) {
            return Err(Error::Observable(format!(
                "declared φ(−1) = {} but the evaluator tends to {near_minus}",
                self.value_at_minus1
            )));
        }
        if (near_plus - self.value_at_plus1).abs() > tol(self.value_at_plus1) {
            return Err(Error::Observable(format!(
                "declared φ(1) = {} but the evaluator tends to {near_plus}",
                self.value_at_plus1
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::MapParams;

    #[test]
    fn parses_and_evaluates() {
        let e: Expr = "2*(1+x) - (1+x)^2 + 0.5*|x|^0.5".parse().unwrap();
        let p = Point::new(-0.36);
        let want = 2.0 * 0.64 - 0.64 * 0.64 + 0.5 * 0.6;
        assert!((e.eval(p) - want).abs() < 1e-14);
        assert_eq!(e.natural_holder(), 0.5);
        let round: Expr = e.to_string().parse().unwrap();
        assert!((round.eval(p) - want).abs() < 1e-14);
    }

    #[test]
    fn scientific_coefficients() {
        let e: Expr = "1.5e-1*x^2 - 2E+0".parse().unwrap();
        assert!((e.eval(Point::new(2.0)) - (0.6 - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "x +", "y", "x^", "(1+x", "2**x", "x x"] {
            assert!(bad.parse::<Expr>().is_err(), "{bad}");
        }
    }

    #[test]
    fn gap_bases_are_exact_near_endpoints() {
        let e: Expr = "(1+x)^0.5".parse().unwrap();
        assert_eq!(e.eval(Point::from_lower_gap(1e-40)), 1e-20);
    }

    #[test]
    fn endpoint_values_and_validation() {
        let map = MapModel::build(MapParams::reference()).unwrap();
        let o = Observable::uniform("x".parse().unwrap());
        assert_eq!((o.value_at_minus1, o.value_at_plus1), (-1.0, 1.0));
        o.validate(&map).unwrap();
        let mut wrong = o.clone();
        wrong.value_at_plus1 = 0.0;
        assert!(wrong.validate(&map).is_err());
        let l = Observable::log_derivative(&map);
        assert_eq!(l.value_at_minus1, 0.0);
        l.validate(&map).unwrap();
        Observable::coboundary("x^2".parse().unwrap(), "x".parse().unwrap()).validate(&map).unwrap();
    }

    #[test]
    fn bump_centering_keeps_zero_endpoints() {
        let o = Observable::uniform("(1+x)*(1-x)*x".parse().unwrap());
        let c = o.centered(0.1, 0.5);
        assert_eq!(c.centering, Some((0.2, Profile::Bump)));
        assert_eq!(c.value_at_minus1, 0.0);
        let k = Observable::uniform("x".parse().unwrap()).centered(0.1, 0.5);
        assert_eq!(k.value_at_plus1, 0.9);
    }
}
