//! Symbol expressions.
//!
//! A small arithmetic language for scalar symbol fields:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' integer)?
//! atom  := number | name '(' args ')' | '(' expr ')'
//! ```
//!
//! Functions (factor index `i` is 1-based):
//!
//! | name | value |
//! |---|---|
//! | `x1(i)`, `x2(i)`, `x3(i)` | coordinates on the unit sphere, north chart origin at `x3 = 1` |
//! | `rho(i)` | `|z|²/(1+|z|²)` |
//! | `hemisphere(i)` | indicator of `|z| ≤ 1` |
//! | `disk(i, r)` | indicator of `|z| ≤ r` |
//! | `cap(i, θ, φ, a)` | indicator of the geodesic ball of radius `a` around the point with polar angle `θ`, azimuth `φ` |
//! | `exp`, `sin`, `cos`, `abs` | one argument |
//! | `min`, `max` | two arguments |

use crate::geometry::grid::QuadratureGrid;
use crate::geometry::{FactorPoint, Point};
use crate::superform::SuperSymbol;
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Coord(usize, usize),
    Rho(usize),
    Disk(usize, f64),
    Cap(usize, [f64; 3], f64),
    Unary(UnaryOp, Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum UnaryOp {
    Exp,
    Sin,
    Cos,
    Abs,
}

/// Parsed scalar symbol.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    n: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    n: usize,
}

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Symbol(msg.into()))
}

impl Parser<'_> {
    fn skip(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            err(format!("expected `{}` at offset {}", c as char, self.pos))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => '+',
                Some(b'-') => '-',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => '*',
                Some(b'/') => '/',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            let neg = self.eat(b'-');
            let Node::Num(e) = self.number()? else { unreachable!() };
            if e.fract() != 0.0 || e.abs() > 64.0 {
                return err("exponent must be an integer of magnitude at most 64");
            }
            return Ok(Node::Pow(Box::new(base), if neg { -(e as i32) } else { e as i32 }));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<Node> {
        self.skip();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || b".eE".contains(&self.s[self.pos])) {
            // allow a sign right after an exponent marker
            if b"eE".contains(&self.s[self.pos]) && self.pos + 1 < self.s.len() && b"+-".contains(&self.s[self.pos + 1]) {
                self.pos += 1;
            }
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        text.parse::<f64>().map(Node::Num).or_else(|_| err(format!("bad number `{text}`")))
    }

    fn args(&mut self) -> Result<Vec<Node>> {
        self.expect(b'(')?;
        let mut out = vec![self.expr()?];
        while self.eat(b',') {
            out.push(self.expr()?);
        }
        self.expect(b')')?;
        Ok(out)
    }

    fn constant(node: &Node) -> Result<f64> {
        match node {
            Node::Num(x) => Ok(*x),
            Node::Neg(b) => Ok(-Self::constant(b)?),
            _ => err("function parameters must be numeric constants"),
        }
    }

    fn factor(&self, node: &Node) -> Result<usize> {
        let x = Self::constant(node)?;
        if x.fract() != 0.0 || x < 1.0 || x as usize > self.n {
            return err(format!("factor index {x} outside 1..={}", self.n));
        }
        Ok(x as usize - 1)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap().to_string();
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                let a = self.args()?;
                let arity = |k: usize| if a.len() == k { Ok(()) } else { err(format!("`{name}` takes {k} argument(s)")) };
                match name.as_str() {
                    "x1" | "x2" | "x3" => {
                        arity(1)?;
                        Ok(Node::Coord(self.factor(&a[0])?, (name.as_bytes()[1] - b'1') as usize))
                    }
                    "rho" => {
                        arity(1)?;
                        Ok(Node::Rho(self.factor(&a[0])?))
                    }
                    "hemisphere" => {
                        arity(1)?;
                        Ok(Node::Disk(self.factor(&a[0])?, 1.0))
                    }
                    "disk" => {
                        arity(2)?;
                        let r = Self::constant(&a[1])?;
                        if !(r > 0.0) {
                            return err("disk radius must be positive");
                        }
                        Ok(Node::Disk(self.factor(&a[0])?, r))
                    }
                    "cap" => {
                        arity(4)?;
                        let (th, ph, rad) = (Self::constant(&a[1])?, Self::constant(&a[2])?, Self::constant(&a[3])?);
                        if !(rad > 0.0) {
                            return err("cap radius must be positive");
                        }
                        let c = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                        Ok(Node::Cap(self.factor(&a[0])?, c, rad))
                    }
                    "exp" | "sin" | "cos" | "abs" => {
                        arity(1)?;
                        let f = match name.as_str() {
                            "exp" => UnaryOp::Exp,
                            "sin" => UnaryOp::Sin,
                            "cos" => UnaryOp::Cos,
                            _ => UnaryOp::Abs,
                        };
                        Ok(Node::Unary(f, Box::new(a.into_iter().next().unwrap())))
                    }
                    "min" | "max" => {
                        arity(2)?;
                        let mut it = a.into_iter();
                        let (l, r) = (Box::new(it.next().unwrap()), Box::new(it.next().unwrap()));
                        Ok(if name == "min" { Node::Min(l, r) } else { Node::Max(l, r) })
                    }
                    _ => err(format!("unknown function `{name}`")),
                }
            }
            Some(c) => err(format!("unexpected `{}` at offset {}", c as char, self.pos)),
            None => err("unexpected end of expression"),
        }
    }
}

fn sphere(p: &FactorPoint) -> [f64; 3] {
    p.to_sphere()
}

fn eval(node: &Node, p: &Point) -> f64 {
    match node {
        Node::Num(x) => *x,
        Node::Neg(a) => -eval(a, p),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, p), eval(b, p));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                _ => x / y,
            }
        }
        Node::Pow(a, e) => eval(a, p).powi(*e),
        Node::Coord(i, c) => sphere(p.factor(*i))[*c],
        Node::Rho(i) => (1.0 - sphere(p.factor(*i))[2]) / 2.0,
        Node::Disk(i, r) => {
            let u = p.factor(*i).u();
            if u <= r * r {
                1.0
            } else {
                0.0
            }
        }
        Node::Cap(i, c, rad) => {
            let x = sphere(p.factor(*i));
            let dot = (x[0] * c[0] + x[1] * c[1] + x[2] * c[2]).clamp(-1.0, 1.0);
            if dot.acos() <= *rad {
                1.0
            } else {
                0.0
            }
        }
        Node::Unary(f, a) => {
            let x = eval(a, p);
            match f {
                UnaryOp::Exp => x.exp(),
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
                UnaryOp::Abs => x.abs(),
            }
        }
        Node::Min(a, b) => eval(a, p).min(eval(b, p)),
        Node::Max(a, b) => eval(a, p).max(eval(b, p)),
    }
}

impl Expr {
    /// Parses `source` for a manifold with `n` factors.
    pub fn parse(source: &str, n: usize) -> Result<Expr> {
        let mut p = Parser { s: source.as_bytes(), pos: 0, n };
        let root = p.expr()?;
        if p.peek().is_some() {
            return err(format!("trailing input at offset {}", p.pos));
        }
        Ok(Expr { source: source.to_string(), root, n })
    }

    pub fn constant(c: f64, n: usize) -> Expr {
        Expr { source: format!("{c}"), root: Node::Num(c), n }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, p: &Point) -> f64 {
        eval(&self.root, p)
    }

    /// Values on every grid node; rejects non-finite samples.
    pub fn sample(&self, grid: &QuadratureGrid) -> Result<Vec<f64>> {
        if grid.n != self.n {
            return Err(Error::DimensionMismatch(format!("symbol for n = {} on grid with n = {}", self.n, grid.n)));
        }
        let v: Vec<f64> = (0..grid.len()).into_par_iter().map(|i| self.eval(&grid.node(i))).collect();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("symbol `{}` at node {i}", self.source)));
        }
        Ok(v)
    }
}

/// Parses a diagonal block key: `"0"` (scalar part) or a string of 1-based
/// factor digits such as `"1"`, `"2"`, `"12"`.
pub fn parse_block_key(key: &str, n: usize) -> Result<usize> {
    if key == "0" {
        return Ok(0);
    }
    let mut mask = 0usize;
    for c in key.chars() {
        let d = c.to_digit(10).ok_or_else(|| Error::Symbol(format!("bad block key `{key}`")))? as usize;
        if d == 0 || d > n || mask & (1 << (d - 1)) != 0 {
            return Err(Error::Symbol(format!("bad block key `{key}` for n = {n}")));
        }
        mask |= 1 << (d - 1);
    }
    Ok(mask)
}

/// Block key of a mask (inverse of [`parse_block_key`]).
pub fn block_key(mask: usize) -> String {
    if mask == 0 {
        return "0".into();
    }
    (0..8).filter(|b| mask & (1 << b) != 0).map(|b| char::from(b'1' + b as u8)).collect()
}

/// Form symbol from one expression per diagonal block.
#[derive(Clone, Debug)]
pub struct SuperSymbolSpec {
    pub n: usize,
    pub blocks: Vec<(usize, Expr)>,
}

impl SuperSymbolSpec {
    pub fn scalar(e: Expr) -> Self {
        SuperSymbolSpec { n: e.n(), blocks: vec![(0, e)] }
    }

    pub fn parse(n: usize, blocks: &[(&str, &str)]) -> Result<Self> {
        let blocks = blocks
            .iter()
            .map(|(k, e)| Ok((parse_block_key(k, n)?, Expr::parse(e, n)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SuperSymbolSpec { n, blocks })
    }

    pub fn sample(&self, grid: &QuadratureGrid) -> Result<SuperSymbol> {
        let mut s = SuperSymbol::zero(self.n);
        for (mask, e) in &self.blocks {
            let v = e.sample(grid)?;
            s.blocks[*mask] = Some(match s.blocks[*mask].take() {
                Some(old) => old.iter().zip(&v).map(|(a, b)| a + b).collect(),
                None => v,
            });
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn at(z: C64) -> Point {
        Point::curve(FactorPoint::north(z))
    }

    #[test]
    fn arithmetic() {
        let e = Expr::parse("1 + 2*3 - (4 - 1)/3 + 2^3 - -1", 1).unwrap();
        assert_eq!(e.eval(&at(C64::new(0.0, 0.0))), 1.0 + 6.0 - 1.0 + 8.0 + 1.0);
        assert_eq!(Expr::parse("1e-1 + 2.5E+1", 1).unwrap().eval(&at(C64::new(0.0, 0.0))), 25.1);
    }

    #[test]
    fn coordinate_functions() {
        let p = at(C64::new(1.0, 0.0));
        assert!((Expr::parse("x1(1)", 1).unwrap().eval(&p) - 1.0).abs() < 1e-15);
        assert!(Expr::parse("x3(1)", 1).unwrap().eval(&p).abs() < 1e-15);
        assert!((Expr::parse("rho(1)", 1).unwrap().eval(&p) - 0.5).abs() < 1e-15);
        assert_eq!(Expr::parse("hemisphere(1)", 1).unwrap().eval(&p), 1.0);
        assert_eq!(Expr::parse("hemisphere(1)", 1).unwrap().eval(&at(C64::new(1.01, 0.0))), 0.0);
        assert_eq!(Expr::parse("cap(1, 0, 0, 1.5707963)", 1).unwrap().eval(&at(C64::new(0.9, 0.0))), 1.0);
        let south = Point::curve(FactorPoint::south(C64::new(0.0, 0.0)));
        assert_eq!(Expr::parse("disk(1, 100)", 1).unwrap().eval(&south), 0.0);
        let pp = Point::product(FactorPoint::north(C64::new(0.0, 0.0)), FactorPoint::south(C64::new(0.0, 0.0)));
        assert_eq!(Expr::parse("x3(1) - x3(2)", 2).unwrap().eval(&pp), 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["", "1 +", "foo(1)", "x1(2)", "x1(0)", "(1", "1 2", "disk(1, -1)", "2^0.5", "x1(x2(1))"] {
            assert!(Expr::parse(bad, 1).is_err(), "{bad}");
        }
    }

    #[test]
    fn block_keys() {
        assert_eq!(parse_block_key("0", 2).unwrap(), 0);
        assert_eq!(parse_block_key("12", 2).unwrap(), 3);
        assert_eq!(parse_block_key("2", 2).unwrap(), 2);
        assert!(parse_block_key("3", 2).is_err());
        assert!(parse_block_key("11", 2).is_err());
        for m in 0..4 {
            assert_eq!(parse_block_key(&block_key(m), 2).unwrap(), m);
        }
    }
}
