//! A small arithmetic language over the single variable `x`.
//!
//! Coefficient functions (`w1`, `w2`, `q`) are written as plain text in the
//! problem file, e.g. `2 + sin(x)^2`. The grammar is
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?          right-associative
//! atom  := number | "x" | func "(" expr ")" | "(" expr ")"
//! func  := sin | cos | exp | sqrt | abs
//! ```
//!
//! so `-x^2` is `-(x^2)` and `2^3^2` is `2^(3^2)`. Numbers are decimal with an
//! optional exponent; implicit multiplication (`2x`) is rejected.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("unexpected {found}, expected {expected}")]
    Unexpected { found: String, expected: &'static str },
    #[error("malformed number '{0}'")]
    BadNumber(String),
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("function '{name}' takes 1 argument, got {got}")]
    Arity { name: &'static str, got: usize },
}

/// Parse failure with the byte offset into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in '{expr}' at x = {x}")]
    DivisionByZero { x: f64, expr: String },
    #[error("square root of negative value in '{expr}' at x = {x}")]
    NegativeSqrt { x: f64, expr: String },
    #[error("non-finite value in '{expr}' at x = {x}")]
    NonFinite { x: f64, expr: String },
}

impl EvalError {
    pub fn x(&self) -> f64 {
        match self {
            EvalError::DivisionByZero { x, .. }
            | EvalError::NegativeSqrt { x, .. }
            | EvalError::NonFinite { x, .. } => *x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("number {v}"),
            Token::Ident(s) => format!("identifier '{s}'"),
            Token::Op(c) => format!("'{c}'"),
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::Comma => "','".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, only if followed by a digit (optionally signed)
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let value: f64 = lit.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::BadNumber(lit.to_string()),
                position: start,
            })?;
            out.push((Token::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Token::Op(c),
                '(' => Token::LParen,
                ')' => Token::RParen,
                ',' => Token::Comma,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or(c);
                    return Err(ParseError { kind: ParseErrorKind::UnexpectedChar(ch), position: start });
                }
            };
            out.push((tok, start));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        let found = self.peek().map_or_else(|| "end of input".to_string(), Token::describe);
        ParseError { kind: ParseErrorKind::Unexpected { found, expected }, position: self.offset() }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek() {
            let op = if *op == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek() {
            let op = if *op == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some((tok, at)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.unexpected("an operand"));
        };
        match tok {
            Token::Num(v) => {
                self.pos += 1;
                self.reject_juxtaposition()?;
                Ok(Expr::Const(v))
            }
            Token::Ident(name) => {
                self.pos += 1;
                if name == "x" {
                    self.reject_juxtaposition()?;
                    return Ok(Expr::X);
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError { kind: ParseErrorKind::UnknownIdentifier(name), position: at });
                };
                if self.peek() != Some(&Token::LParen) {
                    return Err(self.unexpected("'(' after function name"));
                }
                self.pos += 1;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(&Token::Comma) {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                if self.peek() != Some(&Token::RParen) {
                    return Err(self.unexpected("')'"));
                }
                self.pos += 1;
                if args.len() != 1 {
                    return Err(ParseError {
                        kind: ParseErrorKind::Arity { name: func.name(), got: args.len() },
                        position: at,
                    });
                }
                let arg = args.pop().expect("one argument");
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Token::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(self.unexpected("')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.unexpected("an operand")),
        }
    }

    /// `2x`, `2(x)`, `x x` are not products.
    fn reject_juxtaposition(&self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Token::Num(_) | Token::Ident(_) | Token::LParen) => Err(self.unexpected("an operator")),
            _ => Ok(()),
        }
    }
}

impl Expr {
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero { x, expr: self.to_string() });
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(x)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::NegativeSqrt { x, expr: self.to_string() });
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { x, expr: self.to_string() })
        }
    }
}

/// Printed fully parenthesised, so the output always re-parses to the same tree shape.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "(-{})", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::X => f.write_str("x"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed coefficient function together with the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffExpr {
    ast: Expr,
    source: String,
}

impl CoeffExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let tokens = tokenize(text)?;
        if tokens.is_empty() {
            return Err(ParseError { kind: ParseErrorKind::Empty, position: 0 });
        }
        let mut parser = Parser { tokens, pos: 0, end: text.len() };
        let ast = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.unexpected("an operator or end of input"));
        }
        Ok(CoeffExpr { ast, source: text.trim().to_string() })
    }

    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        self.ast.eval(x)
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_constant(&self) -> bool {
        fn walk(e: &Expr) -> bool {
            match e {
                Expr::Const(_) => true,
                Expr::X => false,
                Expr::Neg(a) | Expr::Call(_, a) => walk(a),
                Expr::Binary(_, a, b) => walk(a) && walk(b),
            }
        }
        walk(&self.ast)
    }
}

impl fmt::Display for CoeffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for CoeffExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CoeffExpr::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, x: f64) -> f64 {
        CoeffExpr::parse(text).unwrap().eval(x).unwrap()
    }

    #[test]
    fn literals_and_variable() {
        assert_eq!(ev("1", 0.3), 1.0);
        assert_eq!(ev("x", 0.25), 0.25);
        assert_eq!(ev("x", 0.7), 0.7);
        assert_eq!(ev("1.5e2", 0.0), 150.0);
        assert_eq!(ev(".5", 0.0), 0.5);
    }

    #[test]
    fn documented_examples() {
        assert_eq!(ev("2+sin(x)^2", 0.0), 2.0);
        // 2 + sin(1)^2, computed by hand: sin(1) = 0.8414709848078965
        assert!((ev("2+sin(x)^2", 1.0) - 2.708_073_418_273_571).abs() < 1e-12);
        assert!((ev("sqrt(x)*exp(x)", 1.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("1-2-3", 0.0), -4.0);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("1+2*3", 0.0), 7.0);
        assert_eq!(ev("(1+2)*3", 0.0), 9.0);
        assert_eq!(ev("--x", 2.0), 2.0);
        assert_eq!(ev("2*-x", 2.0), -4.0);
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let e = CoeffExpr::parse("1/x").unwrap();
        let err = e.eval(0.0).unwrap_err();
        assert!(matches!(err, EvalError::DivisionByZero { x, .. } if x == 0.0));
        assert!(err.to_string().contains("(1 / x)"));
    }

    #[test]
    fn negative_sqrt_is_domain_error() {
        let e = CoeffExpr::parse("sqrt(x-1)").unwrap();
        assert!(matches!(e.eval(0.5), Err(EvalError::NegativeSqrt { .. })));
        assert_eq!(e.eval(1.0).unwrap(), 0.0);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = CoeffExpr::parse("1 + * x").unwrap_err();
        assert_eq!(err.position, 4);
        let err = CoeffExpr::parse("2x").unwrap_err();
        assert_eq!(err.position, 1);
        let err = CoeffExpr::parse("(x + 1").unwrap_err();
        assert_eq!(err.position, 6);
        let err = CoeffExpr::parse("x $ 1").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedChar('$'));
        assert!(matches!(CoeffExpr::parse("   ").unwrap_err().kind, ParseErrorKind::Empty));
    }

    #[test]
    fn unknown_identifier_and_arity() {
        let err = CoeffExpr::parse("1 + y").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        assert_eq!(err.position, 4);
        let err = CoeffExpr::parse("sin(x, 2)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Arity { name: "sin", got: 2 });
        assert!(CoeffExpr::parse("sin x").is_err());
    }

    #[test]
    fn display_reparses() {
        for text in ["2+sin(x)^2", "-x^2", "2^3^2", "1/(x+1)-abs(cos(x))", "1e-3*x"] {
            let e = CoeffExpr::parse(text).unwrap();
            let again = CoeffExpr::parse(&e.ast().to_string()).unwrap();
            assert_eq!(e.ast(), again.ast(), "{text}");
        }
    }

    #[test]
    fn constant_detection() {
        assert!(CoeffExpr::parse("1+2").unwrap().is_constant());
        assert!(!CoeffExpr::parse("1+x").unwrap().is_constant());
    }
}
