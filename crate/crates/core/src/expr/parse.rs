use std::sync::Arc;

use thiserror::Error;

use super::{Expr, Var};

/// Syntax error inside an expression, with a 0-based byte offset.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset}")]
pub struct ExprParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> ExprParseError {
        ExprParseError {
            offset,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ExprParseError> {
        let bytes = self.src.as_bytes();
        let mut out = Vec::new();
        while self.pos < bytes.len() {
            let c = bytes[self.pos] as char;
            let start = self.pos;
            if c.is_ascii_whitespace() {
                self.pos += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let mut end = self.pos;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut exp = end + 1;
                    if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                        exp += 1;
                    }
                    if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                        while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                            exp += 1;
                        }
                        end = exp;
                    }
                }
                let text = &self.src[start..end];
                let v: f64 = text
                    .parse()
                    .map_err(|_| self.err(start, format!("malformed number '{text}'")))?;
                out.push((start, Tok::Num(v)));
                self.pos = end;
            } else if c.is_ascii_alphabetic() {
                let mut end = self.pos;
                while end < bytes.len() && (bytes[end] as char).is_ascii_alphanumeric() {
                    end += 1;
                }
                out.push((start, Tok::Ident(self.src[start..end].to_string())));
                self.pos = end;
            } else if "+-*/^(),".contains(c) {
                out.push((start, Tok::Op(c)));
                self.pos += 1;
            } else {
                return Err(self.err(start, format!("unexpected character '{c}'")));
            }
        }
        out.push((self.src.len(), Tok::End));
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].1
    }

    fn offset(&self) -> usize {
        self.toks[self.i].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].1.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> ExprParseError {
        ExprParseError {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>, ExprParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Arc::new(Expr::Add(lhs, self.term()?));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Arc::new(Expr::Sub(lhs, self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>, ExprParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Arc::new(Expr::Mul(lhs, self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Arc::new(Expr::Div(lhs, self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>, ExprParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            // literals fold so that printing and re-parsing is exact
            return Ok(match &*inner {
                Expr::Num(v) => Expr::num(-v),
                _ => Arc::new(Expr::Neg(inner)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Expr>, ExprParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        self.bump();
        let negative = if *self.peek() == Tok::Op('-') {
            self.bump();
            true
        } else {
            false
        };
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                let n = v as i32;
                Ok(Arc::new(Expr::Pow(base, if negative { -n } else { n })))
            }
            _ => Err(ExprParseError {
                offset: at,
                message: "exponent must be an integer literal".into(),
            }),
        }
    }

    fn primary(&mut self) -> Result<Arc<Expr>, ExprParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Arc::new(Expr::Var(Var::X))),
                "a" => Ok(Arc::new(Expr::Var(Var::A))),
                "abs" => {
                    self.expect('(')?;
                    let e = self.expr()?;
                    self.expect(')')?;
                    Ok(Arc::new(Expr::Abs(e)))
                }
                "min" | "max" => {
                    self.expect('(')?;
                    let l = self.expr()?;
                    self.expect(',')?;
                    let r = self.expr()?;
                    self.expect(')')?;
                    Ok(Arc::new(if name == "min" {
                        Expr::Min(l, r)
                    } else {
                        Expr::Max(l, r)
                    }))
                }
                other => Err(ExprParseError {
                    offset: at,
                    message: format!("unknown identifier '{other}'"),
                }),
            },
            Tok::End => Err(ExprParseError {
                offset: at,
                message: "unexpected end of expression".into(),
            }),
            Tok::Op(c) => Err(ExprParseError {
                offset: at,
                message: format!("unexpected '{c}'"),
            }),
        }
    }
}

/// Parse an expression in `x` and `a`.
pub fn parse(src: &str) -> Result<Arc<Expr>, ExprParseError> {
    let toks = Lexer { src, pos: 0 }.tokens()?;
    let mut p = Parser { toks, i: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::Op(')') => Err(p.err("unbalanced ')'")),
        _ => Err(p.err("unexpected trailing input")),
    }
}
