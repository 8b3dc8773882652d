//! Recursive-descent parser for the expression language.
//!
//! grammar    expr   := term (('+' | '-') term)*
//!            term   := unary (('*' | '/') unary)*
//!            unary  := '-' unary | power
//!            power  := atom ('^' unary)?          right-associative
//!            atom   := number | ident | ident '(' expr (',' expr)? ')'
//!                    | '(' expr ')'
//!
//! `^` binds tighter than unary minus, so `-k1^2` is `-(k1^2)` while an
//! exponent may still carry its own sign, `k1^-2`.

use std::f64::consts::{E, PI};

use super::{BinaryOp, Expr, UnaryOp};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.bytes[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => return self.lex_number(start).map(Some),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                return Ok(Some((
                    Tok::Ident(self.src[start..self.pos].to_string()),
                    start,
                )));
            }
            other => {
                return Err(Error::Syntax {
                    pos: start,
                    msg: format!("unexpected character '{}'", other as char),
                })
            }
        };
        self.pos += 1;
        Ok(Some((tok, start)))
    }

    fn lex_number(&mut self, start: usize) -> Result<(Tok, usize)> {
        let mut saw_digit = false;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
            saw_digit = true;
        }
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
                saw_digit = true;
            }
        }
        if !saw_digit {
            return Err(Error::Syntax {
                pos: start,
                msg: "malformed number".into(),
            });
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            // Only take the exponent if digits follow; otherwise the 'e'
            // is the start of an identifier (e.g. "2e" is "2 * e"?  No:
            // juxtaposition is not multiplication, so "2e" without digits
            // is a malformed token and we leave the 'e' for the parser to
            // reject).
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let mut exp_digits = false;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
                exp_digits = true;
            }
            if !exp_digits {
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| Error::Syntax {
            pos: start,
            msg: format!("malformed number '{text}'"),
        })?;
        Ok((Tok::Num(value), start))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    end: usize,
}

pub fn parse(src: &str) -> Result<Expr> {
    let toks = Lexer::tokens(src)?;
    let mut p = Parser {
        toks,
        idx: 0,
        end: src.len(),
    };
    let e = p.parse_expr()?;
    match p.peek() {
        None => Ok(e),
        Some((tok, pos)) => Err(Error::Syntax {
            pos,
            msg: format!("unexpected {}", describe(&tok)),
        }),
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number '{v}'"),
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::Caret => "'^'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
    }
}

impl Parser {
    fn peek(&self) -> Option<(Tok, usize)> {
        self.toks.get(self.idx).cloned()
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.bump() {
            Some((tok, _)) if tok == want => Ok(()),
            Some((tok, pos)) => Err(Error::Syntax {
                pos,
                msg: format!("expected {what}, found {}", describe(&tok)),
            }),
            None => Err(Error::Syntax {
                pos: self.end,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some((Tok::Plus, _)) => {
                    self.idx += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Binary(BinaryOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some((Tok::Minus, _)) => {
                    self.idx += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Binary(BinaryOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some((Tok::Star, _)) => {
                    self.idx += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Binary(BinaryOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some((Tok::Slash, _)) => {
                    self.idx += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Binary(BinaryOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if let Some((Tok::Minus, _)) = self.peek() {
            self.idx += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if let Some((Tok::Caret, _)) = self.peek() {
            self.idx += 1;
            let exp = self.parse_unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Expr::Const(v)),
            Some((Tok::LParen, _)) => {
                let e = self.parse_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Some((Tok::Ident(name), pos)) => {
                if let Some((Tok::LParen, _)) = self.peek() {
                    self.idx += 1;
                    self.parse_call(&name, pos)
                } else {
                    Ok(match name.as_str() {
                        "pi" => Expr::Const(PI),
                        "e" => Expr::Const(E),
                        _ => Expr::Var(name),
                    })
                }
            }
            Some((tok, pos)) => Err(Error::Syntax {
                pos,
                msg: format!("expected an expression, found {}", describe(&tok)),
            }),
            None => Err(Error::Syntax {
                pos: self.end,
                msg: "expected an expression, found end of input".into(),
            }),
        }
    }

    fn parse_call(&mut self, name: &str, pos: usize) -> Result<Expr> {
        let unary_op = match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "tan" => Some(UnaryOp::Tan),
            "sinh" => Some(UnaryOp::Sinh),
            "cosh" => Some(UnaryOp::Cosh),
            "tanh" => Some(UnaryOp::Tanh),
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "sqrt" => Some(UnaryOp::Sqrt),
            "atan" => Some(UnaryOp::Atan),
            _ => None,
        };
        if let Some(op) = unary_op {
            let arg = self.parse_expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(Expr::Unary(op, Box::new(arg)));
        }
        if name == "atan2" {
            let y = self.parse_expr()?;
            self.expect(Tok::Comma, "','")?;
            let x = self.parse_expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(Expr::Binary(BinaryOp::Atan2, Box::new(y), Box::new(x)));
        }
        Err(Error::UnknownFunction {
            name: name.to_string(),
            pos,
        })
    }
}
