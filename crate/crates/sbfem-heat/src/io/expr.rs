//! Arithmetic expressions over (x, y, t) for boundary and initial data:
//! +, -, *, /, parentheses, unary minus, the constants pi, and the
//! functions sin, cos, sinh, cosh, exp. Parsed once into an AST and
//! evaluated per point; errors carry the byte offset into the source.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    T,
    Pi,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Sinh(Box<Expr>),
    Cosh(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::T => t,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(x, y, t),
            Expr::Add(a, b) => a.eval(x, y, t) + b.eval(x, y, t),
            Expr::Sub(a, b) => a.eval(x, y, t) - b.eval(x, y, t),
            Expr::Mul(a, b) => a.eval(x, y, t) * b.eval(x, y, t),
            Expr::Div(a, b) => a.eval(x, y, t) / b.eval(x, y, t),
            Expr::Sin(e) => e.eval(x, y, t).sin(),
            Expr::Cos(e) => e.eval(x, y, t).cos(),
            Expr::Sinh(e) => e.eval(x, y, t).sinh(),
            Expr::Cosh(e) => e.eval(x, y, t).cosh(),
            Expr::Exp(e) => e.eval(x, y, t).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Token)>> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token)>> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
                {
                    end += 1;
                }
                // Exponent suffix: e or E, optional sign, digits.
                if end < self.src.len() && (self.src[end] | 0x20) == b'e' {
                    let mut probe = end + 1;
                    if probe < self.src.len()
                        && (self.src[probe] == b'+' || self.src[probe] == b'-')
                    {
                        probe += 1;
                    }
                    if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                        end = probe;
                        while end < self.src.len() && self.src[end].is_ascii_digit() {
                            end += 1;
                        }
                    }
                }
                let text = std::str::from_utf8(&self.src[start..end]).unwrap();
                let v: f64 = text.parse().map_err(|_| Error::Expr {
                    pos: start,
                    message: format!("malformed number '{text}'"),
                })?;
                self.pos = end;
                return Ok(Some((start, Token::Num(v))));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[start..end]).unwrap();
                self.pos = end;
                return Ok(Some((start, Token::Ident(text.to_string()))));
            }
            other => {
                return Err(Error::Expr {
                    pos: start,
                    message: format!("unexpected character '{}'", other as char),
                })
            }
        };
        self.pos += 1;
        Ok(Some((start, tok)))
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    idx: usize,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens
            .get(self.idx)
            .map(|(p, _)| *p)
            .unwrap_or(self.src_len)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.idx).map(|(_, t)| t.clone());
        self.idx += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "t" => Ok(Expr::T),
                "pi" => Ok(Expr::Pi),
                "sin" | "cos" | "sinh" | "cosh" | "exp" => {
                    let ppos = self.pos();
                    if !matches!(self.bump(), Some(Token::LParen)) {
                        return Err(Error::Expr {
                            pos: ppos,
                            message: format!("expected '(' after '{name}'"),
                        });
                    }
                    let arg = Box::new(self.expr()?);
                    self.expect_rparen()?;
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        "sinh" => Expr::Sinh(arg),
                        "cosh" => Expr::Cosh(arg),
                        _ => Expr::Exp(arg),
                    })
                }
                other => Err(Error::Expr {
                    pos,
                    message: format!(
                        "unknown name '{other}' (expected x, y, t, pi, sin, cos, sinh, cosh, exp)"
                    ),
                }),
            },
            Some(tok) => Err(Error::Expr {
                pos,
                message: format!("unexpected token {tok:?}"),
            }),
            None => Err(Error::Expr {
                pos,
                message: "unexpected end of expression".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        let pos = self.pos();
        match self.bump() {
            Some(Token::RParen) => Ok(()),
            _ => Err(Error::Expr {
                pos,
                message: "expected ')'".into(),
            }),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    let tokens = Lexer::tokens(src)?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        src_len: src.len(),
    };
    let e = parser.expr()?;
    if parser.idx != parser.tokens.len() {
        return Err(Error::Expr {
            pos: parser.pos(),
            message: "trailing input after expression".into(),
        });
    }
    Ok(e)
}
