//! Arithmetic expressions over the time variable `t` and parameters `b1..bp`.
//!
//! Grammar (lowest to highest binding):
//!
//! ```text
//! sum     := product (('+' | '-') product)*        left-assoc
//! product := unary (('*' | '/') unary)*            left-assoc
//! unary   := '-' unary | '+' unary | power
//! power   := primary ('^' unary)?                  right-assoc
//! primary := number | 't' | 'b'k | func '(' sum ')' | '(' sum ')'
//! func    := exp | log | sqrt
//! ```
//!
//! Unary minus binds looser than `^`, so `-t^2` is `-(t^2)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
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
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    fn right_assoc(self) -> bool {
        matches!(self, BinOp::Pow)
    }

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

/// Parsed expression tree. Parameters are stored 0-based (`b1` is `Param(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    Param(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

const UNARY_PREC: u8 = 3;

impl Expr {
    /// Parses `text`. Parameter references are only checked syntactically;
    /// see [`Expr::max_param`] for range checks.
    pub fn parse(text: &str) -> Result<Expr> {
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            end: text.len(),
        };
        let expr = parser.binary(1)?;
        if let Some(tok) = parser.peek() {
            return Err(Error::Syntax {
                position: tok.pos,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        Ok(expr)
    }

    pub fn eval(&self, t: f64, b: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Param(k) => b[*k],
            Expr::Neg(e) => -e.eval(t, b),
            Expr::Binary(op, l, r) => {
                let (l, r) = (l.eval(t, b), r.eval(t, b));
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(t, b)),
        }
    }

    /// Largest 1-based parameter index referenced, or 0 if none.
    pub fn max_param(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time => 0,
            Expr::Param(k) => k + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.max_param(),
            Expr::Binary(_, l, r) => l.max_param().max(r.max_param()),
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Num(_) | Expr::Param(_) => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_time(),
            Expr::Binary(_, l, r) => l.uses_time() || r.uses_time(),
        }
    }
}

/// Fully parenthesized form; re-parsing it yields an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Time => write!(f, "t"),
            Expr::Param(k) => write!(f, "b{}", k + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(BinOp),
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(op) => format!("operator `{}`", op.symbol()),
            TokenKind::LParen => "`(`".to_string(),
            TokenKind::RParen => "`)`".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Op(BinOp::Add),
            b'-' => TokenKind::Op(BinOp::Sub),
            b'*' => TokenKind::Op(BinOp::Mul),
            b'/' => TokenKind::Op(BinOp::Div),
            b'^' => TokenKind::Op(BinOp::Pow),
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
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
                let value = lit.parse::<f64>().map_err(|_| Error::Syntax {
                    position: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Num(value),
                    pos: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    pos: start,
                });
                continue;
            }
            _ => {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("unexpected character `{}`", text[start..].chars().next().unwrap()),
                })
            }
        };
        tokens.push(Token { kind, pos: start });
        i += 1;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token {
            kind: TokenKind::Op(op),
            ..
        }) = self.peek()
        {
            let op = *op;
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = if op.right_assoc() {
                // the exponent may itself carry a sign: 2^-t
                self.unary_or_power(prec)?
            } else {
                self.binary(prec + 1)?
            };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary_or_power(&mut self, prec: u8) -> Result<Expr> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Op(BinOp::Sub)) | Some(TokenKind::Op(BinOp::Add)) => self.unary(),
            _ => self.binary(prec),
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Op(BinOp::Sub)) => {
                self.pos += 1;
                let operand = self.binary(UNARY_PREC + 1)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            Some(TokenKind::Op(BinOp::Add)) => {
                self.pos += 1;
                self.binary(UNARY_PREC + 1)
            }
            _ => self.primary(),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.next() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(tok) => Err(Error::Syntax {
                position: tok.pos,
                message: format!("expected `)`, found {}", tok.kind.describe()),
            }),
            None => Err(Error::Syntax {
                position: self.end,
                message: "expected `)`, found end of input".into(),
            }),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let position = self.here();
        let tok = self.next().ok_or(Error::Syntax {
            position,
            message: "unexpected end of input".into(),
        })?;
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.binary(1)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.identifier(&name, tok.pos),
            other => Err(Error::Syntax {
                position: tok.pos,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn identifier(&mut self, name: &str, pos: usize) -> Result<Expr> {
        let func = match name {
            "t" => return Ok(Expr::Time),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        };
        if let Some(func) = func {
            match self.next() {
                Some(Token {
                    kind: TokenKind::LParen,
                    ..
                }) => {}
                _ => {
                    return Err(Error::Syntax {
                        position: pos,
                        message: format!("function `{name}` must be followed by `(`"),
                    })
                }
            }
            let arg = self.binary(1)?;
            self.expect_rparen()?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(digits) = name.strip_prefix('b') {
            if !digits.is_empty() && digits.bytes().all(|c| c.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| Error::Syntax {
                    position: pos,
                    message: format!("bad parameter `{name}`"),
                })?;
                if index == 0 {
                    return Err(Error::ParameterIndex { index, p: 0 });
                }
                return Ok(Expr::Param(index - 1));
            }
        }
        Err(Error::Syntax {
            position: pos,
            message: format!("unknown identifier `{name}`"),
        })
    }
}
