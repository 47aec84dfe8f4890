//! Arithmetic expressions over `t`, `y`, `z`, `b` with `+ − * / ^`, unary
//! minus, parentheses, the constants `e` and `pi`, and the functions `exp`,
//! `ln`, `abs`, `max`, `min`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("expression `{source_text}`: {message} at offset {offset}")]
pub struct ExprError {
    pub source_text: String,
    pub message: String,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    Y,
    Z,
    B,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::Y => "y",
            Var::Z => "z",
            Var::B => "b",
        }
    }
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Ln,
    Abs,
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression together with its source text.
#[derive(Clone, PartialEq)]
pub struct Expr {
    text: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.text)
    }
}

impl Expr {
    /// Parses `text`, accepting only the variables in `allowed`.
    pub fn parse(text: &str, allowed: &[Var]) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: text,
            bytes: text.as_bytes(),
            pos: 0,
            allowed,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self {
            text: text.to_string(),
            root,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn eval(&self, env: &Env) -> f64 {
        eval(&self.root, env)
    }

    /// `true` when the expression does not mention `var`.
    pub fn is_free_of(&self, var: Var) -> bool {
        fn walk(n: &Node, var: Var) -> bool {
            match n {
                Node::Num(_) => true,
                Node::Var(v) => *v != var,
                Node::Neg(a) => walk(a, var),
                Node::Bin(_, a, b) => walk(a, var) && walk(b, var),
                Node::Call(_, args) => args.iter().all(|a| walk(a, var)),
            }
        }
        walk(&self.root, var)
    }
}

fn eval(n: &Node, env: &Env) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(Var::T) => env.t,
        Node::Var(Var::Y) => env.y,
        Node::Var(Var::Z) => env.z,
        Node::Var(Var::B) => env.b,
        Node::Neg(a) => -eval(a, env),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, env), eval(b, env));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Pow => x.powf(y),
            }
        }
        Node::Call(f, args) => match f {
            Func::Exp => eval(&args[0], env).exp(),
            Func::Ln => eval(&args[0], env).ln(),
            Func::Abs => eval(&args[0], env).abs(),
            Func::Max => args.iter().map(|a| eval(a, env)).fold(f64::NEG_INFINITY, f64::max),
            Func::Min => args.iter().map(|a| eval(a, env)).fold(f64::INFINITY, f64::min),
        },
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    allowed: &'a [Var],
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError {
            source_text: self.src.to_string(),
            message: message.into(),
            offset: self.pos,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `2e` is not an exponent; leave `e` for the next token
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map(Node::Num).map_err(|_| {
            self.pos = start;
            self.error(format!("invalid number `{text}`"))
        })
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let func = match name {
            "exp" => Some((Func::Exp, 1)),
            "ln" => Some((Func::Ln, 1)),
            "abs" => Some((Func::Abs, 1)),
            "max" => Some((Func::Max, 0)),
            "min" => Some((Func::Min, 0)),
            _ => None,
        };
        if let Some((f, arity)) = func {
            if !self.eat(b'(') {
                return Err(self.error(format!("expected `(` after `{name}`")));
            }
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            if !self.eat(b')') {
                return Err(self.error("expected `)` or `,`"));
            }
            let ok = if arity == 0 {
                args.len() >= 2
            } else {
                args.len() == arity
            };
            if !ok {
                self.pos = start;
                return Err(self.error(format!("wrong number of arguments to `{name}`")));
            }
            return Ok(Node::Call(f, args));
        }
        let var = match name {
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "t" => Var::T,
            "y" => Var::Y,
            "z" => Var::Z,
            "b" => Var::B,
            _ => {
                self.pos = start;
                return Err(self.error(format!("unknown identifier `{name}`")));
            }
        };
        if !self.allowed.contains(&var) {
            self.pos = start;
            let names: Vec<&str> = self.allowed.iter().map(|v| v.name()).collect();
            return Err(self.error(format!("variable `{name}` not allowed here (allowed: {names:?})")));
        }
        Ok(Node::Var(var))
    }
}
