//! Text format.
//!
//! ```text
//! # comment
//! Main:
//!     x <- y + 1
//!     load x, x
//!     store x, 64 + y
//!     beqz x, Main
//!     cmov x, e, cond
//!     jmp @Main
//!     call F
//!     ret
//!     spbarr
//!     skip
//! ```
//!
//! Each label binds to the address of the next instruction; a label at the
//! end of the file binds to the first address past the program. `@Name`
//! inside an expression is the address bound to `Name`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::expr::{BinOp, Expr, Reg, UnOp};
use super::program::{Instr, Program, ProgramError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("unresolved function `{0}`")]
    UnresolvedFunction(String),
    #[error("`{0}` is a reserved register name")]
    Reserved(String),
    #[error("{0}")]
    Program(ProgramError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

/// All errors found in a source text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(u64),
    Ident(String),
    At(String),
    LParen,
    RParen,
    Comma,
    Arrow,
    Op(&'static str),
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(s: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            let v = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
                u64::from_str_radix(hex, 16)
            } else {
                text.parse::<u64>()
            }
            .map_err(|_| format!("bad number `{text}`"))?;
            out.push(Tok::Num(v));
            continue;
        }
        if is_ident_start(c) || (c == '@' && i + 1 < chars.len() && is_ident_start(chars[i + 1])) {
            let at = c == '@';
            if at {
                i += 1;
            }
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            out.push(if at { Tok::At(name) } else { Tok::Ident(name) });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let tok = match two.as_str() {
            "<-" => Some(Tok::Arrow),
            "<<" => Some(Tok::Op("<<")),
            ">>" => Some(Tok::Op(">>")),
            "==" => Some(Tok::Op("==")),
            _ => None,
        };
        if let Some(t) = tok {
            out.push(t);
            i += 2;
            continue;
        }
        let t = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '+' => Tok::Op("+"),
            '-' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '&' => Tok::Op("&"),
            '|' => Tok::Op("|"),
            '^' => Tok::Op("^"),
            '<' => Tok::Op("<"),
            '!' => Tok::Op("!"),
            other => return Err(format!("unexpected character `{other}`")),
        };
        out.push(t);
        i += 1;
    }
    Ok(out)
}

/// Expression with label references still unresolved.
enum RawExpr {
    Lit(u64),
    Reg(String),
    Label(String),
    Un(UnOp, Box<RawExpr>),
    Bin(BinOp, Box<RawExpr>, Box<RawExpr>),
}

struct ExprParser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

const LEVELS: &[&[(&str, BinOp)]] = &[
    &[("==", BinOp::Eq), ("<", BinOp::Lt)],
    &[("|", BinOp::Or)],
    &[("^", BinOp::Xor)],
    &[("&", BinOp::And)],
    &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
    &[("+", BinOp::Add), ("-", BinOp::Sub)],
    &[("*", BinOp::Mul)],
];

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn level(&mut self, lvl: usize) -> Result<RawExpr, String> {
        if lvl == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.level(lvl + 1)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op(s)) => LEVELS[lvl].iter().find(|(sym, _)| sym == s).map(|(_, op)| *op),
                _ => None,
            };
            match op {
                Some(op) => {
                    self.pos += 1;
                    let rhs = self.level(lvl + 1)?;
                    lhs = RawExpr::Bin(op, Box::new(lhs), Box::new(rhs));
                }
                None => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<RawExpr, String> {
        match self.peek() {
            Some(Tok::Op("-")) => {
                self.pos += 1;
                Ok(RawExpr::Un(UnOp::Neg, Box::new(self.unary()?)))
            }
            Some(Tok::Op("!")) => {
                self.pos += 1;
                Ok(RawExpr::Un(UnOp::Not, Box::new(self.unary()?)))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<RawExpr, String> {
        let t = self.peek().cloned().ok_or("expected expression")?;
        self.pos += 1;
        match t {
            Tok::Num(n) => Ok(RawExpr::Lit(n)),
            Tok::Ident(name) => Ok(RawExpr::Reg(name)),
            Tok::At(name) => Ok(RawExpr::Label(name)),
            Tok::LParen => {
                let e = self.level(0)?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err("expected `)`".into()),
                }
            }
            other => Err(format!("unexpected token {other:?} in expression")),
        }
    }
}

fn parse_expr(toks: &[Tok]) -> Result<RawExpr, String> {
    if toks.is_empty() {
        return Err("expected expression".into());
    }
    let mut p = ExprParser { toks, pos: 0 };
    let e = p.level(0)?;
    if p.pos != toks.len() {
        return Err(format!("trailing tokens after expression: {:?}", &toks[p.pos..]));
    }
    Ok(e)
}

enum Target {
    Addr(u64),
    Label(String),
}

enum RawInstr {
    Skip,
    Assign(String, RawExpr),
    Load(String, RawExpr),
    Store(String, RawExpr),
    Jmp(RawExpr),
    Beqz(String, Target),
    Cmov(String, RawExpr, RawExpr),
    SpBarr,
    Call(String),
    Ret,
}

fn split_commas(toks: &[Tok]) -> Vec<&[Tok]> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, t) in toks.iter().enumerate() {
        match t {
            Tok::LParen => depth += 1,
            Tok::RParen => depth -= 1,
            Tok::Comma if depth == 0 => {
                parts.push(&toks[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&toks[start..]);
    parts
}

fn reg_operand(toks: &[Tok]) -> Result<String, String> {
    match toks {
        [Tok::Ident(n)] => Ok(n.clone()),
        _ => Err("expected a register name".into()),
    }
}

fn parse_instr(toks: &[Tok]) -> Result<RawInstr, String> {
    if let [Tok::Ident(x), Tok::Arrow, rest @ ..] = toks {
        return Ok(RawInstr::Assign(x.clone(), parse_expr(rest)?));
    }
    let (head, rest) = match toks.split_first() {
        Some((Tok::Ident(h), rest)) => (h.as_str(), rest),
        _ => return Err("expected an instruction".into()),
    };
    let args = || split_commas(rest);
    let arity = |n: usize| -> Result<Vec<&[Tok]>, String> {
        let a = args();
        if a.len() != n || a.iter().any(|p| p.is_empty()) {
            Err(format!("`{head}` takes {n} operand(s)"))
        } else {
            Ok(a)
        }
    };
    let nullary = |i: RawInstr| -> Result<RawInstr, String> {
        if rest.is_empty() {
            Ok(i)
        } else {
            Err(format!("`{head}` takes no operands"))
        }
    };
    match head {
        "skip" => nullary(RawInstr::Skip),
        "spbarr" => nullary(RawInstr::SpBarr),
        "ret" => nullary(RawInstr::Ret),
        "load" => {
            let a = arity(2)?;
            Ok(RawInstr::Load(reg_operand(a[0])?, parse_expr(a[1])?))
        }
        "store" => {
            let a = arity(2)?;
            Ok(RawInstr::Store(reg_operand(a[0])?, parse_expr(a[1])?))
        }
        "jmp" => {
            let a = arity(1)?;
            Ok(RawInstr::Jmp(parse_expr(a[0])?))
        }
        "beqz" => {
            let a = arity(2)?;
            let target = match a[1] {
                [Tok::Num(n)] => Target::Addr(*n),
                [Tok::Ident(l)] | [Tok::At(l)] => Target::Label(l.clone()),
                _ => return Err("branch target must be a label or an address".into()),
            };
            Ok(RawInstr::Beqz(reg_operand(a[0])?, target))
        }
        "cmov" => {
            let a = arity(3)?;
            Ok(RawInstr::Cmov(reg_operand(a[0])?, parse_expr(a[1])?, parse_expr(a[2])?))
        }
        "call" => match rest {
            [Tok::Ident(f)] => Ok(RawInstr::Call(f.clone())),
            _ => Err("`call` takes a function name".into()),
        },
        other => Err(format!("unknown instruction `{other}`")),
    }
}

struct Resolver<'a> {
    labels: &'a BTreeMap<String, u64>,
    line: usize,
    errors: &'a mut Vec<ParseError>,
}

impl Resolver<'_> {
    fn reg(&mut self, name: &str, writes: bool) -> Reg {
        if writes && name == "pc" {
            self.errors.push(ParseError {
                line: self.line,
                kind: ParseErrorKind::Reserved(name.to_string()),
            });
        }
        Reg::new(name)
    }

    fn expr(&mut self, e: RawExpr) -> Expr {
        match e {
            RawExpr::Lit(n) => Expr::Lit(n),
            RawExpr::Reg(r) => Expr::Reg(Reg::new(&r)),
            RawExpr::Label(l) => Expr::Lit(self.label(&l)),
            RawExpr::Un(op, a) => Expr::un(op, self.expr(*a)),
            RawExpr::Bin(op, a, b) => {
                let a = self.expr(*a);
                Expr::bin(op, a, self.expr(*b))
            }
        }
    }

    fn label(&mut self, l: &str) -> u64 {
        match self.labels.get(l) {
            Some(a) => *a,
            None => {
                self.errors.push(ParseError {
                    line: self.line,
                    kind: ParseErrorKind::UnresolvedLabel(l.to_string()),
                });
                0
            }
        }
    }

    fn instr(&mut self, i: RawInstr) -> Instr {
        match i {
            RawInstr::Skip => Instr::Skip,
            RawInstr::SpBarr => Instr::SpBarr,
            RawInstr::Ret => Instr::Ret,
            RawInstr::Assign(x, e) => Instr::Assign(self.reg(&x, true), self.expr(e)),
            RawInstr::Load(x, e) => Instr::Load(self.reg(&x, true), self.expr(e)),
            RawInstr::Store(x, e) => Instr::Store(self.reg(&x, false), self.expr(e)),
            RawInstr::Jmp(e) => Instr::Jmp(self.expr(e)),
            RawInstr::Beqz(x, t) => {
                let target = match t {
                    Target::Addr(a) => a,
                    Target::Label(l) => self.label(&l),
                };
                Instr::Beqz(self.reg(&x, false), target)
            }
            RawInstr::Cmov(x, e, c) => Instr::Cmov(self.reg(&x, true), self.expr(e), self.expr(c)),
            RawInstr::Call(f) => {
                if !self.labels.contains_key(&f) {
                    self.errors.push(ParseError {
                        line: self.line,
                        kind: ParseErrorKind::UnresolvedFunction(f.clone()),
                    });
                }
                Instr::Call(f)
            }
        }
    }
}

/// Parses program text. Addresses are assigned from 0 in textual order.
pub fn parse_program(text: &str) -> Result<Program, ParseErrors> {
    let mut errors = Vec::new();
    let mut labels: BTreeMap<String, u64> = BTreeMap::new();
    let mut raw: Vec<(usize, RawInstr)> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let code = line.split('#').next().unwrap_or("");
        // Leading `Name:` labels.
        let mut text_rest = code.trim();
        while let Some(colon) = text_rest.find(':') {
            let name = text_rest[..colon].trim();
            if name.is_empty()
                || !name.chars().next().is_some_and(is_ident_start)
                || !name.chars().all(is_ident_char)
            {
                break;
            }
            if name == "pc" || name == "sp" {
                errors.push(ParseError { line: lineno, kind: ParseErrorKind::Reserved(name.to_string()) });
            } else if labels.insert(name.to_string(), raw.len() as u64).is_some() {
                errors.push(ParseError { line: lineno, kind: ParseErrorKind::DuplicateLabel(name.to_string()) });
            }
            text_rest = text_rest[colon + 1..].trim();
        }
        if text_rest.is_empty() {
            continue;
        }
        let toks = match lex(text_rest) {
            Ok(t) => t,
            Err(msg) => {
                errors.push(ParseError { line: lineno, kind: ParseErrorKind::Syntax(msg) });
                continue;
            }
        };
        let rest: &[Tok] = &toks;
        match parse_instr(rest) {
            Ok(i) => raw.push((lineno, i)),
            Err(msg) => errors.push(ParseError { line: lineno, kind: ParseErrorKind::Syntax(msg) }),
        }
    }

    let mut code = Vec::with_capacity(raw.len());
    for (line, i) in raw {
        let mut r = Resolver { labels: &labels, line, errors: &mut errors };
        code.push(r.instr(i));
    }
    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(ParseErrors(errors));
    }
    Program::new(code, labels).map_err(|e| ParseErrors(vec![ParseError { line: 0, kind: ParseErrorKind::Program(e) }]))
}
