use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::value::Width;

/// A register name. `pc` and `sp` are the designated program counter and
/// stack pointer.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(Arc<str>);

impl Reg {
    pub fn new(name: &str) -> Reg {
        Reg(Arc::from(name))
    }

    pub fn pc() -> Reg {
        Reg::new("pc")
    }

    pub fn sp() -> Reg {
        Reg::new("sp")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_pc(&self) -> bool {
        &*self.0 == "pc"
    }

    pub fn is_sp(&self) -> bool {
        &*self.0 == "sp"
    }
}

impl fmt::Debug for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Reg {
    fn from(s: &str) -> Self {
        Reg::new(s)
    }
}

impl Serialize for Reg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Reg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Reg::new(&s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    /// Two's complement negation.
    Neg,
    /// Logical not: 1 if the operand is 0, else 0.
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Lt,
    Eq,
}

impl UnOp {
    pub fn apply(self, v: u64, w: Width) -> u64 {
        match self {
            UnOp::Neg => w.wrap(v.wrapping_neg()),
            UnOp::Not => (v == 0) as u64,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Not => "!",
        }
    }
}

impl BinOp {
    pub fn apply(self, a: u64, b: u64, w: Width) -> u64 {
        let r = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
            BinOp::Shl => {
                if b >= w.bits() as u64 {
                    0
                } else {
                    a << b
                }
            }
            BinOp::Shr => {
                if b >= w.bits() as u64 {
                    0
                } else {
                    a >> b
                }
            }
            BinOp::Lt => (a < b) as u64,
            BinOp::Eq => (a == b) as u64,
        };
        w.wrap(r)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Lt => "<",
            BinOp::Eq => "==",
        }
    }

    pub const ALL: [BinOp; 10] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Lt,
        BinOp::Eq,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(u64),
    Reg(Reg),
    Un(UnOp, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn reg(name: &str) -> Expr {
        Expr::Reg(Reg::new(name))
    }

    pub fn un(op: UnOp, e: Expr) -> Expr {
        Expr::Un(op, Box::new(e))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Registers mentioned by the expression, in left-to-right order.
    pub fn registers(&self) -> Vec<&Reg> {
        let mut out = Vec::new();
        self.collect_regs(&mut out);
        out
    }

    fn collect_regs<'a>(&'a self, out: &mut Vec<&'a Reg>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Reg(r) => out.push(r),
            Expr::Un(_, e) => e.collect_regs(out),
            Expr::Bin(_, a, b) => {
                a.collect_regs(out);
                b.collect_regs(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(n) => write!(f, "{n}"),
            Expr::Reg(r) => write!(f, "{r}"),
            Expr::Un(op, e) => write!(f, "{}({})", op.symbol(), e),
            Expr::Bin(op, a, b) => write!(f, "({} {} {})", a, op.symbol(), b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("undefined register `{0}`")]
    UndefinedRegister(Reg),
}

/// Strict evaluation of `e` under a register lookup. Literals are wrapped
/// to the value width.
pub fn eval_with<F>(e: &Expr, lookup: &F, w: Width) -> Result<u64, EvalError>
where
    F: Fn(&Reg) -> Option<u64>,
{
    Ok(match e {
        Expr::Lit(n) => w.wrap(*n),
        Expr::Reg(r) => w.wrap(lookup(r).ok_or_else(|| EvalError::UndefinedRegister(r.clone()))?),
        Expr::Un(op, a) => op.apply(eval_with(a, lookup, w)?, w),
        Expr::Bin(op, a, b) => {
            let x = eval_with(a, lookup, w)?;
            let y = eval_with(b, lookup, w)?;
            op.apply(x, y, w)
        }
    })
}

/// Evaluates `e` against an explicit register file.
pub fn eval_expr(e: &Expr, regs: &BTreeMap<Reg, u64>, w: Width) -> Result<u64, EvalError> {
    eval_with(e, &|r: &Reg| regs.get(r).copied(), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn regs(pairs: &[(&str, u64)]) -> BTreeMap<Reg, u64> {
        pairs.iter().map(|(n, v)| (Reg::new(n), *v)).collect()
    }

    #[test]
    fn literal() {
        assert_eq!(eval_expr(&Expr::Lit(7), &regs(&[]), Width::DEFAULT), Ok(7));
    }

    #[test]
    fn increment() {
        let e = Expr::bin(BinOp::Add, Expr::reg("x"), Expr::Lit(1));
        assert_eq!(eval_expr(&e, &regs(&[("x", 41)]), Width::DEFAULT), Ok(42));
    }

    #[test]
    fn subtraction_wraps_at_width() {
        // reference: (0 - 1) mod 2^8 with big integers
        let modulus = BigInt::from(1u32) << 8;
        let expected = ((BigInt::from(0) - BigInt::from(1)) % &modulus + &modulus) % &modulus;
        let expected = u64::try_from(expected).unwrap();
        let e = Expr::bin(BinOp::Sub, Expr::reg("x"), Expr::reg("y"));
        let got = eval_expr(&e, &regs(&[("x", 0), ("y", 1)]), Width::new(8).unwrap()).unwrap();
        assert_eq!(got, expected);
        assert_eq!(got, 255);
    }

    #[test]
    fn undefined_register() {
        let e = Expr::reg("nope");
        assert_eq!(
            eval_expr(&e, &regs(&[]), Width::DEFAULT),
            Err(EvalError::UndefinedRegister(Reg::new("nope")))
        );
    }

    #[test]
    fn operators_match_bigint_reference() {
        let w = Width::new(5).unwrap();
        let m = BigInt::from(32);
        for a in 0..32u64 {
            for b in 0..32u64 {
                let (ba, bb) = (BigInt::from(a), BigInt::from(b));
                let r = |x: BigInt| -> u64 { (((x % &m) + &m) % &m).try_into().unwrap() };
                assert_eq!(BinOp::Add.apply(a, b, w), r(&ba + &bb));
                assert_eq!(BinOp::Sub.apply(a, b, w), r(&ba - &bb));
                assert_eq!(BinOp::Mul.apply(a, b, w), r(&ba * &bb));
                let shl = if b >= 5 { 0 } else { r(&ba << b as usize) };
                assert_eq!(BinOp::Shl.apply(a, b, w), shl);
            }
            assert_eq!(UnOp::Neg.apply(a, w), r_neg(a));
        }
        fn r_neg(a: u64) -> u64 {
            (32 - a) % 32
        }
    }
}
