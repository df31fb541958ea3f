//! Random small programs for the property suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use muspec::lang::{AddrRange, BinOp, Expr, Instr, MemInit, Policy, Program, Reg};
use proptest::prelude::*;

pub const REGS: [&str; 4] = ["a", "b", "c", "d"];

fn reg(x: u8) -> Reg {
    Reg::new(REGS[x as usize % 4])
}

fn expr(y: u8, z: u8) -> Expr {
    let r = Expr::Reg(reg(z));
    match y % 6 {
        0 => Expr::Lit(u64::from(z % 16)),
        1 => r,
        2 => Expr::bin(BinOp::Add, r, Expr::Lit(u64::from(y / 6 % 16))),
        3 => Expr::bin(BinOp::And, r, Expr::Lit(3)),
        4 => Expr::bin(BinOp::Lt, r, Expr::Reg(reg(y / 6))),
        _ => Expr::bin(BinOp::Xor, r, Expr::Reg(reg(y / 6))),
    }
}

/// Addresses stay mostly inside the 14 modelled cells.
fn addr(y: u8, z: u8) -> Expr {
    match y % 4 {
        0 | 1 => Expr::Lit(u64::from(z % 14)),
        2 => Expr::bin(BinOp::Add, Expr::Reg(reg(z)), Expr::Lit(u64::from(y / 4 % 12))),
        _ => Expr::Reg(reg(z)),
    }
}

/// Builds a program from raw tuples; the last field of each tuple and
/// `f` only matter for control flow. Branches go forward except for an
/// occasional backward edge.
pub fn build(raw: &[(u8, u8, u8, u8)], f: u8) -> Program {
    let n = raw.len() as u64;
    let forward = |i: u64, y: u8| i + 1 + u64::from(y) % (n - i);
    let code: Vec<Instr> = raw
        .iter()
        .enumerate()
        .map(|(i, &(k, x, y, z))| {
            let i = i as u64;
            match k % 20 {
                0 => Instr::Skip,
                1..=3 => Instr::Assign(reg(x), expr(y, z)),
                4..=6 => Instr::Load(reg(x), addr(y, z)),
                7..=9 => Instr::Store(reg(x), addr(y, z)),
                10..=12 => {
                    let target = if y % 8 == 0 { u64::from(z) % (i + 1) } else { forward(i, y) };
                    Instr::Beqz(reg(x), target)
                }
                13 => Instr::Jmp(Expr::Lit(forward(i, y))),
                14 => Instr::Cmov(reg(x), expr(y, z), Expr::Reg(reg(z / 4))),
                15 => Instr::SpBarr,
                16 => Instr::Call("F".into()),
                17 => Instr::Ret,
                18 => Instr::Assign(Reg::sp(), Expr::bin(BinOp::Add, Expr::Reg(Reg::sp()), Expr::Lit(8))),
                _ => Instr::Beqz(reg(x), forward(i, y)),
            }
        })
        .collect();
    let functions = BTreeMap::from([("F".to_string(), u64::from(f) % (n + 1))]);
    Program::new(code, functions).expect("generated programs are well formed")
}

/// `a`, `b` public; `c`, `d` secret; memory public except cells 12 and 13.
pub fn policy(a: u8, b: u8) -> Policy {
    Policy {
        public_registers: ["a", "b"].iter().map(|s| s.to_string()).collect(),
        public_memory: vec![AddrRange { lo: 0, hi: 12 }, AddrRange { lo: 14, hi: 256 }],
        init_memory: vec![MemInit { addr: 3, value: u64::from(a % 4) }, MemInit { addr: 200, value: 255 }],
        init_registers: BTreeMap::from([
            ("a".to_string(), u64::from(a % 16)),
            ("b".to_string(), u64::from(b % 16)),
            ("sp".to_string(), 200),
        ]),
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub program: Program,
    pub policy: Arc<Policy>,
}

pub fn case_strategy(max_len: usize) -> impl Strategy<Value = Case> {
    (prop::collection::vec(any::<(u8, u8, u8, u8)>(), 1..=max_len), any::<u8>(), any::<u8>(), any::<u8>())
        .prop_map(|(raw, f, a, b)| Case { program: build(&raw, f), policy: Arc::new(policy(a, b)) })
}
