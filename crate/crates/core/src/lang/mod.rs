//! The subject-program language: a small imperative language of bounded
//! symbolic integer inputs, lowered at parse time into basic blocks with
//! two-way branches.

mod interp;
mod parse;
mod print;
mod validate;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use interp::{run_concrete, ConcreteOutcome, ConcreteRun};
pub use parse::parse_program;
pub use validate::{validate, validate_with_cap, Diagnostic};

/// Default bound on `hi - lo + 1` for a symbolic input's domain.
pub const DEFAULT_DOMAIN_CAP: u64 = 65_536;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LangError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("validation failed: {}", join_diagnostics(.0))]
    Validation(Vec<Diagnostic>),
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unbound variable '{0}'")]
pub struct UnboundVariable(pub Arc<str>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// A symbolic input with an inclusive integer domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymDecl {
    pub name: Arc<str>,
    pub lo: i64,
    pub hi: i64,
}

impl SymDecl {
    pub fn new(name: &str, lo: i64, hi: i64) -> Self {
        SymDecl {
            name: name.into(),
            lo,
            hi,
        }
    }

    /// Number of values in the domain, zero when `lo > hi`.
    pub fn domain_size(&self) -> u64 {
        if self.lo > self.hi {
            0
        } else {
            (self.hi as i128 - self.lo as i128 + 1).min(u64::MAX as i128) as u64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => " and ",
            BinOp::Or => " or ",
        }
    }

    pub fn is_boolean(self) -> bool {
        !matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    /// Wrapping signed 64-bit semantics; comparisons and connectives yield 0 or 1.
    pub fn apply(self, l: i64, r: i64) -> i64 {
        match self {
            BinOp::Add => l.wrapping_add(r),
            BinOp::Sub => l.wrapping_sub(r),
            BinOp::Mul => l.wrapping_mul(r),
            BinOp::Lt => (l < r) as i64,
            BinOp::Le => (l <= r) as i64,
            BinOp::Gt => (l > r) as i64,
            BinOp::Ge => (l >= r) as i64,
            BinOp::Eq => (l == r) as i64,
            BinOp::Ne => (l != r) as i64,
            BinOp::And => (l != 0 && r != 0) as i64,
            BinOp::Or => (l != 0 || r != 0) as i64,
        }
    }
}

impl UnOp {
    pub fn apply(self, v: i64) -> i64 {
        match self {
            UnOp::Neg => v.wrapping_neg(),
            UnOp::Not => (v == 0) as i64,
        }
    }
}

/// Integer expression. Subtrees are reference counted so that symbolic
/// stores can share structure across forked states.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Var(Arc<str>),
    Unary(UnOp, Arc<Expr>),
    Binary(BinOp, Arc<Expr>, Arc<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.into())
    }

    pub fn unary(op: UnOp, e: Expr) -> Expr {
        Expr::Unary(op, Arc::new(e))
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Arc::new(l), Arc::new(r))
    }

    pub fn as_const(&self) -> Option<i64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn eval<F>(&self, lookup: &F) -> Result<i64, UnboundVariable>
    where
        F: Fn(&str) -> Option<i64>,
    {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => lookup(v).ok_or_else(|| UnboundVariable(v.clone()))?,
            Expr::Unary(op, e) => op.apply(e.eval(lookup)?),
            Expr::Binary(op, l, r) => op.apply(l.eval(lookup)?, r.eval(lookup)?),
        })
    }

    /// Calls `f` once per variable occurrence, left to right.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a Arc<str>)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(v),
            Expr::Unary(_, e) => e.for_each_var(f),
            Expr::Binary(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
        }
    }

    /// Replaces every variable with its binding and folds operators whose
    /// operands are all constant. No algebraic identities are applied, so
    /// the result is constant exactly when no bound value was symbolic.
    pub fn substitute<F>(&self, bind: &F) -> Result<Expr, UnboundVariable>
    where
        F: Fn(&str) -> Option<Expr>,
    {
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => bind(v).ok_or_else(|| UnboundVariable(v.clone()))?,
            Expr::Unary(op, e) => match e.substitute(bind)? {
                Expr::Const(c) => Expr::Const(op.apply(c)),
                s => Expr::Unary(*op, Arc::new(s)),
            },
            Expr::Binary(op, l, r) => match (l.substitute(bind)?, r.substitute(bind)?) {
                (Expr::Const(a), Expr::Const(b)) => Expr::Const(op.apply(a, b)),
                (a, b) => Expr::Binary(*op, Arc::new(a), Arc::new(b)),
            },
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => f.write_str(v),
            // `-(5)` keeps a negated literal distinct from the literal `-5`.
            Expr::Unary(UnOp::Neg, e) if matches!(**e, Expr::Const(_)) => write!(f, "-({e})"),
            Expr::Unary(UnOp::Neg, e) => write!(f, "-{e}"),
            Expr::Unary(UnOp::Not, e) => write!(f, "!{e}"),
            Expr::Binary(op, l, r) => write!(f, "({l}{}{r})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instr {
    Assign {
        var: Arc<str>,
        expr: Expr,
    },
    Branch {
        cond: Expr,
        on_true: BlockId,
        on_false: BlockId,
    },
    Jump(BlockId),
    Exit(i64),
    Error(String),
}

impl Instr {
    pub fn is_terminator(&self) -> bool {
        !matches!(self, Instr::Assign { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasicBlock {
    pub id: BlockId,
    pub label: String,
    pub instrs: Vec<Instr>,
}

impl BasicBlock {
    pub fn terminator(&self) -> Option<&Instr> {
        self.instrs.last().filter(|i| i.is_terminator())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub name: String,
    pub inputs: Vec<SymDecl>,
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
}

impl Program {
    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id.0]
    }

    pub fn input(&self, name: &str) -> Option<&SymDecl> {
        self.inputs.iter().find(|d| &*d.name == name)
    }

    /// Hex SHA-256 of the canonical printed form; identifies a program
    /// independently of source formatting.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_string().as_bytes()))
    }
}
