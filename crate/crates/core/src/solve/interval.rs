//! Bounded-domain satisfiability: interval constraint propagation to a
//! fixpoint, then ordered enumeration over the narrowed domains.
//!
//! Bounds are tracked in `i128`. Whenever an operator's exact result range
//! leaves `i64` the program value may have wrapped, so that node reports
//! the full `i64` range and nothing is propagated through it.

use std::collections::HashMap;
use std::sync::Arc;

use super::SolveError;
use crate::lang::{BinOp, Expr, SymDecl, UnOp};

const MIN: i128 = i64::MIN as i128;
const MAX: i128 = i64::MAX as i128;
const MAX_ROUNDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Interval {
    pub lo: i128,
    pub hi: i128,
}

impl Interval {
    const FULL: Interval = Interval { lo: MIN, hi: MAX };
    const FALSE: Interval = Interval { lo: 0, hi: 0 };
    const TRUE: Interval = Interval { lo: 1, hi: 1 };
    const BOOL: Interval = Interval { lo: 0, hi: 1 };

    fn new(lo: i128, hi: i128) -> Self {
        Interval { lo, hi }
    }

    fn point(v: i128) -> Self {
        Interval { lo: v, hi: v }
    }

    fn is_empty(self) -> bool {
        self.lo > self.hi
    }

    fn singleton(self) -> Option<i128> {
        (self.lo == self.hi).then_some(self.lo)
    }

    fn excludes_zero(self) -> bool {
        self.lo > 0 || self.hi < 0
    }

    fn meet(self, o: Interval) -> Interval {
        Interval::new(self.lo.max(o.lo), self.hi.min(o.hi))
    }

    fn fits(self) -> bool {
        self.lo >= MIN && self.hi <= MAX
    }

    fn clip(self) -> Interval {
        if self.fits() {
            self
        } else {
            Interval::FULL
        }
    }

    fn truth(t: Option<bool>) -> Interval {
        match t {
            Some(true) => Interval::TRUE,
            Some(false) => Interval::FALSE,
            None => Interval::BOOL,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Const(i64),
    Var(usize),
    Un(UnOp, Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
}

impl Node {
    pub(crate) fn compile(e: &Expr, index: &HashMap<Arc<str>, usize>) -> Result<Node, SolveError> {
        Ok(match e {
            Expr::Const(c) => Node::Const(*c),
            Expr::Var(v) => Node::Var(
                *index
                    .get(v)
                    .ok_or_else(|| SolveError::UnknownVariable(v.to_string()))?,
            ),
            Expr::Unary(op, a) => Node::Un(*op, Box::new(Node::compile(a, index)?)),
            Expr::Binary(op, l, r) => Node::Bin(
                *op,
                Box::new(Node::compile(l, index)?),
                Box::new(Node::compile(r, index)?),
            ),
        })
    }

    fn eval(&self, vals: &[i64]) -> i64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => vals[*i],
            Node::Un(op, a) => op.apply(a.eval(vals)),
            Node::Bin(op, l, r) => op.apply(l.eval(vals), r.eval(vals)),
        }
    }

    fn mark_vars(&self, used: &mut [bool]) {
        match self {
            Node::Const(_) => {}
            Node::Var(i) => used[*i] = true,
            Node::Un(_, a) => a.mark_vars(used),
            Node::Bin(_, l, r) => {
                l.mark_vars(used);
                r.mark_vars(used);
            }
        }
    }
}

/// Exact (unclipped) result range of an arithmetic operator.
fn arith(op: BinOp, a: Interval, b: Interval) -> Interval {
    match op {
        BinOp::Add => Interval::new(a.lo + b.lo, a.hi + b.hi),
        BinOp::Sub => Interval::new(a.lo - b.hi, a.hi - b.lo),
        BinOp::Mul => {
            let c = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi];
            Interval::new(*c.iter().min().unwrap(), *c.iter().max().unwrap())
        }
        _ => unreachable!(),
    }
}

fn compare(op: BinOp, a: Interval, b: Interval) -> Interval {
    let lt = |a: Interval, b: Interval| {
        if a.hi < b.lo {
            Some(true)
        } else if a.lo >= b.hi {
            Some(false)
        } else {
            None
        }
    };
    let le = |a: Interval, b: Interval| {
        if a.hi <= b.lo {
            Some(true)
        } else if a.lo > b.hi {
            Some(false)
        } else {
            None
        }
    };
    let eq = if a.singleton().is_some() && a == b {
        Some(true)
    } else if a.meet(b).is_empty() {
        Some(false)
    } else {
        None
    };
    Interval::truth(match op {
        BinOp::Lt => lt(a, b),
        BinOp::Le => le(a, b),
        BinOp::Gt => lt(b, a),
        BinOp::Ge => le(b, a),
        BinOp::Eq => eq,
        BinOp::Ne => eq.map(|t| !t),
        BinOp::And => {
            if a.excludes_zero() && b.excludes_zero() {
                Some(true)
            } else if a == Interval::FALSE || b == Interval::FALSE {
                Some(false)
            } else {
                None
            }
        }
        BinOp::Or => {
            if a.excludes_zero() || b.excludes_zero() {
                Some(true)
            } else if a == Interval::FALSE && b == Interval::FALSE {
                Some(false)
            } else {
                None
            }
        }
        _ => unreachable!(),
    })
}

fn forward(n: &Node, doms: &[Interval]) -> Interval {
    match n {
        Node::Const(c) => Interval::point(*c as i128),
        Node::Var(i) => doms[*i],
        Node::Un(UnOp::Neg, a) => {
            let a = forward(a, doms);
            Interval::new(-a.hi, -a.lo).clip()
        }
        Node::Un(UnOp::Not, a) => {
            let a = forward(a, doms);
            Interval::truth(if a == Interval::FALSE {
                Some(true)
            } else if a.excludes_zero() {
                Some(false)
            } else {
                None
            })
        }
        Node::Bin(op, l, r) => {
            let (a, b) = (forward(l, doms), forward(r, doms));
            if op.is_boolean() {
                compare(*op, a, b)
            } else {
                arith(*op, a, b).clip()
            }
        }
    }
}

struct Empty;

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

/// Narrows variable domains so that `n` can only take values in `req`.
fn revise(n: &Node, req: Interval, doms: &mut [Interval]) -> Result<(), Empty> {
    let here = forward(n, doms).meet(req);
    if here.is_empty() {
        return Err(Empty);
    }
    match n {
        Node::Const(_) => {}
        Node::Var(i) => doms[*i] = doms[*i].meet(req),
        Node::Un(UnOp::Neg, a) => {
            let fa = forward(a, doms);
            if Interval::new(-fa.hi, -fa.lo).fits() {
                revise(a, Interval::new(-here.hi, -here.lo), doms)?;
            }
        }
        Node::Un(UnOp::Not, a) => match here.singleton() {
            Some(1) => revise(a, Interval::FALSE, doms)?,
            Some(0) => exclude(a, 0, doms)?,
            _ => {}
        },
        Node::Bin(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul), l, r) => {
            let (fl, fr) = (forward(l, doms), forward(r, doms));
            if !arith(*op, fl, fr).fits() {
                return Ok(());
            }
            match op {
                BinOp::Add => {
                    revise(l, Interval::new(here.lo - fr.hi, here.hi - fr.lo), doms)?;
                    let fl = forward(l, doms);
                    revise(r, Interval::new(here.lo - fl.hi, here.hi - fl.lo), doms)?;
                }
                BinOp::Sub => {
                    revise(l, Interval::new(here.lo + fr.lo, here.hi + fr.hi), doms)?;
                    let fl = forward(l, doms);
                    revise(r, Interval::new(fl.lo - here.hi, fl.hi - here.lo), doms)?;
                }
                _ => {
                    if let Some(c) = fr.singleton().filter(|c| *c != 0) {
                        revise(l, quotient(here, c), doms)?;
                    } else if let Some(c) = fl.singleton().filter(|c| *c != 0) {
                        revise(r, quotient(here, c), doms)?;
                    }
                }
            }
        }
        Node::Bin(op, l, r) => match here.singleton() {
            Some(1) => enforce(*op, l, r, doms)?,
            Some(0) => match negate(*op) {
                Some(neg) => enforce(neg, l, r, doms)?,
                None if *op == BinOp::And => {
                    if forward(l, doms).excludes_zero() {
                        revise(r, Interval::FALSE, doms)?;
                    }
                    if forward(r, doms).excludes_zero() {
                        revise(l, Interval::FALSE, doms)?;
                    }
                }
                None => {
                    revise(l, Interval::FALSE, doms)?;
                    revise(r, Interval::FALSE, doms)?;
                }
            },
            _ => {}
        },
    }
    if doms.iter().any(|d| d.is_empty()) {
        Err(Empty)
    } else {
        Ok(())
    }
}

fn quotient(req: Interval, c: i128) -> Interval {
    let (a, b) = (div_ceil(req.lo, c), div_floor(req.hi, c));
    let (c1, c2) = (div_ceil(req.hi, c), div_floor(req.lo, c));
    if c > 0 {
        Interval::new(a, b)
    } else {
        Interval::new(c1, c2)
    }
}

fn negate(op: BinOp) -> Option<BinOp> {
    Some(match op {
        BinOp::Lt => BinOp::Ge,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Ge => BinOp::Lt,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        _ => return None,
    })
}

/// Removes `v` from the range of `n` when it sits on a bound.
fn exclude(n: &Node, v: i128, doms: &mut [Interval]) -> Result<(), Empty> {
    let f = forward(n, doms);
    if f.lo == v {
        revise(n, Interval::new(v + 1, f.hi), doms)
    } else if f.hi == v {
        revise(n, Interval::new(f.lo, v - 1), doms)
    } else {
        Ok(())
    }
}

/// Makes the relation `l op r` hold (op taken as true).
fn enforce(op: BinOp, l: &Node, r: &Node, doms: &mut [Interval]) -> Result<(), Empty> {
    match op {
        BinOp::Lt | BinOp::Le => {
            let strict = (op == BinOp::Lt) as i128;
            let fr = forward(r, doms);
            revise(l, Interval::new(MIN, fr.hi - strict), doms)?;
            let fl = forward(l, doms);
            revise(r, Interval::new(fl.lo + strict, MAX), doms)
        }
        BinOp::Gt => enforce(BinOp::Lt, r, l, doms),
        BinOp::Ge => enforce(BinOp::Le, r, l, doms),
        BinOp::Eq => {
            let fr = forward(r, doms);
            revise(l, fr, doms)?;
            let fl = forward(l, doms);
            revise(r, fl, doms)
        }
        BinOp::Ne => {
            if let Some(v) = forward(r, doms).singleton() {
                exclude(l, v, doms)?;
            }
            if let Some(v) = forward(l, doms).singleton() {
                exclude(r, v, doms)?;
            }
            Ok(())
        }
        BinOp::And => {
            exclude(l, 0, doms)?;
            exclude(r, 0, doms)
        }
        BinOp::Or => {
            if forward(l, doms) == Interval::FALSE {
                exclude(r, 0, doms)?;
            }
            if forward(r, doms) == Interval::FALSE {
                exclude(l, 0, doms)?;
            }
            Ok(())
        }
        _ => unreachable!(),
    }
}

/// A conjunction of polarized expressions over indexed variables.
pub(crate) struct Problem {
    pub atoms: Vec<(Node, bool)>,
}

impl Problem {
    fn propagate(&self, doms: &mut [Interval]) -> Result<(), Empty> {
        for _ in 0..MAX_ROUNDS {
            let before = doms.to_vec();
            for (n, taken) in &self.atoms {
                if *taken {
                    exclude(n, 0, doms)?;
                    if forward(n, doms) == Interval::FALSE {
                        return Err(Empty);
                    }
                } else {
                    revise(n, Interval::FALSE, doms)?;
                }
            }
            if before == doms {
                break;
            }
        }
        Ok(())
    }

    fn holds(&self, vals: &[i64]) -> bool {
        self.atoms
            .iter()
            .all(|(n, taken)| (n.eval(vals) != 0) == *taken)
    }

    /// Lexicographically smallest satisfying assignment in declaration
    /// order, or `None` when the conjunction is unsatisfiable.
    pub fn solve(&self, decls: &[SymDecl]) -> Option<Vec<i64>> {
        let mut used = vec![false; decls.len()];
        for (n, _) in &self.atoms {
            n.mark_vars(&mut used);
        }
        // unconstrained inputs sit at their minimum
        let doms: Vec<Interval> = decls
            .iter()
            .zip(&used)
            .map(|(d, &u)| {
                if u {
                    Interval::new(d.lo as i128, d.hi as i128)
                } else {
                    Interval::point(d.lo as i128)
                }
            })
            .collect();
        self.search(doms)
    }

    fn search(&self, mut doms: Vec<Interval>) -> Option<Vec<i64>> {
        self.propagate(&mut doms).ok()?;
        match doms.iter().position(|d| d.singleton().is_none()) {
            None => {
                let vals: Vec<i64> = doms.iter().map(|d| d.lo as i64).collect();
                self.holds(&vals).then_some(vals)
            }
            Some(i) => (doms[i].lo..=doms[i].hi).find_map(|v| {
                let mut next = doms.clone();
                next[i] = Interval::point(v);
                self.search(next)
            }),
        }
    }
}
