//! Path conditions, concrete evaluation, satisfiability over bounded
//! integer domains, model generation and the per-worker query cache.

mod cache;
mod interval;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use cache::QueryCache;
use interval::{Node, Problem};

use crate::lang::{Expr, SymDecl, UnboundVariable, DEFAULT_DOMAIN_CAP};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("path condition mentions undeclared input '{0}'")]
    UnknownVariable(String),
    #[error("domain of '{name}' has {size} values, cap is {cap}")]
    DomainCap { name: String, size: u64, cap: u64 },
    #[error("no model: path condition is unsatisfiable")]
    Unsat,
    #[error(transparent)]
    Unbound(#[from] UnboundVariable),
}

/// One branch decision: the (substituted) condition and which way it went.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub expr: Expr,
    pub taken: bool,
    /// 1-based ordinal of the symbolic branch that produced this constraint.
    pub depth: u32,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.taken {
            write!(f, "{}", self.expr)
        } else {
            write!(f, "!{}", self.expr)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PathCondition {
    constraints: Vec<Constraint>,
}

impl PathCondition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn last(&self) -> Option<&Constraint> {
        self.constraints.last()
    }

    /// Appends a decision; its depth is the next ordinal.
    pub fn push(&mut self, expr: Expr, taken: bool) {
        let depth = self.constraints.len() as u32 + 1;
        self.constraints.push(Constraint { expr, taken, depth });
    }

    pub fn extended(&self, expr: Expr, taken: bool) -> PathCondition {
        let mut pc = self.clone();
        pc.push(expr, taken);
        pc
    }

    /// The condition of the enclosing prefix (last decision dropped).
    pub fn parent(&self) -> PathCondition {
        let mut pc = self.clone();
        pc.constraints.pop();
        pc
    }

    pub fn inputs(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        for c in &self.constraints {
            c.expr.for_each_var(&mut |v| {
                out.insert(v.clone());
            });
        }
        out
    }

    pub fn satisfied_by(&self, test: &Test) -> Result<bool, SolveError> {
        for c in &self.constraints {
            if solve_path(test, &c.expr)? != c.taken {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Sorted, de-duplicated printed constraints. Conjunction is
    /// commutative and idempotent, so equal keys mean equal conditions.
    pub fn canonical_key(&self) -> String {
        let set: BTreeSet<String> = self.constraints.iter().map(ToString::to_string).collect();
        set.into_iter().collect::<Vec<_>>().join(" and ")
    }
}

impl FromIterator<(Expr, bool)> for PathCondition {
    fn from_iter<I: IntoIterator<Item = (Expr, bool)>>(iter: I) -> Self {
        let mut pc = PathCondition::new();
        for (e, t) in iter {
            pc.push(e, t);
        }
        pc
    }
}

impl fmt::Display for PathCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.constraints.is_empty() {
            return f.write_str("true");
        }
        f.write_str("(")?;
        for (i, c) in self.constraints.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// A concrete value for every symbolic input, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Test {
    values: Vec<(Arc<str>, i64)>,
}

impl Test {
    pub fn new(values: Vec<(Arc<str>, i64)>) -> Self {
        Test { values }
    }

    pub fn from_pairs(pairs: &[(&str, i64)]) -> Self {
        Test {
            values: pairs.iter().map(|(n, v)| (Arc::from(*n), *v)).collect(),
        }
    }

    fn from_decls(decls: &[SymDecl], vals: &[i64]) -> Self {
        Test {
            values: decls
                .iter()
                .zip(vals)
                .map(|(d, v)| (d.name.clone(), *v))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.values
            .iter()
            .find(|(n, _)| &**n == name)
            .map(|(_, v)| *v)
    }

    pub fn values(&self) -> &[(Arc<str>, i64)] {
        &self.values
    }

    /// Values in the order of `decls`, if the test is total over them.
    pub fn ordered(&self, decls: &[SymDecl]) -> Option<Vec<i64>> {
        decls.iter().map(|d| self.get(&d.name)).collect()
    }

    /// Wire form: u16 count, then per entry a u16 name length, the UTF-8
    /// name and an i64 value, all big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        crate::proto::encode_test(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Test, crate::proto::DecodeError> {
        crate::proto::decode_test(bytes)
    }

    /// Total over `decls` and every value inside its domain.
    pub fn conforms_to(&self, decls: &[SymDecl]) -> bool {
        self.values.len() == decls.len()
            && decls
                .iter()
                .all(|d| self.get(&d.name).is_some_and(|v| d.lo <= v && v <= d.hi))
    }
}

impl fmt::Display for Test {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (n, v)) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}={v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Sat(Test),
    Unsat,
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, Verdict::Sat(_))
    }

    pub fn model(self) -> Option<Test> {
        match self {
            Verdict::Sat(t) => Some(t),
            Verdict::Unsat => None,
        }
    }
}

/// Evaluates `expr` with locals from `env` and inputs from `test`.
pub fn evaluate_concrete(
    expr: &Expr,
    test: &Test,
    env: &HashMap<Arc<str>, i64>,
) -> Result<i64, SolveError> {
    Ok(expr.eval(&|name| env.get(name).copied().or_else(|| test.get(name)))?)
}

/// The branch a concrete test takes at `cond`.
pub fn solve_path(test: &Test, cond: &Expr) -> Result<bool, SolveError> {
    Ok(cond.eval(&|name| test.get(name))? != 0)
}

fn check_domains(decls: &[SymDecl], cap: u64) -> Result<(), SolveError> {
    for d in decls {
        if d.domain_size() > cap {
            return Err(SolveError::DomainCap {
                name: d.name.to_string(),
                size: d.domain_size(),
                cap,
            });
        }
    }
    Ok(())
}

fn solve_uncached(
    pc: &PathCondition,
    decls: &[SymDecl],
    index: &HashMap<Arc<str>, usize>,
) -> Result<Verdict, SolveError> {
    let atoms = pc
        .constraints
        .iter()
        .map(|c| Ok((Node::compile(&c.expr, index)?, c.taken)))
        .collect::<Result<Vec<_>, SolveError>>()?;
    Ok(match (Problem { atoms }).solve(decls) {
        Some(vals) => Verdict::Sat(Test::from_decls(decls, &vals)),
        None => Verdict::Unsat,
    })
}

fn index_of(decls: &[SymDecl]) -> HashMap<Arc<str>, usize> {
    decls
        .iter()
        .enumerate()
        .map(|(i, d)| (d.name.clone(), i))
        .collect()
}

/// Satisfiability within the declared domains. A satisfiable verdict
/// carries the lexicographically smallest model in declaration order.
pub fn check_sat(pc: &PathCondition, decls: &[SymDecl]) -> Result<Verdict, SolveError> {
    check_domains(decls, DEFAULT_DOMAIN_CAP)?;
    solve_uncached(pc, decls, &index_of(decls))
}

pub fn get_model(pc: &PathCondition, decls: &[SymDecl]) -> Result<Test, SolveError> {
    check_sat(pc, decls)?.model().ok_or(SolveError::Unsat)
}

/// `check_sat` through a memo table keyed by [`PathCondition::canonical_key`].
pub fn cache_query(
    cache: &mut QueryCache,
    pc: &PathCondition,
    decls: &[SymDecl],
) -> Result<Verdict, SolveError> {
    check_domains(decls, DEFAULT_DOMAIN_CAP)?;
    let index = index_of(decls);
    cache.get_or_solve(pc, || solve_uncached(pc, decls, &index))
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub domain_cap: u64,
    pub cache: bool,
    /// Artificial latency added to every query that reaches the search.
    pub query_delay: Option<Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            domain_cap: DEFAULT_DOMAIN_CAP,
            cache: true,
            query_delay: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub queries: u64,
    pub cache_hits: u64,
}

/// Solver bound to one program's input declarations.
#[derive(Debug)]
pub struct Solver {
    decls: Vec<SymDecl>,
    index: HashMap<Arc<str>, usize>,
    cache: Option<QueryCache>,
    delay: Option<Duration>,
    queries: u64,
}

impl Solver {
    pub fn new(decls: &[SymDecl], config: &SolverConfig) -> Result<Self, SolveError> {
        check_domains(decls, config.domain_cap)?;
        Ok(Solver {
            decls: decls.to_vec(),
            index: index_of(decls),
            cache: config.cache.then(QueryCache::new),
            delay: config.query_delay,
            queries: 0,
        })
    }

    pub fn decls(&self) -> &[SymDecl] {
        &self.decls
    }

    pub fn check(&mut self, pc: &PathCondition) -> Result<Verdict, SolveError> {
        self.queries += 1;
        let (decls, index, delay) = (&self.decls, &self.index, self.delay);
        let solve = || {
            if let Some(d) = delay {
                std::thread::sleep(d);
            }
            solve_uncached(pc, decls, index)
        };
        match &mut self.cache {
            Some(cache) => cache.get_or_solve(pc, solve),
            None => solve(),
        }
    }

    pub fn model(&mut self, pc: &PathCondition) -> Result<Test, SolveError> {
        self.check(pc)?.model().ok_or(SolveError::Unsat)
    }

    pub fn stats(&self) -> SolverStats {
        SolverStats {
            queries: self.queries,
            cache_hits: self.cache.as_ref().map_or(0, QueryCache::hits),
        }
    }
}
