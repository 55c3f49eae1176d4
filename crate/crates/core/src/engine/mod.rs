//! Symbolic executor with test-depth bounded branching.
//!
//! A region of the execution tree is named by a [`TestDepthPair`]: the
//! test decides every symbolic branch above the pair's depth (the untaken
//! sibling is kept as a suspended state), and below it every satisfiable
//! direction is explored. Depth counts symbolic branches only; branches
//! whose condition folds to a constant are followed without consuming
//! depth.

mod search;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

pub use search::{SearchStrategy, Searcher, UnknownStrategy};

use crate::lang::{BlockId, Expr, Instr, Program, UnboundVariable};
use crate::solve::{
    solve_path, PathCondition, SolveError, Solver, SolverConfig, SolverStats, Test,
};

pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Unbound(#[from] UnboundVariable),
    #[error("replay diverged at depth {depth}: test {test} does not follow the state's path")]
    ReplayDiverged { depth: u32, test: String },
    #[error("state is not positioned at a branch")]
    NotAtBranch,
    #[error("test {0} is not total over the declared inputs or leaves a domain")]
    InvalidTest(String),
    #[error("test depth {test_depth} exceeds final depth {final_depth}")]
    DepthOutOfRange { test_depth: u32, final_depth: u32 },
}

/// Branch decisions from the root; bit i is the decision at depth i + 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathVector(Vec<bool>);

impl PathVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        PathVector(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn starts_with(&self, prefix: &PathVector) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

impl fmt::Display for PathVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid path vector '{0}'")]
pub struct InvalidPath(pub String);

impl FromStr for PathVector {
    type Err = InvalidPath;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(InvalidPath(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(PathVector)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Termination {
    Exit(i64),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Status {
    Active,
    Suspended,
    Terminated(Termination),
    /// Halted at a symbolic branch with depth equal to the final depth.
    Frontier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecState {
    /// Creation order within one engine; the root is always 0.
    pub id: u64,
    pub block: BlockId,
    pub instr: usize,
    /// Symbolic store: every variable maps to an expression over inputs.
    pub env: BTreeMap<Arc<str>, Expr>,
    pub pc: PathCondition,
    pub path: PathVector,
    pub status: Status,
}

impl ExecState {
    pub fn depth(&self) -> u32 {
        self.path.len() as u32
    }
}

pub fn path_of(state: &ExecState) -> PathVector {
    state.path.clone()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TestDepthPair {
    pub test: Test,
    pub depth: u32,
}

impl fmt::Display for TestDepthPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.test, self.depth)
    }
}

/// The region being explored: guided by `test` above `test_depth`,
/// bounded by `final_depth`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionBounds {
    pub test: Test,
    pub test_depth: u32,
    pub final_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResumeOrder {
    /// Deepest matching suspended state, then creation order.
    #[default]
    Deepest,
    /// First matching state in list order.
    List,
}

impl FromStr for ResumeOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deepest" => Ok(ResumeOrder::Deepest),
            "list" => Ok(ResumeOrder::List),
            _ => Err(format!(
                "unknown resume order '{s}' (expected list or deepest)"
            )),
        }
    }
}

/// Picks the suspended state to resume for a new pair. Only states that
/// are ancestors of the pair's prefix qualify: depth at most `test_depth`
/// and a path condition the test satisfies.
pub fn find_resumable(
    suspended: &[ExecState],
    test: &Test,
    test_depth: u32,
    order: ResumeOrder,
) -> Result<Option<usize>, SolveError> {
    let mut best: Option<usize> = None;
    for (i, s) in suspended.iter().enumerate() {
        if s.depth() > test_depth || !s.pc.satisfied_by(test)? {
            continue;
        }
        match order {
            ResumeOrder::List => return Ok(Some(i)),
            ResumeOrder::Deepest => {
                if best.is_none_or(|b| suspended[b].depth() < s.depth()) {
                    best = Some(i);
                }
            }
        }
    }
    Ok(best)
}

#[derive(Debug)]
pub struct BranchOutcome {
    /// Children to keep exploring (`Active`), or the state itself when it
    /// was halted at the final depth (`Frontier`).
    pub successors: Vec<ExecState>,
    /// The untaken sibling during guided replay.
    pub suspended: Option<ExecState>,
}

#[derive(Debug)]
pub enum Advance {
    Terminated(ExecState),
    Branched(BranchOutcome),
    OutOfSteps(ExecState),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Instruction budget per region.
    pub max_steps: u64,
    pub solver: SolverConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_steps: DEFAULT_MAX_STEPS,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counters {
    states_created: u64,
    states_suspended: u64,
    instructions: u64,
}

/// Per-region statistics, as carried in a worker's `Finish`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionStats {
    pub states_created: u64,
    pub states_suspended: u64,
    pub solver_queries: u64,
    pub cache_hits: u64,
    pub instructions: u64,
    pub wall_micros: u64,
    /// The step budget ran out before the region was exhausted.
    pub partial: bool,
    pub completed: Vec<PathVector>,
    pub frontier: Vec<PathVector>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletedPath {
    pub path: PathVector,
    pub pc: PathCondition,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct RegionResult {
    pub completed: Vec<CompletedPath>,
    pub frontier: Vec<ExecState>,
    pub suspended: Vec<ExecState>,
    pub stats: RegionStats,
}

impl RegionResult {
    pub fn completed_paths(&self) -> Vec<PathVector> {
        self.completed.iter().map(|c| c.path.clone()).collect()
    }
}

pub struct Engine<'p> {
    program: &'p Program,
    solver: Solver,
    max_steps: u64,
    next_id: u64,
    counters: Counters,
}

impl<'p> Engine<'p> {
    pub fn new(program: &'p Program, config: EngineConfig) -> Result<Self, EngineError> {
        Ok(Engine {
            program,
            solver: Solver::new(&program.inputs, &config.solver)?,
            max_steps: config.max_steps,
            next_id: 1,
            counters: Counters::default(),
        })
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn solver_stats(&self) -> SolverStats {
        self.solver.stats()
    }

    pub fn initial_state(&self) -> ExecState {
        ExecState {
            id: 0,
            block: self.program.entry,
            instr: 0,
            env: self
                .program
                .inputs
                .iter()
                .map(|d| (d.name.clone(), Expr::Var(d.name.clone())))
                .collect(),
            pc: PathCondition::new(),
            path: PathVector::new(),
            status: Status::Active,
        }
    }

    /// Test whose replay reaches `pc`'s prefix; lexicographic minimum.
    pub fn model_of(&mut self, pc: &PathCondition) -> Result<Test, EngineError> {
        Ok(self.solver.model(pc)?)
    }

    pub fn pair_for(&mut self, state: &ExecState) -> Result<TestDepthPair, EngineError> {
        Ok(TestDepthPair {
            test: self.model_of(&state.pc)?,
            depth: state.depth(),
        })
    }

    fn child(
        &mut self,
        parent: &ExecState,
        cond: &Expr,
        taken: bool,
        target: BlockId,
    ) -> ExecState {
        let id = self.next_id;
        self.next_id += 1;
        self.counters.states_created += 1;
        let mut path = parent.path.clone();
        path.push(taken);
        ExecState {
            id,
            block: target,
            instr: 0,
            env: parent.env.clone(),
            pc: parent.pc.extended(cond.clone(), taken),
            path,
            status: Status::Active,
        }
    }

    /// Handles the branch `state` is positioned at, with `cond` already
    /// substituted through the state's store.
    pub fn step_branch(
        &mut self,
        mut state: ExecState,
        cond: Expr,
        bounds: &RegionBounds,
    ) -> Result<BranchOutcome, EngineError> {
        let Some(Instr::Branch {
            on_true, on_false, ..
        }) = self.program.block(state.block).instrs.get(state.instr)
        else {
            return Err(EngineError::NotAtBranch);
        };
        let (on_true, on_false) = (*on_true, *on_false);

        if let Some(c) = cond.as_const() {
            state.block = if c != 0 { on_true } else { on_false };
            state.instr = 0;
            return Ok(BranchOutcome {
                successors: vec![state],
                suspended: None,
            });
        }

        let depth = state.depth();
        if depth >= bounds.final_depth {
            state.status = Status::Frontier;
            return Ok(BranchOutcome {
                successors: vec![state],
                suspended: None,
            });
        }

        if depth < bounds.test_depth {
            if let Some(last) = state.pc.last() {
                if solve_path(&bounds.test, &last.expr)? != last.taken {
                    return Err(EngineError::ReplayDiverged {
                        depth,
                        test: bounds.test.to_string(),
                    });
                }
            }
            let taken = solve_path(&bounds.test, &cond)?;
            let t = self.child(&state, &cond, true, on_true);
            let f = self.child(&state, &cond, false, on_false);
            let (follow, mut other) = if taken { (t, f) } else { (f, t) };
            other.status = Status::Suspended;
            self.counters.states_suspended += 1;
            return Ok(BranchOutcome {
                successors: vec![follow],
                suspended: Some(other),
            });
        }

        let t = self.child(&state, &cond, true, on_true);
        let f = self.child(&state, &cond, false, on_false);
        let mut successors = Vec::with_capacity(2);
        for c in [t, f] {
            if self.solver.check(&c.pc)?.is_sat() {
                successors.push(c);
            }
        }
        Ok(BranchOutcome {
            successors,
            suspended: None,
        })
    }

    /// Executes `state` until it terminates, reaches a symbolic branch, or
    /// `budget` instructions have been spent.
    pub fn advance(
        &mut self,
        mut state: ExecState,
        bounds: &RegionBounds,
        budget: &mut u64,
    ) -> Result<Advance, EngineError> {
        let program = self.program;
        loop {
            if *budget == 0 {
                return Ok(Advance::OutOfSteps(state));
            }
            *budget -= 1;
            self.counters.instructions += 1;
            match &program.block(state.block).instrs[state.instr] {
                Instr::Assign { var, expr } => {
                    let env = &state.env;
                    let value = expr.substitute(&|n| env.get(n).cloned())?;
                    state.env.insert(var.clone(), value);
                    state.instr += 1;
                }
                Instr::Jump(t) => {
                    state.block = *t;
                    state.instr = 0;
                }
                Instr::Exit(code) => {
                    state.status = Status::Terminated(Termination::Exit(*code));
                    return Ok(Advance::Terminated(state));
                }
                Instr::Error(label) => {
                    state.status = Status::Terminated(Termination::Error(label.clone()));
                    return Ok(Advance::Terminated(state));
                }
                Instr::Branch { cond, .. } => {
                    let env = &state.env;
                    let cond = cond.substitute(&|n| env.get(n).cloned())?;
                    if cond.as_const().is_some() {
                        let mut out = self.step_branch(state, cond, bounds)?;
                        state = out
                            .successors
                            .pop()
                            .expect("concrete branch has one successor");
                        continue;
                    }
                    return Ok(Advance::Branched(self.step_branch(state, cond, bounds)?));
                }
            }
        }
    }

    pub fn begin_region(
        &mut self,
        mut state: ExecState,
        bounds: RegionBounds,
        strategy: SearchStrategy,
    ) -> Result<Region, EngineError> {
        if bounds.test_depth > bounds.final_depth {
            return Err(EngineError::DepthOutOfRange {
                test_depth: bounds.test_depth,
                final_depth: bounds.final_depth,
            });
        }
        if !bounds.test.conforms_to(&self.program.inputs) {
            return Err(EngineError::InvalidTest(bounds.test.to_string()));
        }
        if bounds.test_depth > 0 && !state.pc.satisfied_by(&bounds.test)? {
            return Err(EngineError::ReplayDiverged {
                depth: state.depth(),
                test: bounds.test.to_string(),
            });
        }
        state.status = Status::Active;
        Ok(Region {
            searcher: Searcher::new(strategy),
            budget: self.max_steps,
            active: vec![state],
            completed: Vec::new(),
            frontier: Vec::new(),
            suspended: Vec::new(),
            partial: false,
            start_counters: self.counters,
            start_solver: self.solver.stats(),
            started: Instant::now(),
            bounds,
        })
    }

    /// Explores the region of `(test, test_depth)` below `state` to
    /// exhaustion.
    pub fn start_execution(
        &mut self,
        state: ExecState,
        test: &Test,
        test_depth: u32,
        final_depth: u32,
        strategy: SearchStrategy,
    ) -> Result<RegionResult, EngineError> {
        let bounds = RegionBounds {
            test: test.clone(),
            test_depth,
            final_depth,
        };
        let mut region = self.begin_region(state, bounds, strategy)?;
        while region.step(self)? {}
        Ok(region.finish(self))
    }
}

/// An in-progress region. Driving it one [`Region::step`] at a time lets
/// the caller interleave message handling between state selections.
pub struct Region {
    bounds: RegionBounds,
    searcher: Searcher,
    budget: u64,
    active: Vec<ExecState>,
    completed: Vec<CompletedPath>,
    frontier: Vec<ExecState>,
    suspended: Vec<ExecState>,
    partial: bool,
    start_counters: Counters,
    start_solver: SolverStats,
    started: Instant,
}

impl Region {
    pub fn bounds(&self) -> &RegionBounds {
        &self.bounds
    }

    pub fn active(&self) -> &[ExecState] {
        &self.active
    }

    pub fn is_done(&self) -> bool {
        self.active.is_empty()
    }

    /// Advances one selected state. Returns whether active states remain.
    pub fn step(&mut self, engine: &mut Engine<'_>) -> Result<bool, EngineError> {
        let Some(i) = self.searcher.select(&self.active) else {
            return Ok(false);
        };
        let state = self.active.swap_remove(i);
        match engine.advance(state, &self.bounds, &mut self.budget)? {
            Advance::Terminated(s) => {
                let Status::Terminated(termination) = s.status else {
                    unreachable!()
                };
                self.completed.push(CompletedPath {
                    path: s.path,
                    pc: s.pc,
                    termination,
                });
            }
            Advance::Branched(out) => {
                for s in out.successors {
                    match s.status {
                        Status::Frontier => self.frontier.push(s),
                        _ => self.active.push(s),
                    }
                }
                self.suspended.extend(out.suspended);
            }
            Advance::OutOfSteps(_) => {
                self.partial = true;
            }
        }
        Ok(!self.active.is_empty())
    }

    /// Removes and returns the shallowest active state (earliest created on
    /// ties) when more than `threshold` states are active. States still
    /// inside the guided prefix never qualify.
    pub fn take_shallowest(&mut self, threshold: usize) -> Option<ExecState> {
        if self.active.len() <= threshold {
            return None;
        }
        let test_depth = self.bounds.test_depth;
        let (i, _) = self
            .active
            .iter()
            .enumerate()
            .filter(|(_, s)| s.depth() >= test_depth)
            .min_by_key(|(_, s)| (s.depth(), s.id))?;
        Some(self.active.remove(i))
    }

    pub fn finish(self, engine: &Engine<'_>) -> RegionResult {
        let solver = engine.solver.stats();
        let c = engine.counters;
        let stats = RegionStats {
            states_created: c.states_created - self.start_counters.states_created,
            states_suspended: c.states_suspended - self.start_counters.states_suspended,
            solver_queries: solver.queries - self.start_solver.queries,
            cache_hits: solver.cache_hits - self.start_solver.cache_hits,
            instructions: c.instructions - self.start_counters.instructions,
            wall_micros: self.started.elapsed().as_micros() as u64,
            partial: self.partial || !self.active.is_empty(),
            completed: self.completed.iter().map(|c| c.path.clone()).collect(),
            frontier: self.frontier.iter().map(path_of).collect(),
        };
        RegionResult {
            completed: self.completed,
            frontier: self.frontier,
            suspended: self.suspended,
            stats,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, run_concrete, BinOp};
    use crate::solve::get_model;

    fn find_middle() -> Program {
        parse_program(include_str!("../../../../corpus/find_middle.tdp")).unwrap()
    }

    fn lt(a: &str, b: &str) -> Expr {
        Expr::binary(BinOp::Lt, Expr::var(a), Expr::var(b))
    }

    fn pv(s: &str) -> PathVector {
        s.parse().unwrap()
    }

    fn sorted(mut v: Vec<PathVector>) -> Vec<PathVector> {
        v.sort();
        v
    }

    fn t3_model(p: &Program) -> Test {
        let pc: PathCondition = [
            (lt("x", "y"), false),
            (lt("x", "z"), false),
            (lt("y", "z"), false),
        ]
        .into_iter()
        .collect();
        get_model(&pc, &p.inputs).unwrap()
    }

    fn guided(test: &[(&str, i64)], test_depth: u32) -> RegionBounds {
        RegionBounds {
            test: Test::from_pairs(test),
            test_depth,
            final_depth: 3,
        }
    }

    #[test]
    fn initial_state_is_root() {
        let p = find_middle();
        let e = Engine::new(&p, EngineConfig::default()).unwrap();
        let s = e.initial_state();
        assert_eq!(s.depth(), 0);
        assert!(s.pc.is_empty());
        assert_eq!(s.status, Status::Active);
        assert_eq!(s.env.get("x"), Some(&Expr::var("x")));
        assert_eq!(s, e.initial_state());
        assert!(crate::solve::check_sat(&s.pc, &p.inputs).unwrap().is_sat());
    }

    #[test]
    fn guided_first_branch_suspends_true_child() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let bounds = guided(&[("x", 1), ("y", 0), ("z", 0)], 2);
        let mut budget = 100;
        let Advance::Branched(out) = e.advance(e.initial_state(), &bounds, &mut budget).unwrap()
        else {
            panic!()
        };
        assert_eq!(out.successors.len(), 1);
        let taken = &out.successors[0];
        assert_eq!(taken.path, pv("0"));
        assert_eq!(taken.status, Status::Active);
        let c = out.suspended.unwrap();
        assert_eq!(c.path, pv("1"));
        assert_eq!(c.status, Status::Suspended);
        assert_eq!(c.pc.to_string(), "((x<y))");
        assert_eq!(e.solver_stats().queries, 0);
    }

    #[test]
    fn below_test_depth_both_children_explored() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let bounds = guided(&[("x", 1), ("y", 0), ("z", 0)], 2);
        let r = e
            .start_execution(e.initial_state(), &bounds.test, 2, 3, SearchStrategy::Dfs)
            .unwrap();
        assert_eq!(sorted(r.completed_paths()), vec![pv("000"), pv("001")]);
    }

    #[test]
    fn concrete_branch_does_not_consume_depth() {
        let p = parse_program("program p;\nsym x in [0, 3];\nblock a {\n  br (1) b c;\n}\nblock b {\n  exit(1);\n}\nblock c {\n  exit(2);\n}\n")
            .unwrap();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let bounds = guided(&[("x", 0)], 0);
        let out = e
            .step_branch(e.initial_state(), Expr::Const(1), &bounds)
            .unwrap();
        assert_eq!(out.successors.len(), 1);
        assert_eq!(out.successors[0].depth(), 0);
        assert_eq!(out.successors[0].block, BlockId(1));
        assert!(out.suspended.is_none());
    }

    #[test]
    fn step_branch_requires_branch_position() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let mut s = e.initial_state();
        s.block = BlockId(p.blocks.len() - 1);
        let err = e.step_branch(s, lt("x", "y"), &guided(&[("x", 0), ("y", 0), ("z", 0)], 0));
        assert_eq!(err.unwrap_err(), EngineError::NotAtBranch);
    }

    #[test]
    fn t3_region_and_its_suspended_states() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let t3 = t3_model(&p);
        let r = e
            .start_execution(e.initial_state(), &t3, 2, 3, SearchStrategy::Dfs)
            .unwrap();
        assert_eq!(sorted(r.completed_paths()), vec![pv("000"), pv("001")]);
        let suspended: Vec<(String, u32)> = r
            .suspended
            .iter()
            .map(|s| (s.path.to_string(), s.depth()))
            .collect();
        assert_eq!(suspended, vec![("1".into(), 1), ("01".into(), 2)]);
        assert_eq!(r.stats.states_suspended, 2);
    }

    #[test]
    fn pure_symbolic_run_finds_all_six() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let any = e.model_of(&PathCondition::new()).unwrap();
        let r = e
            .start_execution(e.initial_state(), &any, 0, 3, SearchStrategy::Bfs)
            .unwrap();
        let expect: Vec<PathVector> = ["000", "001", "01", "100", "101", "11"]
            .iter()
            .map(|s| pv(s))
            .collect();
        assert_eq!(sorted(r.completed_paths()), expect);
        assert!(r.frontier.is_empty());
        assert!(r.suspended.is_empty());
        assert!(!r.stats.partial);
    }

    #[test]
    fn fully_guided_replays_one_path_without_solving() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let t3 = t3_model(&p);
        let r = e
            .start_execution(e.initial_state(), &t3, 3, 3, SearchStrategy::Dfs)
            .unwrap();
        assert_eq!(r.completed_paths(), vec![pv("000")]);
        assert_eq!(r.stats.solver_queries, 0);
    }

    #[test]
    fn final_depth_two_leaves_frontier() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let any = e.model_of(&PathCondition::new()).unwrap();
        let r = e
            .start_execution(e.initial_state(), &any, 0, 2, SearchStrategy::Dfs)
            .unwrap();
        assert_eq!(sorted(r.completed_paths()), vec![pv("01"), pv("11")]);
        let mut frontier: Vec<_> = r.frontier.iter().map(path_of).collect();
        frontier.sort();
        assert_eq!(frontier, vec![pv("00"), pv("10")]);
        assert!(r
            .frontier
            .iter()
            .all(|s| s.depth() == 2 && s.status == Status::Frontier));
    }

    #[test]
    fn divergent_test_is_rejected() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let t3 = t3_model(&p);
        let r = e
            .start_execution(e.initial_state(), &t3, 2, 3, SearchStrategy::Dfs)
            .unwrap();
        let c = r.suspended[0].clone();
        // c requires x<y, T3's model has x=y
        let err = e.start_execution(c, &t3, 2, 3, SearchStrategy::Dfs);
        assert!(matches!(err, Err(EngineError::ReplayDiverged { .. })));
    }

    #[test]
    fn invalid_bounds_and_tests() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let t = Test::from_pairs(&[("x", 0), ("y", 0), ("z", 0)]);
        let err = e.start_execution(e.initial_state(), &t, 4, 3, SearchStrategy::Dfs);
        assert!(matches!(err, Err(EngineError::DepthOutOfRange { .. })));
        let partial = Test::from_pairs(&[("x", 0)]);
        let err = e.start_execution(e.initial_state(), &partial, 1, 3, SearchStrategy::Dfs);
        assert!(matches!(err, Err(EngineError::InvalidTest(_))));
        let outside = Test::from_pairs(&[("x", 99), ("y", 0), ("z", 0)]);
        let err = e.start_execution(e.initial_state(), &outside, 1, 3, SearchStrategy::Dfs);
        assert!(matches!(err, Err(EngineError::InvalidTest(_))));
    }

    #[test]
    fn resumable_state_for_second_pair() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let t3 = t3_model(&p);
        let r = e
            .start_execution(e.initial_state(), &t3, 2, 3, SearchStrategy::Dfs)
            .unwrap();
        let t = Test::from_pairs(&[("x", 0), ("y", 1), ("z", 2)]);
        let i = find_resumable(&r.suspended, &t, 2, ResumeOrder::Deepest)
            .unwrap()
            .unwrap();
        assert_eq!(r.suspended[i].path, pv("1"));
        assert_eq!(find_resumable(&[], &t, 2, ResumeOrder::List).unwrap(), None);
        // x=y=z satisfies neither (x<y) nor !(x<y) and (x<z)
        let none = Test::from_pairs(&[("x", 0), ("y", 0), ("z", 0)]);
        assert_eq!(
            find_resumable(&r.suspended, &none, 2, ResumeOrder::Deepest).unwrap(),
            None
        );
    }

    #[test]
    fn resume_order_list_vs_deepest() {
        let p = parse_program(
            "program p;\nsym x in [0, 7];\nif (x < 4) { if (x < 2) { exit(1); } }\nexit(2);",
        )
        .unwrap();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        // replay x=7: suspends "1" (x<4) at depth 1; nothing at depth 2
        let r = e
            .start_execution(
                e.initial_state(),
                &Test::from_pairs(&[("x", 7)]),
                1,
                2,
                SearchStrategy::Dfs,
            )
            .unwrap();
        let mut suspended = r.suspended;
        let r2 = e
            .start_execution(
                e.initial_state(),
                &Test::from_pairs(&[("x", 3)]),
                2,
                2,
                SearchStrategy::Dfs,
            )
            .unwrap();
        // r2 suspended "0" (x >= 4) at depth 1 and "11" (x<2) at depth 2
        suspended.extend(r2.suspended);
        let depths: Vec<u32> = suspended.iter().map(ExecState::depth).collect();
        assert_eq!(depths, vec![1, 1, 2]);
        let t = Test::from_pairs(&[("x", 1)]);
        let list = find_resumable(&suspended, &t, 2, ResumeOrder::List).unwrap();
        let deep = find_resumable(&suspended, &t, 2, ResumeOrder::Deepest).unwrap();
        assert_eq!(list, Some(0));
        assert_eq!(deep, Some(2));
        // depth filter: the depth-2 state is not an ancestor of a depth-1 pair
        assert_eq!(
            find_resumable(&suspended, &t, 1, ResumeOrder::Deepest).unwrap(),
            Some(0)
        );
    }

    #[test]
    fn terminal_paths_replay_concretely() {
        let p = find_middle();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let any = e.model_of(&PathCondition::new()).unwrap();
        let r = e
            .start_execution(e.initial_state(), &any, 0, 3, SearchStrategy::Dfs)
            .unwrap();
        for c in &r.completed {
            let m = e.model_of(&c.pc).unwrap();
            let run = run_concrete(&p, &m.ordered(&p.inputs).unwrap(), None, 1000).unwrap();
            assert_eq!(PathVector::from_bits(run.decisions), c.path);
        }
        let t2 = r
            .completed
            .iter()
            .find(|c| c.pc.to_string() == "((x<y) and (y<z))");
        assert_eq!(t2.unwrap().path, pv("11"));
    }

    #[test]
    fn step_budget_marks_partial() {
        let p = parse_program("program p;\nsym x in [0, 3];\nwhile (1) { }").unwrap();
        let mut e = Engine::new(
            &p,
            EngineConfig {
                max_steps: 500,
                ..EngineConfig::default()
            },
        )
        .unwrap();
        let any = e.model_of(&PathCondition::new()).unwrap();
        let r = e
            .start_execution(e.initial_state(), &any, 0, 3, SearchStrategy::Dfs)
            .unwrap();
        assert!(r.stats.partial);
        assert!(r.completed.is_empty());
        assert_eq!(r.stats.instructions, 500);
    }

    #[test]
    fn offload_candidate_is_shallowest() {
        let p = parse_program(
            "program p;\nsym x in [0, 15];\nsym y in [0, 15];\nif (x < 8) { if (y < 8) { if (x < 4) { exit(1); } } }\nif (y < 4) { exit(2); }\n",
        )
        .unwrap();
        let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
        let any = e.model_of(&PathCondition::new()).unwrap();
        let bounds = RegionBounds {
            test: any,
            test_depth: 0,
            final_depth: 10,
        };
        let mut region = e
            .begin_region(e.initial_state(), bounds, SearchStrategy::Dfs)
            .unwrap();
        region.step(&mut e).unwrap();
        region.step(&mut e).unwrap();
        let depths: Vec<u32> = region.active().iter().map(ExecState::depth).collect();
        assert_eq!(depths, vec![1, 2, 2]);
        assert!(region.take_shallowest(3).is_none());
        let s = region.take_shallowest(2).unwrap();
        assert_eq!(s.depth(), 1);
        assert_eq!(region.active().len(), 2);
    }
}
