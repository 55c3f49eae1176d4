//! A worker: executes the regions it is handed, keeps the states suspended
//! along the way for later tasks, and gives up its shallowest active state
//! when the coordinator asks for work.

use thiserror::Error;

use crate::engine::{
    find_resumable, Engine, EngineConfig, EngineError, ExecState, Region, RegionBounds,
    RegionStats, ResumeOrder, SearchStrategy,
};
use crate::lang::Program;
use crate::proto::Message;
use crate::solve::{SolveError, Test};
use crate::transport::{TransportError, WorkerLink};

pub const DEFAULT_OFFLOAD_THRESHOLD: usize = 4;

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// Offload only while more than this many states are active.
    pub offload_threshold: usize,
    pub resume_order: ResumeOrder,
    pub engine: EngineConfig,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig {
            offload_threshold: DEFAULT_OFFLOAD_THRESHOLD,
            resume_order: ResumeOrder::default(),
            engine: EngineConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("coordinator sent {0} at an unexpected point")]
    Protocol(&'static str),
}

impl From<SolveError> for WorkerError {
    fn from(e: SolveError) -> Self {
        WorkerError::Engine(e.into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerSummary {
    pub regions: u64,
    /// Tasks started from a matching suspended state.
    pub resumed: u64,
    /// Tasks replayed from the initial state.
    pub from_root: u64,
    pub offloads: u64,
    pub declined: u64,
}

/// Engine plus the suspended states that outlive a single task.
pub struct WorkerState<'p> {
    engine: Engine<'p>,
    suspended: Vec<ExecState>,
    config: WorkerConfig,
    summary: WorkerSummary,
}

/// What a worker does with one `ProvideWork`.
pub fn offload(
    engine: &mut Engine<'_>,
    region: &mut Region,
    threshold: usize,
) -> Result<Message, EngineError> {
    match region.take_shallowest(threshold) {
        Some(s) => {
            let pair = engine.pair_for(&s)?;
            Ok(Message::Offload {
                test: pair.test,
                test_depth: pair.depth,
            })
        }
        None => Ok(Message::NoWork),
    }
}

impl<'p> WorkerState<'p> {
    pub fn new(program: &'p Program, config: WorkerConfig) -> Result<Self, EngineError> {
        Ok(WorkerState {
            engine: Engine::new(program, config.engine.clone())?,
            suspended: Vec::new(),
            config,
            summary: WorkerSummary::default(),
        })
    }

    pub fn suspended(&self) -> &[ExecState] {
        &self.suspended
    }

    pub fn summary(&self) -> &WorkerSummary {
        &self.summary
    }

    /// Where a task for `(test, test_depth)` starts: a suspended ancestor
    /// of the target prefix if one exists, else the initial state.
    fn start_state(&mut self, test: &Test, test_depth: u32) -> Result<ExecState, WorkerError> {
        let found = find_resumable(&self.suspended, test, test_depth, self.config.resume_order)?;
        Ok(match found {
            Some(i) => {
                self.summary.resumed += 1;
                self.suspended.remove(i)
            }
            None => {
                self.summary.from_root += 1;
                self.engine.initial_state()
            }
        })
    }

    /// Executes one task, answering steal requests between steps.
    pub fn run_task<L: WorkerLink + ?Sized>(
        &mut self,
        link: &mut L,
        strategy: SearchStrategy,
        test: Test,
        test_depth: u32,
        final_depth: u32,
    ) -> Result<RegionStats, WorkerError> {
        let start = self.start_state(&test, test_depth)?;
        let bounds = RegionBounds {
            test,
            test_depth,
            final_depth,
        };
        let mut region = self.engine.begin_region(start, bounds, strategy)?;
        loop {
            match link.try_recv()? {
                None => {}
                Some(Message::ProvideWork) => {
                    let reply =
                        offload(&mut self.engine, &mut region, self.config.offload_threshold)?;
                    match reply {
                        Message::Offload { .. } => self.summary.offloads += 1,
                        _ => self.summary.declined += 1,
                    }
                    link.send(&reply)?;
                }
                Some(other) => return Err(WorkerError::Protocol(other.name())),
            }
            if !region.step(&mut self.engine)? {
                break;
            }
        }
        let result = region.finish(&self.engine);
        self.suspended.extend(result.suspended);
        self.summary.regions += 1;
        Ok(result.stats)
    }
}

/// Serves tasks until `Terminate`.
pub fn run_worker<L: WorkerLink + ?Sized>(
    program: &Program,
    config: WorkerConfig,
    link: &mut L,
) -> Result<WorkerSummary, WorkerError> {
    let mut ws = WorkerState::new(program, config)?;
    loop {
        match link.recv()? {
            Message::Task {
                strategy,
                test,
                test_depth,
                final_depth,
            } => {
                let stats = ws.run_task(link, strategy, test, test_depth, final_depth)?;
                link.send(&Message::Finish { stats })?;
            }
            Message::ProvideWork => {
                ws.summary.declined += 1;
                link.send(&Message::NoWork)?;
            }
            Message::Terminate => return Ok(ws.summary),
            other => return Err(WorkerError::Protocol(other.name())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::PathVector;
    use crate::lang::{parse_program, BinOp, Expr};
    use crate::solve::{get_model, PathCondition};
    use crate::transport::{channel_links, CoordinatorLink};
    use std::time::Duration;

    fn find_middle() -> Program {
        parse_program(include_str!("../../../corpus/find_middle.tdp")).unwrap()
    }

    fn sorted(mut v: Vec<PathVector>) -> Vec<String> {
        v.sort();
        v.iter().map(ToString::to_string).collect()
    }

    fn t3(p: &Program) -> Test {
        let lt = |a, b| Expr::binary(BinOp::Lt, Expr::var(a), Expr::var(b));
        let pc: PathCondition = [
            (lt("x", "y"), false),
            (lt("x", "z"), false),
            (lt("y", "z"), false),
        ]
        .into_iter()
        .collect();
        get_model(&pc, &p.inputs).unwrap()
    }

    #[test]
    fn terminate_before_any_task() {
        let p = find_middle();
        let (mut c, mut ws) = channel_links(1);
        c.send(0, &Message::Terminate).unwrap();
        let s = run_worker(&p, WorkerConfig::default(), &mut ws[0]).unwrap();
        assert_eq!(s, WorkerSummary::default());
    }

    #[test]
    fn tasks_resume_suspended_states() {
        let p = find_middle();
        let (mut c, mut ws) = channel_links(1);
        let task = |test: Test| Message::Task {
            strategy: SearchStrategy::Dfs,
            test,
            test_depth: 2,
            final_depth: 3,
        };
        let worker = std::thread::spawn(move || {
            let p = find_middle();
            run_worker(&p, WorkerConfig::default(), &mut ws[0]).unwrap()
        });
        fn next(c: &mut impl CoordinatorLink) -> Message {
            c.recv(Duration::from_secs(10)).unwrap().unwrap().1
        }
        let completed = |m: Message| match m {
            Message::Finish { stats } => sorted(stats.completed),
            other => panic!("expected Finish, got {other:?}"),
        };
        c.send(0, &task(t3(&p))).unwrap();
        assert_eq!(completed(next(&mut c)), ["000", "001"]);
        // the second pair's prefix is 11, a complete path, reached from c
        c.send(0, &task(Test::from_pairs(&[("x", 0), ("y", 1), ("z", 2)])))
            .unwrap();
        assert_eq!(completed(next(&mut c)), ["11"]);
        c.send(0, &Message::ProvideWork).unwrap();
        assert_eq!(next(&mut c), Message::NoWork);
        c.send(0, &Message::Terminate).unwrap();
        let summary = worker.join().unwrap();
        assert_eq!(summary.from_root, 1);
        assert_eq!(summary.resumed, 1);
    }

    #[test]
    fn offload_picks_shallowest_above_threshold() {
        let p = parse_program(
            "program p;\nsym x in [0, 63];\n\
             if (x < 32) { exit(1); } else if (x < 48) { exit(2); }\n\
             else if (x < 56) { exit(3); } else if (x < 60) { exit(4); } else { exit(5); }",
        )
        .unwrap();
        let mut engine = Engine::new(&p, EngineConfig::default()).unwrap();
        let any = engine.model_of(&PathCondition::new()).unwrap();
        let bounds = RegionBounds {
            test: any,
            test_depth: 0,
            final_depth: 10,
        };
        let mut region = engine
            .begin_region(engine.initial_state(), bounds, SearchStrategy::Dfs)
            .unwrap();
        assert_eq!(
            offload(&mut engine, &mut region, 4).unwrap(),
            Message::NoWork
        );
        for _ in 0..4 {
            region.step(&mut engine).unwrap();
        }
        let depths: Vec<u32> = region.active().iter().map(ExecState::depth).collect();
        assert_eq!(depths, [1, 2, 3, 4, 4]);
        let Message::Offload { test, test_depth } = offload(&mut engine, &mut region, 4).unwrap()
        else {
            panic!("expected an offload")
        };
        assert_eq!(test_depth, 1);
        assert!(test.get("x").unwrap() < 32);
        assert_eq!(region.active().len(), 4);
        assert_eq!(
            offload(&mut engine, &mut region, 4).unwrap(),
            Message::NoWork
        );
    }

    #[test]
    fn unexpected_task_mid_region() {
        let p = find_middle();
        let (mut c, mut ws) = channel_links(1);
        let task = Message::Task {
            strategy: SearchStrategy::Bfs,
            test: t3(&p),
            test_depth: 0,
            final_depth: 3,
        };
        c.send(0, &task).unwrap();
        c.send(0, &task).unwrap();
        let err = run_worker(&p, WorkerConfig::default(), &mut ws[0]).unwrap_err();
        assert!(matches!(err, WorkerError::Protocol("Task")));
    }
}
