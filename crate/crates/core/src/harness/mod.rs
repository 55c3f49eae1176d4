//! Whole runs: single-engine, threaded and TCP topologies, plus the
//! supporting tools (reports, calibration, corpus generation, oracle).

mod calibrate;
mod gen;
mod oracle;
mod report;

use std::fmt;
use std::net::TcpListener;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use calibrate::calibrate_depth;
pub use gen::{gen_corpus, write_corpus, GenShape, GeneratedProgram, TreeShape};
pub use oracle::{enumerate_paths, OracleError, PathSets, MAX_ASSIGNMENTS};
pub use report::{
    verify, ReportError, RunReport, VerifyError, VerifyOutcome, WorkerRow, CSV_HEADER,
};

use crate::coord::{run_coordinator, seed_pool, CoordConfig, CoordReport, DEFAULT_STEAL_TICK};
use crate::engine::{EngineConfig, EngineError, ResumeOrder, SearchStrategy, DEFAULT_MAX_STEPS};
use crate::lang::Program;
use crate::solve::{PathCondition, SolverConfig};
use crate::transport::{
    channel_links, tcp_accept, tcp_connect, RecordingCoordinator, RecordingWorker,
    ReplayCoordinator, ReplayWorker, Schedule, TransportError,
};
use crate::worker::{run_worker, WorkerConfig, WorkerError, DEFAULT_OFFLOAD_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Threads,
    Tcp,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::Threads => "threads",
            Mode::Tcp => "tcp",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Mode::Single),
            "threads" => Ok(Mode::Threads),
            "tcp" => Ok(Mode::Tcp),
            _ => Err(format!(
                "unknown mode '{s}' (expected single, threads or tcp)"
            )),
        }
    }
}

/// Message-order recording for threaded runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ScheduleMode {
    #[default]
    Off,
    Record,
    Replay(Schedule),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub workers: usize,
    pub strategy: SearchStrategy,
    pub final_depth: u32,
    /// Instruction budget per region.
    pub max_steps: u64,
    pub offload_threshold: usize,
    pub resume_order: ResumeOrder,
    pub cache: bool,
    /// Artificial latency added to every solver call that misses the cache.
    pub query_delay: Option<Duration>,
    /// When set, the final depth is what breadth-first exploration reaches
    /// in this time, capped by `final_depth`.
    pub calibrate_timeout: Option<Duration>,
    pub deadline: Option<Duration>,
    pub steal_tick: Duration,
    pub schedule: ScheduleMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Single,
            workers: 1,
            strategy: SearchStrategy::Dfs,
            final_depth: 16,
            max_steps: DEFAULT_MAX_STEPS,
            offload_threshold: DEFAULT_OFFLOAD_THRESHOLD,
            resume_order: ResumeOrder::Deepest,
            cache: true,
            query_delay: None,
            calibrate_timeout: None,
            deadline: None,
            steal_tick: DEFAULT_STEAL_TICK,
            schedule: ScheduleMode::Off,
        }
    }
}

impl RunConfig {
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            max_steps: self.max_steps,
            solver: SolverConfig {
                cache: self.cache,
                query_delay: self.query_delay,
                ..SolverConfig::default()
            },
        }
    }

    fn worker_config(&self) -> WorkerConfig {
        WorkerConfig {
            offload_threshold: self.offload_threshold,
            resume_order: self.resume_order,
            engine: self.engine_config(),
        }
    }

    fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.mode != Mode::Single && self.workers == 0 {
            return bad("threads and tcp modes need at least one worker");
        }
        if self.schedule != ScheduleMode::Off && self.mode != Mode::Threads {
            return bad("message-order recording and replay need threads mode");
        }
        if self.schedule != ScheduleMode::Off && self.deadline.is_some() {
            return bad("a deadline cannot be combined with recording or replay");
        }
        if let ScheduleMode::Replay(s) = &self.schedule {
            if s.workers.len() != self.workers {
                return bad("schedule was recorded with a different worker count");
            }
        }
        if self.calibrate_timeout.is_some_and(|t| t.is_zero()) {
            return bad("calibration timeout must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("run aborted: {message}")]
    Aborted {
        message: String,
        report: Box<RunReport>,
    },
}

/// A finished run: the report plus what only the harness needs.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Present when the run was recorded.
    pub schedule: Option<Schedule>,
    pub provide_work_sent: u64,
    pub tasks_sent: u64,
}

pub fn run(program: &Program, config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    config.check()?;
    let mut config = config.clone();
    if let Some(t) = config.calibrate_timeout {
        config.final_depth =
            calibrate_depth(program, t, config.final_depth, &config.engine_config())?;
    }
    let started = Instant::now();
    let mut outcome = match config.mode {
        Mode::Single => run_single(program, &config)?,
        Mode::Threads => run_threads(program, &config)?,
        Mode::Tcp => run_tcp(program, &config)?,
    };
    outcome.report.wall_ms = started.elapsed().as_millis() as u64;
    Ok(outcome)
}

fn base_report(program: &Program, config: &RunConfig) -> RunReport {
    RunReport {
        program: program.digest(),
        final_depth: config.final_depth,
        mode: config.mode.to_string(),
        workers: match config.mode {
            Mode::Single => 1,
            _ => config.workers,
        },
        search: config.strategy.to_string(),
        ..RunReport::default()
    }
}

fn run_single(program: &Program, config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let mut engine = crate::engine::Engine::new(program, config.engine_config())?;
    let any = engine.model_of(&PathCondition::new())?;
    let r = engine.start_execution(
        engine.initial_state(),
        &any,
        0,
        config.final_depth,
        config.strategy,
    )?;
    let mut report = base_report(program, config);
    let s = r.stats;
    report.rows.push(WorkerRow {
        worker: 0,
        regions: 1,
        paths_completed: s.completed.len() as u64,
        frontier_states: s.frontier.len() as u64,
        solver_queries: s.solver_queries,
        cache_hits: s.cache_hits,
        transfers_in: 0,
        transfers_out: 0,
        wall_ms: s.wall_micros / 1000,
    });
    report.partial = s.partial;
    report.completed = s.completed;
    report.frontier = s.frontier;
    report.completed.sort();
    report.frontier.sort();
    Ok(RunOutcome {
        report,
        schedule: None,
        provide_work_sent: 0,
        tasks_sent: 0,
    })
}

fn coord_config(config: &RunConfig) -> CoordConfig {
    CoordConfig {
        strategy: config.strategy,
        final_depth: config.final_depth,
        steal_tick: config.steal_tick,
        deadline: config.deadline,
    }
}

fn finish(
    program: &Program,
    config: &RunConfig,
    c: CoordReport,
    worker_errors: Vec<(usize, String)>,
    schedule: Option<Schedule>,
) -> Result<RunOutcome, HarnessError> {
    let mut report = base_report(program, config);
    report.rows = c
        .workers
        .iter()
        .enumerate()
        .map(|(i, t)| WorkerRow {
            worker: i,
            regions: t.regions,
            paths_completed: t.paths_completed,
            frontier_states: t.frontier_states,
            solver_queries: t.solver_queries,
            cache_hits: t.cache_hits,
            transfers_in: t.transfers_in,
            transfers_out: t.transfers_out,
            wall_ms: t.wall_micros / 1000,
        })
        .collect();
    report.completed = c.completed;
    report.frontier = c.frontier;
    report.completed.sort();
    report.frontier.sort();
    report.transfers = c.transfers;
    report.partial = c.partial;
    let mut problems: Vec<String> = Vec::new();
    problems.extend(c.aborted);
    problems.extend(
        worker_errors
            .into_iter()
            .map(|(w, e)| format!("worker {w}: {e}")),
    );
    problems.extend(c.ledger_errors.into_iter().map(|e| format!("ledger: {e}")));
    if !problems.is_empty() {
        report.partial = true;
        return Err(HarnessError::Aborted {
            message: problems.join("; "),
            report: Box::new(report),
        });
    }
    Ok(RunOutcome {
        report,
        schedule,
        provide_work_sent: c.provide_work_sent,
        tasks_sent: c.tasks_sent,
    })
}

fn worker_result<T>(r: thread::Result<Result<T, WorkerError>>) -> Result<T, String> {
    match r {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err("worker thread panicked".into()),
    }
}

fn run_threads(program: &Program, config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let seeds = seed_pool(
        program,
        config.workers,
        config.final_depth,
        &config.engine_config(),
    )?;
    let (coord_link, worker_links) = channel_links(config.workers);
    let wcfg = config.worker_config();
    // generous: a replayed message can lag its recording by a scheduler slice
    let patience = Duration::from_secs(30);
    thread::scope(|s| {
        let handles: Vec<_> = worker_links
            .into_iter()
            .enumerate()
            .map(|(i, link)| {
                let wcfg = wcfg.clone();
                let schedule = &config.schedule;
                s.spawn(move || match schedule {
                    ScheduleMode::Off => {
                        let mut link = link;
                        run_worker(program, wcfg, &mut link).map(|_| Vec::new())
                    }
                    ScheduleMode::Record => {
                        let mut link = RecordingWorker::new(link);
                        let r = run_worker(program, wcfg, &mut link);
                        r.map(|_| link.into_log())
                    }
                    ScheduleMode::Replay(sch) => {
                        let mut link = ReplayWorker::new(link, sch.workers[i].clone());
                        run_worker(program, wcfg, &mut link).map(|_| Vec::new())
                    }
                })
            })
            .collect();
        let ccfg = coord_config(config);
        let (report, coord_log) = match &config.schedule {
            ScheduleMode::Off => {
                let mut link = coord_link;
                (run_coordinator(&mut link, ccfg, seeds), None)
            }
            ScheduleMode::Record => {
                let mut link = RecordingCoordinator::new(coord_link);
                let r = run_coordinator(&mut link, ccfg, seeds);
                (r, Some(link.into_log()))
            }
            ScheduleMode::Replay(sch) => {
                let mut link =
                    ReplayCoordinator::new(coord_link, sch.coordinator.clone(), patience);
                (run_coordinator(&mut link, ccfg, seeds), None)
            }
        };
        let mut errors = Vec::new();
        let mut logs = Vec::new();
        for (i, h) in handles.into_iter().enumerate() {
            match worker_result(h.join()) {
                Ok(log) => logs.push(log),
                Err(e) => errors.push((i, e)),
            }
        }
        let schedule = coord_log.map(|coordinator| Schedule {
            coordinator,
            workers: logs,
        });
        finish(program, config, report, errors, schedule)
    })
}

fn run_tcp(program: &Program, config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(TransportError::from)?;
    let addr = listener.local_addr().map_err(TransportError::from)?;
    let seeds = seed_pool(
        program,
        config.workers,
        config.final_depth,
        &config.engine_config(),
    )?;
    let wcfg = config.worker_config();
    thread::scope(|s| {
        let handles: Vec<_> = (0..config.workers)
            .map(|_| {
                let wcfg = wcfg.clone();
                s.spawn(move || {
                    let mut link = tcp_connect(addr).map_err(WorkerError::from)?;
                    run_worker(program, wcfg, &mut link)
                })
            })
            .collect();
        let report = match tcp_accept(&listener, config.workers) {
            Ok(mut link) => run_coordinator(&mut link, coord_config(config), seeds),
            Err(e) => return Err(e.into()),
        };
        let errors = handles
            .into_iter()
            .enumerate()
            .filter_map(|(i, h)| worker_result(h.join()).err().map(|e| (i, e)))
            .collect();
        finish(program, config, report, errors, None)
    })
}

/// Coordinator side of a TCP run whose workers are separate processes.
pub fn run_tcp_listener(
    program: &Program,
    config: &RunConfig,
    listener: &TcpListener,
) -> Result<RunOutcome, HarnessError> {
    let mut config = config.clone();
    config.mode = Mode::Tcp;
    config.check()?;
    let started = Instant::now();
    let seeds = seed_pool(
        program,
        config.workers,
        config.final_depth,
        &config.engine_config(),
    )?;
    let mut link = tcp_accept(listener, config.workers)?;
    let report = run_coordinator(&mut link, coord_config(&config), seeds);
    drop(link);
    let mut outcome = finish(program, &config, report, Vec::new(), None)?;
    outcome.report.wall_ms = started.elapsed().as_millis() as u64;
    Ok(outcome)
}

/// Worker side of a TCP run: connects and serves tasks until told to stop.
pub fn serve_worker(
    program: &Program,
    addr: &str,
    config: WorkerConfig,
) -> Result<crate::worker::WorkerSummary, WorkerError> {
    let mut link = tcp_connect(addr)?;
    run_worker(program, config, &mut link)
}
