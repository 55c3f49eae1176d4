//! The coordinator: seeds the initial pool of test-depth pairs, hands them
//! to idle workers and moves work from busy workers to idle ones.

use std::collections::{HashSet, VecDeque};
use std::time::{Duration, Instant};

use crate::engine::{
    Advance, Engine, EngineConfig, EngineError, ExecState, PathVector, RegionBounds, RegionStats,
    SearchStrategy, TestDepthPair,
};
use crate::lang::Program;
use crate::proto::Message;
use crate::solve::PathCondition;
use crate::transport::{CoordinatorLink, TransportError};

pub const DEFAULT_STEAL_TICK: Duration = Duration::from_millis(5);

/// Expands the tree breadth-first until a layer (plus the paths already
/// finished) holds at least `workers` states, the tree runs out, or the
/// layer reaches `final_depth`. Every surviving state becomes a pair
/// (model of its path condition, its depth), sorted by path.
pub fn seed_pool(
    program: &Program,
    workers: usize,
    final_depth: u32,
    config: &EngineConfig,
) -> Result<Vec<TestDepthPair>, EngineError> {
    let mut engine = Engine::new(program, config.clone())?;
    let any = engine.model_of(&PathCondition::new())?;
    let mut layer = vec![engine.initial_state()];
    let mut finished: Vec<ExecState> = Vec::new();
    let mut depth = 0;
    while !layer.is_empty() && layer.len() + finished.len() < workers && depth < final_depth {
        let bounds = RegionBounds {
            test: any.clone(),
            test_depth: 0,
            final_depth: depth + 1,
        };
        let mut next = Vec::new();
        for s in layer {
            let mut budget = config.max_steps;
            match engine.advance(s, &bounds, &mut budget)? {
                Advance::Terminated(s) => finished.push(s),
                Advance::Branched(out) => next.extend(out.successors),
                // left for a worker, which reports the exhausted budget
                Advance::OutOfSteps(s) => finished.push(s),
            }
        }
        layer = next;
        depth += 1;
    }
    let mut states: Vec<ExecState> = layer.into_iter().chain(finished).collect();
    states.sort_by(|a, b| a.path.cmp(&b.path));
    states.iter().map(|s| engine.pair_for(s)).collect()
}

#[derive(Debug, Clone)]
pub struct CoordConfig {
    pub strategy: SearchStrategy,
    pub final_depth: u32,
    /// Receive timeout; each expiry also re-arms stealing for idle workers.
    pub steal_tick: Duration,
    /// Soft deadline: afterwards no new work is handed out and workers are
    /// told to stop as they finish.
    pub deadline: Option<Duration>,
}

impl CoordConfig {
    pub fn new(strategy: SearchStrategy, final_depth: u32) -> Self {
        CoordConfig {
            strategy,
            final_depth,
            steal_tick: DEFAULT_STEAL_TICK,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerTally {
    pub regions: u64,
    pub paths_completed: u64,
    pub frontier_states: u64,
    pub solver_queries: u64,
    pub cache_hits: u64,
    pub states_created: u64,
    pub instructions: u64,
    pub transfers_in: u64,
    pub transfers_out: u64,
    pub steal_requests: u64,
    pub wall_micros: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CoordReport {
    pub workers: Vec<WorkerTally>,
    pub completed: Vec<PathVector>,
    pub frontier: Vec<PathVector>,
    /// Offloads forwarded to another worker.
    pub transfers: u64,
    pub provide_work_sent: u64,
    pub tasks_sent: u64,
    /// Some region ran out of steps, the deadline cut the run short, or the
    /// run was aborted.
    pub partial: bool,
    pub deadline_hit: bool,
    pub aborted: Option<String>,
    /// Dispatch bookkeeping problems found after the run.
    pub ledger_errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Pool,
    Offload,
}

#[derive(Debug)]
struct Ticket {
    pair: TestDepthPair,
    origin: Origin,
    dispatched_to: Vec<usize>,
}

struct Coordinator<'l, L: ?Sized> {
    link: &'l mut L,
    config: CoordConfig,
    tickets: Vec<Ticket>,
    pool: VecDeque<usize>,
    busy: Vec<bool>,
    terminated: Vec<bool>,
    outstanding: Vec<bool>,
    rr: usize,
    tries: usize,
    report: CoordReport,
    started: Instant,
}

/// Runs the coordinator until every worker is idle with nothing left to
/// hand out, then sends `Terminate` to all workers.
pub fn run_coordinator<L: CoordinatorLink + ?Sized>(
    link: &mut L,
    config: CoordConfig,
    seeds: Vec<TestDepthPair>,
) -> CoordReport {
    let n = link.workers();
    let mut c = Coordinator {
        link,
        config,
        tickets: Vec::new(),
        pool: VecDeque::new(),
        busy: vec![false; n],
        terminated: vec![false; n],
        outstanding: vec![false; n],
        rr: 0,
        tries: 0,
        report: CoordReport {
            workers: vec![WorkerTally::default(); n],
            ..CoordReport::default()
        },
        started: Instant::now(),
    };
    for pair in seeds {
        c.enqueue(pair, Origin::Pool);
    }
    if let Err(e) = c.run() {
        c.report.aborted = Some(e.to_string());
        c.report.partial = true;
        // best effort; some workers may already be gone
        for w in 0..n {
            if !c.terminated[w] {
                let _ = c.link.send(w, &Message::Terminate);
            }
        }
    }
    c.check_ledger();
    c.report
}

#[derive(Debug, thiserror::Error)]
enum CoordError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("worker {worker} sent unexpected {message}")]
    Protocol {
        worker: usize,
        message: &'static str,
    },
}

impl<L: CoordinatorLink + ?Sized> Coordinator<'_, L> {
    fn enqueue(&mut self, pair: TestDepthPair, origin: Origin) {
        self.tickets.push(Ticket {
            pair,
            origin,
            dispatched_to: Vec::new(),
        });
        self.pool.push_back(self.tickets.len() - 1);
    }

    fn past_deadline(&mut self) -> bool {
        let hit = self
            .config
            .deadline
            .is_some_and(|d| self.started.elapsed() >= d);
        if hit && !self.report.deadline_hit {
            self.report.deadline_hit = true;
            self.report.partial = true;
        }
        hit
    }

    fn is_idle(&self, w: usize) -> bool {
        !self.busy[w] && !self.terminated[w]
    }

    fn first_idle(&self) -> Option<usize> {
        (0..self.busy.len()).find(|&w| self.is_idle(w))
    }

    fn dispatch(&mut self, ticket: usize, worker: usize) -> Result<(), CoordError> {
        let t = &mut self.tickets[ticket];
        t.dispatched_to.push(worker);
        let strategy = self
            .config
            .strategy
            .reseeded(task_seed(self.config.strategy, self.report.tasks_sent));
        let msg = Message::Task {
            strategy,
            test: t.pair.test.clone(),
            test_depth: t.pair.depth,
            final_depth: self.config.final_depth,
        };
        if let Origin::Offload = t.origin {
            self.report.transfers += 1;
            self.report.workers[worker].transfers_in += 1;
        }
        self.link.send(worker, &msg)?;
        self.report.tasks_sent += 1;
        self.busy[worker] = true;
        Ok(())
    }

    fn run(&mut self) -> Result<(), CoordError> {
        let n = self.busy.len();
        loop {
            let stopping = self.past_deadline();
            if !stopping {
                while !self.pool.is_empty() {
                    let Some(w) = self.first_idle() else { break };
                    let t = self.pool.pop_front().expect("pool is non-empty");
                    self.dispatch(t, w)?;
                }
            }
            let all_idle = self.busy.iter().all(|b| !b);
            let waiting = self.outstanding.iter().any(|&o| o);
            if all_idle && !waiting && (self.pool.is_empty() || stopping) {
                break;
            }
            if !stopping && self.pool.is_empty() {
                self.steal(n)?;
            }
            match self.link.recv(self.config.steal_tick)? {
                None => self.tries = 0,
                Some((w, m)) => self.handle(w, m)?,
            }
        }
        for w in 0..n {
            if !self.terminated[w] {
                self.link.send(w, &Message::Terminate)?;
                self.terminated[w] = true;
            }
        }
        Ok(())
    }

    /// Sends `ProvideWork` to busy workers, round-robin, at most one
    /// request in flight per victim and no more in flight than there are
    /// idle workers. Gives up for this idle episode after `n` requests.
    fn steal(&mut self, n: usize) -> Result<(), CoordError> {
        let idle = (0..n).filter(|&w| self.is_idle(w)).count();
        let in_flight = self.outstanding.iter().filter(|&&o| o).count();
        let mut want = idle.saturating_sub(in_flight);
        let mut scanned = 0;
        while want > 0 && self.tries < n && scanned < n {
            let v = self.rr;
            self.rr = (self.rr + 1) % n;
            scanned += 1;
            if self.busy[v] && !self.outstanding[v] {
                self.link.send(v, &Message::ProvideWork)?;
                self.outstanding[v] = true;
                self.report.provide_work_sent += 1;
                self.report.workers[v].steal_requests += 1;
                self.tries += 1;
                want -= 1;
            }
        }
        Ok(())
    }

    fn handle(&mut self, w: usize, m: Message) -> Result<(), CoordError> {
        match m {
            Message::Finish { stats } => {
                if !self.busy[w] {
                    return Err(CoordError::Protocol {
                        worker: w,
                        message: "Finish while idle",
                    });
                }
                self.busy[w] = false;
                self.tries = 0;
                self.absorb(w, stats);
                if self.past_deadline() {
                    self.link.send(w, &Message::Terminate)?;
                    self.terminated[w] = true;
                }
            }
            Message::Offload { test, test_depth } => {
                if !self.outstanding[w] {
                    return Err(CoordError::Protocol {
                        worker: w,
                        message: "unsolicited Offload",
                    });
                }
                self.outstanding[w] = false;
                self.report.workers[w].transfers_out += 1;
                self.enqueue(
                    TestDepthPair {
                        test,
                        depth: test_depth,
                    },
                    Origin::Offload,
                );
                if !self.past_deadline() {
                    if let Some(idle) = self.first_idle() {
                        let t = self.pool.pop_back().expect("just pushed");
                        self.dispatch(t, idle)?;
                    }
                }
            }
            Message::NoWork => {
                if !self.outstanding[w] {
                    return Err(CoordError::Protocol {
                        worker: w,
                        message: "unsolicited NoWork",
                    });
                }
                self.outstanding[w] = false;
            }
            other => {
                return Err(CoordError::Protocol {
                    worker: w,
                    message: other.name(),
                })
            }
        }
        Ok(())
    }

    fn absorb(&mut self, w: usize, s: RegionStats) {
        let t = &mut self.report.workers[w];
        t.regions += 1;
        t.paths_completed += s.completed.len() as u64;
        t.frontier_states += s.frontier.len() as u64;
        t.solver_queries += s.solver_queries;
        t.cache_hits += s.cache_hits;
        t.states_created += s.states_created;
        t.instructions += s.instructions;
        t.wall_micros += s.wall_micros;
        self.report.partial |= s.partial;
        self.report.completed.extend(s.completed);
        self.report.frontier.extend(s.frontier);
    }

    fn check_ledger(&mut self) {
        let complete = self.report.aborted.is_none() && !self.report.deadline_hit;
        let mut seen = HashSet::new();
        for (i, t) in self.tickets.iter().enumerate() {
            if t.dispatched_to.len() > 1 {
                self.report.ledger_errors.push(format!(
                    "pair {} dispatched {} times",
                    t.pair,
                    t.dispatched_to.len()
                ));
            }
            if complete && t.dispatched_to.is_empty() {
                self.report
                    .ledger_errors
                    .push(format!("pair {} never dispatched", t.pair));
            }
            if !seen.insert(&t.pair) {
                self.report
                    .ledger_errors
                    .push(format!("pair {} issued twice (ticket {i})", t.pair));
            }
        }
        let offloads = self
            .tickets
            .iter()
            .filter(|t| matches!(t.origin, Origin::Offload))
            .count() as u64;
        let forwarded = self
            .tickets
            .iter()
            .filter(|t| matches!(t.origin, Origin::Offload) && !t.dispatched_to.is_empty())
            .count() as u64;
        if forwarded != self.report.transfers || (complete && offloads != forwarded) {
            self.report.ledger_errors.push(format!(
                "{offloads} offloads received, {forwarded} forwarded, {} transfers counted",
                self.report.transfers
            ));
        }
        let from_tally: u64 = self.report.workers.iter().map(|t| t.transfers_out).sum();
        if from_tally != offloads {
            self.report
                .ledger_errors
                .push(format!("{from_tally} offloads tallied, {offloads} tickets"));
        }
    }
}

/// Per-task seed for random search, so regions explored by different
/// tasks do not share a selection sequence.
fn task_seed(strategy: SearchStrategy, task: u64) -> u64 {
    match strategy {
        SearchStrategy::Random { seed } => splitmix64(seed ^ splitmix64(task)),
        _ => 0,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
