//! `tdpart`: run, verify and generate partitioned symbolic executions.

use std::fs;
use std::io::{self, Write as _};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tdpart::harness::{
    enumerate_paths, gen_corpus, run_tcp_listener, serve_worker, write_corpus, GenShape,
    ScheduleMode,
};
use tdpart::transport::Schedule;
use tdpart::worker::{WorkerConfig, DEFAULT_OFFLOAD_THRESHOLD};
use tdpart::{
    parse_program, run, verify, EngineConfig, Mode, Program, ResumeOrder, RunConfig, RunReport,
    SearchStrategy,
};

#[derive(Parser)]
#[command(
    name = "tdpart",
    version,
    about = "Symbolic execution partitioned by test-depth pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore a program in one of the three topologies.
    Run(RunArgs),
    /// Serve a TCP coordinator started with `run --listen`.
    Worker(WorkerArgs),
    /// Write a seeded corpus of generated programs.
    Gen(GenArgs),
    /// Enumerate every input assignment concretely and report the paths.
    Oracle(OracleArgs),
    /// Parse and validate program files.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Threads,
    Tcp,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchArg {
    Dfs,
    Bfs,
    #[value(alias = "random")]
    Rand,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Deepest,
    List,
}

#[derive(Args)]
struct EngineArgs {
    /// Instruction budget per region.
    #[arg(long, default_value_t = tdpart::engine::DEFAULT_MAX_STEPS)]
    max_steps: u64,
    /// Active-state count above which a worker hands off its shallowest state.
    #[arg(long, default_value_t = DEFAULT_OFFLOAD_THRESHOLD)]
    offload_threshold: usize,
    /// Which suspended state to resume when several match a task.
    #[arg(long, value_enum, default_value = "deepest")]
    resume_order: OrderArg,
    /// Disable the solver query cache.
    #[arg(long)]
    no_cache: bool,
    /// Artificial delay per uncached solver query, in milliseconds.
    #[arg(long)]
    query_delay_ms: Option<u64>,
}

impl EngineArgs {
    fn order(&self) -> ResumeOrder {
        match self.resume_order {
            OrderArg::Deepest => ResumeOrder::Deepest,
            OrderArg::List => ResumeOrder::List,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "dfs")]
    search: SearchArg,
    /// Seed for random search.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Final depth: symbolic branches explored before a path stops as frontier.
    #[arg(long, default_value_t = 16)]
    max_depth: u32,
    /// Pick the final depth by timed breadth-first exploration, capped by --max-depth.
    #[arg(long)]
    calibrate_timeout: Option<f64>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Stop handing out work after this many seconds; the report is marked partial.
    #[arg(long)]
    deadline: Option<f64>,
    /// Write the CSV report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Leave the wall-time column empty in the written report.
    #[arg(long)]
    no_wall_time: bool,
    /// Compare the completed paths with this oracle report.
    #[arg(long)]
    verify: Option<PathBuf>,
    /// Record message delivery order (threads mode) to this JSON file.
    #[arg(long, conflicts_with = "replay")]
    record: Option<PathBuf>,
    /// Replay message delivery order from a recorded JSON file (threads mode).
    #[arg(long)]
    replay: Option<PathBuf>,
    /// In tcp mode, listen here and wait for `tdpart worker` processes instead
    /// of starting worker threads.
    #[arg(long)]
    listen: Option<String>,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long)]
    connect: String,
    #[arg(long)]
    program: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long, default_value_t = 16)]
    max_depth: u32,
    #[arg(long, default_value_t = tdpart::engine::DEFAULT_MAX_STEPS)]
    max_steps: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn load(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_program(&text).with_context(|| format!("{}", path.display()))
}

fn seconds(s: f64, flag: &str) -> Result<Duration> {
    Duration::try_from_secs_f64(s).with_context(|| format!("{flag}: invalid duration {s}"))
}

fn write_report(report: &RunReport, path: &Path, wall_time: bool) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    report
        .write_csv(io::BufWriter::new(file), wall_time)
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let program = load(&args.program)?;
    let strategy = match args.search {
        SearchArg::Dfs => SearchStrategy::Dfs,
        SearchArg::Bfs => SearchStrategy::Bfs,
        SearchArg::Rand => SearchStrategy::Random { seed: args.seed },
    };
    let schedule = match (&args.record, &args.replay) {
        (Some(_), _) => ScheduleMode::Record,
        (None, Some(p)) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let s: Schedule = serde_json::from_str(&text)
                .with_context(|| format!("parsing schedule {}", p.display()))?;
            ScheduleMode::Replay(s)
        }
        (None, None) => ScheduleMode::Off,
    };
    let config = RunConfig {
        mode: match args.mode {
            ModeArg::Single => Mode::Single,
            ModeArg::Threads => Mode::Threads,
            ModeArg::Tcp => Mode::Tcp,
        },
        workers: args.workers,
        strategy,
        final_depth: args.max_depth,
        max_steps: args.engine.max_steps,
        offload_threshold: args.engine.offload_threshold,
        resume_order: args.engine.order(),
        cache: !args.engine.no_cache,
        query_delay: args.engine.query_delay_ms.map(Duration::from_millis),
        calibrate_timeout: args
            .calibrate_timeout
            .map(|s| seconds(s, "--calibrate-timeout"))
            .transpose()?,
        deadline: args
            .deadline
            .map(|s| seconds(s, "--deadline"))
            .transpose()?,
        schedule,
        ..RunConfig::default()
    };

    let outcome = match &args.listen {
        Some(addr) => {
            if !matches!(args.mode, ModeArg::Tcp) {
                bail!("--listen needs --mode tcp");
            }
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            eprintln!(
                "listening on {}, waiting for {} workers",
                listener.local_addr()?,
                args.workers
            );
            run_tcp_listener(&program, &config, &listener)?
        }
        None => run(&program, &config)?,
    };
    let report = &outcome.report;

    let mut out = io::stdout().lock();
    writeln!(
        out,
        "program {} mode={} workers={} search={} final_depth={}",
        program.name, report.mode, report.workers, report.search, report.final_depth
    )?;
    writeln!(
        out,
        "paths={} frontier={} transfers={} partial={} wall_ms={}",
        report.completed.len(),
        report.frontier.len(),
        report.transfers,
        report.partial,
        report.wall_ms
    )?;
    writeln!(out, "digest {}", report.path_digest())?;

    if let Some(p) = &args.report {
        write_report(report, p, !args.no_wall_time)?;
    }
    if let (Some(p), Some(s)) = (&args.record, &outcome.schedule) {
        let json = serde_json::to_string_pretty(s)?;
        fs::write(p, json).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.verify {
        let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let oracle = RunReport::read_csv(io::BufReader::new(file))
            .with_context(|| format!("reading {}", p.display()))?;
        let result = verify(&oracle, report)?;
        writeln!(out, "{result}")?;
        if !result.passed() {
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_worker(args: WorkerArgs) -> Result<u8> {
    let program = load(&args.program)?;
    let config = WorkerConfig {
        offload_threshold: args.engine.offload_threshold,
        resume_order: args.engine.order(),
        engine: EngineConfig {
            max_steps: args.engine.max_steps,
            solver: tdpart::solve::SolverConfig {
                cache: !args.engine.no_cache,
                query_delay: args.engine.query_delay_ms.map(Duration::from_millis),
                ..Default::default()
            },
        },
    };
    let summary = serve_worker(&program, &args.connect, config)?;
    eprintln!(
        "worker done: regions={} resumed={} offloads={}",
        summary.regions, summary.resumed, summary.offloads
    );
    Ok(0)
}

fn cmd_gen(args: GenArgs) -> Result<u8> {
    let programs = gen_corpus(args.seed, args.count, &GenShape::default());
    let paths = write_corpus(&args.out, &programs)
        .with_context(|| format!("writing corpus to {}", args.out.display()))?;
    println!("wrote {} programs to {}", paths.len(), args.out.display());
    Ok(0)
}

fn cmd_oracle(args: OracleArgs) -> Result<u8> {
    let program = load(&args.program)?;
    let sets = enumerate_paths(&program, args.max_depth, args.max_steps)?;
    let report = RunReport {
        program: program.digest(),
        final_depth: args.max_depth,
        mode: "oracle".into(),
        workers: 0,
        search: "enumerate".into(),
        rows: Vec::new(),
        completed: sets.completed.into_iter().collect(),
        frontier: sets.frontier.into_iter().collect(),
        transfers: 0,
        partial: false,
        wall_ms: 0,
    };
    println!(
        "paths={} frontier={}\ndigest {}",
        report.completed.len(),
        report.frontier.len(),
        report.path_digest()
    );
    if let Some(p) = &args.report {
        write_report(&report, p, false)?;
    }
    Ok(0)
}

fn cmd_validate(files: &[PathBuf]) -> Result<u8> {
    let mut bad = 0;
    for f in files {
        match load(f) {
            Ok(p) => println!(
                "{}: ok ({} inputs, {} blocks)",
                f.display(),
                p.inputs.len(),
                p.blocks.len()
            ),
            Err(e) => {
                println!("{e:#}");
                bad += 1;
            }
        }
    }
    Ok(if bad > 0 { 1 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Worker(a) => cmd_worker(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Validate { files } => cmd_validate(&files),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
