//! Distributed symbolic execution partitioned by test-depth pairs.
//!
//! A program in the small `.tdp` language ([`lang`]) is explored by a
//! symbolic engine ([`engine`]) backed by a bounded-integer solver
//! ([`solve`]). A coordinator ([`coord`]) splits the execution tree into
//! regions named by (test, depth) pairs and balances them across workers
//! ([`worker`]) that talk over [`transport`] links using the [`proto`]
//! wire format. [`harness`] wires complete runs together.

pub mod coord;
pub mod engine;
pub mod harness;
pub mod lang;
pub mod proto;
pub mod solve;
pub mod transport;
pub mod worker;

pub use engine::{
    find_resumable, path_of, Engine, EngineConfig, EngineError, ExecState, PathVector,
    RegionResult, RegionStats, ResumeOrder, SearchStrategy, Status, Termination, TestDepthPair,
};
pub use harness::{run, verify, Mode, RunConfig, RunOutcome, RunReport};
pub use lang::{parse_program, Expr, LangError, Program, SymDecl};
pub use proto::{decode, encode, DecodeError, Message};
pub use solve::{check_sat, get_model, solve_path, PathCondition, Test, Verdict};
