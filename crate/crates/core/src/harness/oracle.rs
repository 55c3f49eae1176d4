//! Reference path sets computed without the symbolic engine.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::engine::PathVector;
use crate::lang::{run_concrete, ConcreteOutcome, Program, UnboundVariable};

/// Assignment count above which enumeration is refused.
pub const MAX_ASSIGNMENTS: u64 = 4_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} input assignments exceed the enumeration limit")]
    TooLarge(u64),
    #[error(transparent)]
    Unbound(#[from] UnboundVariable),
    #[error("input {inputs:?} exceeded {steps} steps")]
    StepBound { inputs: Vec<i64>, steps: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathSets {
    pub completed: BTreeSet<PathVector>,
    pub frontier: BTreeSet<PathVector>,
}

/// Runs every input assignment concretely and collects the decision
/// vectors: terminated runs as completed paths, runs that reach a symbolic
/// branch after `final_depth` decisions as frontier prefixes.
pub fn enumerate_paths(
    program: &Program,
    final_depth: u32,
    max_steps: u64,
) -> Result<PathSets, OracleError> {
    let total = program
        .inputs
        .iter()
        .try_fold(1u64, |acc, d| acc.checked_mul(d.domain_size()))
        .unwrap_or(u64::MAX);
    if total > MAX_ASSIGNMENTS {
        return Err(OracleError::TooLarge(total));
    }
    let mut out = PathSets::default();
    let mut vals: Vec<i64> = program.inputs.iter().map(|d| d.lo).collect();
    loop {
        let run = run_concrete(program, &vals, Some(final_depth as usize), max_steps)?;
        let p = PathVector::from_bits(run.decisions);
        match run.outcome {
            ConcreteOutcome::Exit(_) | ConcreteOutcome::Error(_) => {
                out.completed.insert(p);
            }
            ConcreteOutcome::DepthBound => {
                out.frontier.insert(p);
            }
            ConcreteOutcome::StepBound => {
                return Err(OracleError::StepBound {
                    inputs: vals,
                    steps: max_steps,
                })
            }
        }
        // odometer over the input domains, last input fastest
        let mut i = vals.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if vals[i] < program.inputs[i].hi {
                vals[i] += 1;
                break;
            }
            vals[i] = program.inputs[i].lo;
        }
    }
}
