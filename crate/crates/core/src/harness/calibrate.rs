use std::time::{Duration, Instant};

use crate::engine::{Advance, Engine, EngineConfig, EngineError, RegionBounds};
use crate::lang::Program;
use crate::solve::PathCondition;

/// Breadth-first single-worker exploration under a time budget. Returns
/// the deepest layer whose states were all generated; when the tree runs
/// out first, that is the depth of the deepest path. `limit` caps the
/// answer for trees that never end.
pub fn calibrate_depth(
    program: &Program,
    timeout: Duration,
    limit: u32,
    config: &EngineConfig,
) -> Result<u32, EngineError> {
    let started = Instant::now();
    let mut engine = Engine::new(program, config.clone())?;
    let any = engine.model_of(&PathCondition::new())?;
    let mut layer = vec![engine.initial_state()];
    let mut depth = 0;
    while depth < limit {
        let bounds = RegionBounds {
            test: any.clone(),
            test_depth: 0,
            final_depth: depth + 1,
        };
        let mut next = Vec::new();
        for s in layer {
            if started.elapsed() >= timeout {
                return Ok(depth);
            }
            let mut budget = config.max_steps;
            if let Advance::Branched(out) = engine.advance(s, &bounds, &mut budget)? {
                next.extend(out.successors);
            }
        }
        if next.is_empty() {
            return Ok(depth);
        }
        layer = next;
        depth += 1;
    }
    Ok(depth)
}
