#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tdpart::lang::{run_concrete, ConcreteOutcome};
use tdpart::{parse_program, PathVector, Program, Test};

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn find_middle() -> Program {
    let text = fs::read_to_string(corpus_dir().join("find_middle.tdp")).unwrap();
    parse_program(&text).unwrap()
}

/// The shipped generated corpus, sorted by file name.
pub fn generated() -> Vec<(String, Program)> {
    let mut files: Vec<PathBuf> = fs::read_dir(corpus_dir().join("gen"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "tdp"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|f| {
            let name = f.file_stem().unwrap().to_string_lossy().into_owned();
            let p = parse_program(&fs::read_to_string(&f).unwrap()).unwrap();
            (name, p)
        })
        .collect()
}

/// Every input assignment, in declaration order, last input fastest.
pub fn assignments(p: &Program) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for d in &p.inputs {
        out = out
            .into_iter()
            .flat_map(|pre| {
                (d.lo..=d.hi).map(move |v| {
                    let mut a = pre.clone();
                    a.push(v);
                    a
                })
            })
            .collect();
    }
    out
}

pub fn test_of(p: &Program, vals: &[i64]) -> Test {
    Test::new(
        p.inputs
            .iter()
            .zip(vals)
            .map(|(d, v)| (Arc::clone(&d.name), *v))
            .collect(),
    )
}

/// Paths found by running each assignment concretely: completed paths and
/// frontier prefixes.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Brute {
    pub completed: BTreeSet<PathVector>,
    pub frontier: BTreeSet<PathVector>,
}

pub fn brute(p: &Program, final_depth: u32) -> Brute {
    let mut b = Brute::default();
    for vals in assignments(p) {
        let r = run_concrete(p, &vals, Some(final_depth as usize), 1_000_000).unwrap();
        let pv = PathVector::from_bits(r.decisions);
        match r.outcome {
            ConcreteOutcome::Exit(_) | ConcreteOutcome::Error(_) => {
                b.completed.insert(pv);
            }
            ConcreteOutcome::DepthBound => {
                b.frontier.insert(pv);
            }
            ConcreteOutcome::StepBound => panic!("step bound on {vals:?}"),
        }
    }
    b
}

/// The decisions `test` makes on its way down to `depth` symbolic branches.
pub fn prefix_of(p: &Program, test: &Test, depth: u32) -> PathVector {
    let vals = test.ordered(&p.inputs).unwrap();
    let r = run_concrete(p, &vals, Some(depth as usize), 1_000_000).unwrap();
    let mut bits = r.decisions;
    bits.truncate(depth as usize);
    PathVector::from_bits(bits)
}

pub fn sorted(mut v: Vec<PathVector>) -> Vec<PathVector> {
    v.sort();
    v
}

/// Oracle paths in the subtree below `prefix`.
pub fn below(m: &BTreeSet<PathVector>, prefix: &PathVector) -> Vec<PathVector> {
    m.iter()
        .filter(|k| k.starts_with(prefix))
        .cloned()
        .collect()
}

/// One forced-steal scenario: a victim explores a region, gives away up to
/// three states mid-run, and finishes. Returns the number of offloads, or
/// a description of the first violated property.
pub fn offload_scenario(programs: &[(String, Program)], seed: u64) -> Result<usize, String> {
    use rand::{Rng, SeedableRng};
    use tdpart::engine::RegionBounds;
    use tdpart::worker::offload;
    use tdpart::{Engine, EngineConfig, Message, SearchStrategy};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (name, p) = &programs[rng.random_range(0..programs.len())];
    let fd = [4, 16][rng.random_range(0..2)];
    let all = assignments(p);
    let tau = test_of(p, &all[rng.random_range(0..all.len())]);
    let d = rng.random_range(0..=2u32);
    let ctx = format!("seed {seed}: {name} fd={fd} tau={tau} d={d}");
    let oracle = brute(p, fd);
    let prefix = prefix_of(p, &tau, d);

    let mut e = Engine::new(p, EngineConfig::default()).map_err(|x| x.to_string())?;
    let bounds = RegionBounds {
        test: tau.clone(),
        test_depth: d,
        final_depth: fd,
    };
    let strategy = [
        SearchStrategy::Dfs,
        SearchStrategy::Bfs,
        SearchStrategy::Random { seed },
    ][rng.random_range(0..3)];
    let mut region = e
        .begin_region(e.initial_state(), bounds, strategy)
        .map_err(|x| x.to_string())?;
    let want = rng.random_range(1..=3);
    let mut pairs = Vec::new();
    'run: while pairs.len() < want {
        for _ in 0..rng.random_range(1..=6) {
            if !region.step(&mut e).map_err(|x| x.to_string())? {
                break 'run;
            }
        }
        let threshold = rng.random_range(1..=4);
        if let Message::Offload { test, test_depth } =
            offload(&mut e, &mut region, threshold).map_err(|x| x.to_string())?
        {
            pairs.push((test, test_depth));
        }
    }
    while region.step(&mut e).map_err(|x| x.to_string())? {}
    let victim = region.finish(&e);

    let mut union = victim.completed_paths();
    let mut union_frontier = victim.stats.frontier.clone();
    let victim_set: BTreeSet<PathVector> = union.iter().cloned().collect();
    for (test, depth) in &pairs {
        let pre = prefix_of(p, test, *depth);
        let expanded = below(&oracle.completed, &pre);
        let expanded_frontier = below(&oracle.frontier, &pre);
        if let Some(x) = expanded.iter().find(|x| victim_set.contains(*x)) {
            return Err(format!("{ctx}: {x} completed by victim and offloaded"));
        }
        let mut thief = Engine::new(p, EngineConfig::default()).map_err(|x| x.to_string())?;
        let r = thief
            .start_execution(thief.initial_state(), test, *depth, fd, SearchStrategy::Dfs)
            .map_err(|x| format!("{ctx}: thief: {x}"))?;
        if sorted(r.completed_paths()) != expanded
            || sorted(r.stats.frontier.clone()) != expanded_frontier
        {
            return Err(format!(
                "{ctx}: thief region for ({test}, {depth}) differs from oracle"
            ));
        }
        union.extend(expanded);
        union_frontier.extend(expanded_frontier);
    }
    if sorted(union) != below(&oracle.completed, &prefix)
        || sorted(union_frontier) != below(&oracle.frontier, &prefix)
    {
        return Err(format!(
            "{ctx}: victim and offloaded regions do not rebuild the original"
        ));
    }
    Ok(pairs.len())
}
