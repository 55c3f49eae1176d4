//! Fixtures shared by the benchmarks.

use tdpart::harness::{gen_corpus, GenShape, TreeShape};
use tdpart::{parse_program, Program};

pub const FIND_MIDDLE: &str = include_str!("../../../corpus/find_middle.tdp");

pub fn find_middle() -> Program {
    parse_program(FIND_MIDDLE).expect("shipped program parses")
}

/// The first generated program of the given shape under seed 1.
pub fn generated(shape: TreeShape) -> Program {
    let p = gen_corpus(1, 20, &GenShape::default())
        .into_iter()
        .find(|p| p.shape == shape)
        .expect("corpus covers every shape");
    parse_program(&p.source).expect("generated programs parse")
}
