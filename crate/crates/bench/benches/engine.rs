use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use tdpart::harness::TreeShape;
use tdpart::{
    check_sat, decode, encode, parse_program, run, Engine, EngineConfig, Message, Mode,
    PathCondition, RunConfig, SearchStrategy, Test,
};
use tdpart_bench::{find_middle, generated};

fn solver(c: &mut Criterion) {
    let p = parse_program(
        "program s;\nsym x in [-64, 64];\nsym y in [-64, 64];\nsym z in [-64, 64];\nif (x * y - z == 17) { exit(1); }\nexit(0);",
    )
    .unwrap();
    let mut e = Engine::new(&p, EngineConfig::default()).unwrap();
    let any = e.model_of(&PathCondition::new()).unwrap();
    let r = e
        .start_execution(e.initial_state(), &any, 0, 4, SearchStrategy::Dfs)
        .unwrap();
    let pcs: Vec<PathCondition> = r.completed.iter().map(|c| c.pc.clone()).collect();
    c.bench_function("check_sat nonlinear 3 vars", |b| {
        b.iter(|| {
            for pc in &pcs {
                black_box(check_sat(pc, &p.inputs).unwrap());
            }
        })
    });
}

fn engine(c: &mut Criterion) {
    let mut g = c.benchmark_group("single region");
    for (name, p) in [
        ("find_middle", find_middle()),
        ("wide", generated(TreeShape::Wide)),
        ("looped", generated(TreeShape::Looped)),
    ] {
        for cache in [true, false] {
            let mut cfg = EngineConfig::default();
            cfg.solver.cache = cache;
            let label = format!("{name} cache={cache}");
            g.bench_function(label, |b| {
                b.iter_batched(
                    || Engine::new(&p, cfg.clone()).unwrap(),
                    |mut e| {
                        let any = e.model_of(&PathCondition::new()).unwrap();
                        e.start_execution(e.initial_state(), &any, 0, 16, SearchStrategy::Dfs)
                            .unwrap()
                    },
                    BatchSize::SmallInput,
                )
            });
        }
    }
    g.finish();
}

fn threads(c: &mut Criterion) {
    let p = generated(TreeShape::Wide);
    let mut g = c.benchmark_group("threads run");
    g.sample_size(20);
    for workers in [1, 2, 4] {
        let cfg = RunConfig {
            mode: Mode::Threads,
            workers,
            ..RunConfig::default()
        };
        g.bench_function(format!("wide x{workers}"), |b| {
            b.iter(|| run(&p, &cfg).unwrap())
        });
    }
    g.finish();
}

fn proto(c: &mut Criterion) {
    let task = Message::Task {
        strategy: SearchStrategy::Random { seed: 9 },
        test: Test::from_pairs(&[("x", 3), ("y", -2), ("z", 40)]),
        test_depth: 12,
        final_depth: 40,
    };
    let bytes = encode(&task);
    c.bench_function("encode task", |b| b.iter(|| encode(black_box(&task))));
    c.bench_function("decode task", |b| {
        b.iter(|| decode(black_box(&bytes)).unwrap())
    });
}

criterion_group!(benches, solver, engine, threads, proto);
criterion_main!(benches);
