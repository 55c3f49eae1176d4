//! Seeded generator of small structured programs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeShape {
    /// Nested if/else chains: deep, few leaves per level.
    Narrow,
    /// A sequence of independent branches: many paths.
    Wide,
    /// Loops bounded by an input and by a constant.
    Looped,
}

impl TreeShape {
    pub fn name(self) -> &'static str {
        match self {
            TreeShape::Narrow => "narrow",
            TreeShape::Wide => "wide",
            TreeShape::Looped => "looped",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenShape {
    /// Up to three inputs (`x`, `y`, `z`); at least one.
    pub max_inputs: usize,
    /// Input domains lie within `[-radius, radius]`, doubled for wide programs.
    pub radius: i64,
    /// Branch statements in a wide program.
    pub branches: usize,
    /// Nesting depth of a narrow program.
    pub nesting: usize,
    /// Iterations of the constant-bounded loop in a looped program.
    pub loop_iterations: i64,
}

impl Default for GenShape {
    fn default() -> Self {
        GenShape {
            max_inputs: 3,
            radius: 4,
            branches: 13,
            nesting: 6,
            loop_iterations: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedProgram {
    pub name: String,
    pub shape: TreeShape,
    pub source: String,
}

const INPUTS: [&str; 3] = ["x", "y", "z"];
const RELOPS: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];

struct Gen<'a> {
    rng: ChaCha8Rng,
    shape: &'a GenShape,
    inputs: Vec<&'static str>,
    out: String,
    indent: usize,
    exits: i64,
}

impl Gen<'_> {
    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn input(&mut self) -> &'static str {
        self.inputs
            .choose(&mut self.rng)
            .copied()
            .expect("at least one input")
    }

    fn small(&mut self) -> i64 {
        let r = self.shape.radius;
        self.rng.random_range(-r..=r)
    }

    fn term(&mut self) -> String {
        match self.rng.random_range(0..10) {
            0..=3 => self.input().to_string(),
            4 | 5 => {
                let c = self.small();
                let v = self.input();
                if c < 0 {
                    format!("{v} - {}", -c)
                } else {
                    format!("{v} + {c}")
                }
            }
            6 | 7 => {
                let (a, b) = (self.input(), self.input());
                format!("{a} - {b}")
            }
            8 => format!("{} * {}", self.rng.random_range(2..=3), self.input()),
            _ => {
                let (a, b) = (self.input(), self.input());
                format!("{a} * {b}")
            }
        }
    }

    fn atom(&mut self) -> String {
        let op = *RELOPS.choose(&mut self.rng).expect("non-empty");
        let lhs = self.term();
        let rhs = if self.rng.random_bool(0.5) {
            self.small().to_string()
        } else {
            self.term()
        };
        format!("{lhs} {op} {rhs}")
    }

    fn cond(&mut self) -> String {
        match self.rng.random_range(0..12) {
            0 => format!("({}) and ({})", self.atom(), self.atom()),
            1 => format!("({}) or ({})", self.atom(), self.atom()),
            2 => format!("!({})", self.atom()),
            _ => self.atom(),
        }
    }

    fn leaf(&mut self) {
        if self.rng.random_bool(0.1) {
            let label = format!("bad{}", self.exits);
            self.exits += 1;
            self.line(&format!("error(\"{label}\");"));
        } else {
            let code = self.exits % 6;
            self.exits += 1;
            self.line(&format!("exit({code});"));
        }
    }

    fn open(&mut self, head: &str) {
        self.line(&format!("{head} {{"));
        self.indent += 1;
    }

    fn close(&mut self) {
        self.indent -= 1;
        self.line("}");
    }

    fn narrow(&mut self, depth: usize) {
        if depth == 0 {
            self.leaf();
            return;
        }
        let c = self.cond();
        self.open(&format!("if ({c})"));
        if self.rng.random_bool(0.3) {
            self.line("a = a + 1;");
        }
        if self.rng.random_bool(0.5) {
            self.narrow(depth - 1);
        } else {
            self.leaf();
        }
        self.indent -= 1;
        self.line("} else {");
        self.indent += 1;
        if self.rng.random_bool(0.2) {
            // a branch on a constant; it never forks
            self.open("if (k < 3)");
            self.line("a = a + x;");
            self.close();
        }
        self.narrow(depth - 1);
        self.close();
    }

    fn wide(&mut self) {
        let mut seen: Vec<String> = Vec::new();
        for i in 0..self.shape.branches {
            let c = match seen.choose(&mut self.rng) {
                Some(old) if self.rng.random_bool(0.2) => old.clone(),
                _ => self.cond(),
            };
            seen.push(c.clone());
            self.open(&format!("if ({c})"));
            self.line(&format!("a = a + {};", i + 1));
            if self.rng.random_bool(0.05) {
                self.leaf();
            }
            self.close();
        }
        self.tail();
    }

    fn looped(&mut self) {
        let bound = self.input();
        self.line("i = 0;");
        self.open(&format!("while (i < {bound})"));
        let c = self.cond();
        self.open(&format!("if ({c})"));
        self.line("a = a + 1;");
        self.close();
        self.line("i = i + 1;");
        self.close();
        self.line("j = 0;");
        self.open(&format!("while (j < {})", self.shape.loop_iterations));
        let c = self.cond();
        self.open(&format!("if ({c})"));
        self.line("a = a + j;");
        self.close();
        self.line("j = j + 1;");
        self.close();
        self.tail();
    }

    /// A closing decision on the accumulated value.
    fn tail(&mut self) {
        let v = self.input();
        let c = self.small();
        self.open(&format!("if (a > {v} + {})", c.abs()));
        self.leaf();
        self.close();
        self.leaf();
    }
}

/// `count` programs from `seed`; the shapes cycle narrow, wide, looped.
pub fn gen_corpus(seed: u64, count: usize, shape: &GenShape) -> Vec<GeneratedProgram> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = [TreeShape::Narrow, TreeShape::Wide, TreeShape::Looped][i % 3];
            let mut g = Gen {
                rng: ChaCha8Rng::seed_from_u64(master.random()),
                shape,
                inputs: Vec::new(),
                out: String::new(),
                indent: 0,
                exits: 0,
            };
            let max = shape.max_inputs.clamp(1, 3);
            let n = match kind {
                TreeShape::Wide => max,
                _ => g.rng.random_range(1..=max).max(max.min(2)),
            };
            g.inputs = INPUTS[..n].to_vec();
            let name = format!("gen_{seed}_{i:03}");
            let _ = writeln!(g.out, "// generated: seed {seed}, {} tree", kind.name());
            let _ = writeln!(g.out, "program {name};");
            let r = shape.radius.max(1);
            for v in g.inputs.clone() {
                let (lo, hi) = match kind {
                    TreeShape::Wide => (-2 * r, 2 * r),
                    _ => (-g.rng.random_range(0..=r), g.rng.random_range(1..=r)),
                };
                let _ = writeln!(g.out, "sym {v} in [{lo}, {hi}];");
            }
            g.out.push('\n');
            g.line("a = 0;");
            g.line("k = 2;");
            match kind {
                TreeShape::Narrow => g.narrow(shape.nesting),
                TreeShape::Wide => g.wide(),
                TreeShape::Looped => g.looped(),
            }
            GeneratedProgram {
                name,
                shape: kind,
                source: g.out,
            }
        })
        .collect()
}

/// Writes each program to `<dir>/<name>.tdp`, creating `dir` if needed.
pub fn write_corpus(dir: &Path, programs: &[GeneratedProgram]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    programs
        .iter()
        .map(|p| {
            let path = dir.join(format!("{}.tdp", p.name));
            fs::write(&path, &p.source)?;
            Ok(path)
        })
        .collect()
}
