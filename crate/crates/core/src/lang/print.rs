use std::fmt;

use super::{Instr, Program};

fn write_escaped(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// Prints the program in labeled-block form, which reparses to an equal
/// `Program`.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {};", self.name)?;
        for d in &self.inputs {
            writeln!(f, "sym {} in [{}, {}];", d.name, d.lo, d.hi)?;
        }
        let label = |id: super::BlockId| {
            self.blocks
                .get(id.0)
                .map(|b| b.label.as_str())
                .unwrap_or("?")
        };
        if self.entry.0 != 0 {
            writeln!(f, "entry {};", label(self.entry))?;
        }
        for b in &self.blocks {
            writeln!(f, "block {} {{", b.label)?;
            for instr in &b.instrs {
                f.write_str("  ")?;
                match instr {
                    Instr::Assign { var, expr } => write!(f, "{var} = {expr};")?,
                    Instr::Branch {
                        cond,
                        on_true,
                        on_false,
                    } => write!(
                        f,
                        "br {} {} {};",
                        paren(cond),
                        label(*on_true),
                        label(*on_false)
                    )?,
                    Instr::Jump(t) => write!(f, "goto {};", label(*t))?,
                    Instr::Exit(c) => write!(f, "exit({c});")?,
                    Instr::Error(l) => {
                        f.write_str("error(")?;
                        write_escaped(f, l)?;
                        f.write_str(");")?;
                    }
                }
                writeln!(f)?;
            }
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}

fn paren(e: &super::Expr) -> String {
    match e {
        super::Expr::Binary(..) => e.to_string(),
        _ => format!("({e})"),
    }
}
