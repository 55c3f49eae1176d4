use std::collections::HashMap;
use std::sync::Arc;

use super::{Expr, Instr, Program, UnboundVariable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConcreteOutcome {
    Exit(i64),
    Error(String),
    /// A symbolic branch was reached after `max_depth` symbolic decisions.
    DepthBound,
    StepBound,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteRun {
    /// Decisions taken at input-dependent branches, in order.
    pub decisions: Vec<bool>,
    pub outcome: ConcreteOutcome,
    pub steps: u64,
}

#[derive(Clone, Copy)]
struct Tainted {
    value: i64,
    symbolic: bool,
}

fn eval(e: &Expr, env: &HashMap<Arc<str>, Tainted>) -> Result<Tainted, UnboundVariable> {
    Ok(match e {
        Expr::Const(c) => Tainted {
            value: *c,
            symbolic: false,
        },
        Expr::Var(v) => *env.get(v).ok_or_else(|| UnboundVariable(v.clone()))?,
        Expr::Unary(op, a) => {
            let a = eval(a, env)?;
            Tainted {
                value: op.apply(a.value),
                symbolic: a.symbolic,
            }
        }
        Expr::Binary(op, l, r) => {
            let (l, r) = (eval(l, env)?, eval(r, env)?);
            Tainted {
                value: op.apply(l.value, r.value),
                symbolic: l.symbolic || r.symbolic,
            }
        }
    })
}

/// Runs the program on concrete inputs (in declaration order), tracking
/// which values depend on inputs. A branch whose condition depends on an
/// input is a symbolic decision and contributes one bit to `decisions`.
pub fn run_concrete(
    program: &Program,
    inputs: &[i64],
    max_depth: Option<usize>,
    max_steps: u64,
) -> Result<ConcreteRun, UnboundVariable> {
    let mut env: HashMap<Arc<str>, Tainted> = program
        .inputs
        .iter()
        .zip(inputs)
        .map(|(d, &value)| {
            (
                d.name.clone(),
                Tainted {
                    value,
                    symbolic: true,
                },
            )
        })
        .collect();
    let mut decisions = Vec::new();
    let mut block = program.entry;
    let mut idx = 0;
    let mut steps = 0u64;
    let outcome = loop {
        if steps >= max_steps {
            break ConcreteOutcome::StepBound;
        }
        steps += 1;
        match &program.block(block).instrs[idx] {
            Instr::Assign { var, expr } => {
                let v = eval(expr, &env)?;
                env.insert(var.clone(), v);
                idx += 1;
            }
            Instr::Branch {
                cond,
                on_true,
                on_false,
            } => {
                let c = eval(cond, &env)?;
                if c.symbolic {
                    if max_depth.is_some_and(|m| decisions.len() >= m) {
                        break ConcreteOutcome::DepthBound;
                    }
                    decisions.push(c.value != 0);
                }
                block = if c.value != 0 { *on_true } else { *on_false };
                idx = 0;
            }
            Instr::Jump(t) => {
                block = *t;
                idx = 0;
            }
            Instr::Exit(code) => break ConcreteOutcome::Exit(*code),
            Instr::Error(label) => break ConcreteOutcome::Error(label.clone()),
        }
    };
    Ok(ConcreteRun {
        decisions,
        outcome,
        steps,
    })
}
