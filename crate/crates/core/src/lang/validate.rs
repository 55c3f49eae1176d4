use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use super::{BlockId, Instr, Program, DEFAULT_DOMAIN_CAP};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Diagnostic {
    pub block: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(block: Option<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            block,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.block {
            Some(b) => write!(f, "block {b}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks every structural invariant of a program with the default domain
/// cap. An empty result means the program is valid.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    validate_with_cap(program, DEFAULT_DOMAIN_CAP)
}

pub fn validate_with_cap(program: &Program, domain_cap: u64) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let mut seen = HashSet::new();
    for d in &program.inputs {
        if !seen.insert(d.name.clone()) {
            diags.push(Diagnostic::new(
                None,
                format!("duplicate symbolic input '{}'", d.name),
            ));
        }
        if d.lo > d.hi {
            diags.push(Diagnostic::new(
                None,
                format!("{}: empty domain [{}, {}]", d.name, d.lo, d.hi),
            ));
        } else if d.domain_size() > domain_cap {
            diags.push(Diagnostic::new(
                None,
                format!(
                    "{}: domain size {} exceeds cap {domain_cap}",
                    d.name,
                    d.domain_size()
                ),
            ));
        }
    }

    if program.blocks.is_empty() {
        diags.push(Diagnostic::new(None, "program has no blocks"));
        return diags;
    }
    if program.entry.0 >= program.blocks.len() {
        diags.push(Diagnostic::new(
            None,
            format!("entry block {} does not exist", program.entry),
        ));
    }

    let n = program.blocks.len();
    let mut cfg_ok = true;
    for (i, b) in program.blocks.iter().enumerate() {
        let here = Some(b.label.clone());
        if b.id != BlockId(i) {
            diags.push(Diagnostic::new(
                here.clone(),
                format!("id {} out of order", b.id),
            ));
        }
        let terminators = b.instrs.iter().filter(|x| x.is_terminator()).count();
        if terminators == 0 {
            diags.push(Diagnostic::new(here.clone(), "missing terminator"));
            cfg_ok = false;
        } else if terminators > 1 || !b.instrs.last().is_some_and(Instr::is_terminator) {
            diags.push(Diagnostic::new(
                here.clone(),
                "terminator must be the last and only terminator",
            ));
            cfg_ok = false;
        }
        for t in successors(b.instrs.last()) {
            if t.0 >= n {
                diags.push(Diagnostic::new(
                    here.clone(),
                    format!("branch to undeclared block {t}"),
                ));
                cfg_ok = false;
            }
        }
    }

    if cfg_ok && program.entry.0 < n {
        definite_assignment(program, &mut diags);
    }
    diags
}

fn successors(term: Option<&Instr>) -> Vec<BlockId> {
    match term {
        Some(Instr::Branch {
            on_true, on_false, ..
        }) => vec![*on_true, *on_false],
        Some(Instr::Jump(t)) => vec![*t],
        _ => Vec::new(),
    }
}

/// Must-assigned forward dataflow. Unreachable blocks keep the universal
/// set and so never report.
fn definite_assignment(program: &Program, diags: &mut Vec<Diagnostic>) {
    let n = program.blocks.len();
    let inputs: BTreeSet<Arc<str>> = program.inputs.iter().map(|d| d.name.clone()).collect();
    let mut all_assigned: BTreeSet<Arc<str>> = inputs.clone();
    for b in &program.blocks {
        for i in &b.instrs {
            if let Instr::Assign { var, .. } = i {
                all_assigned.insert(var.clone());
            }
        }
    }

    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, b) in program.blocks.iter().enumerate() {
        for t in successors(b.instrs.last()) {
            preds[t.0].push(i);
        }
    }

    // None = universal set (not yet reached)
    let mut block_in: Vec<Option<BTreeSet<Arc<str>>>> = vec![None; n];
    let mut block_out: Vec<Option<BTreeSet<Arc<str>>>> = vec![None; n];
    let entry = program.entry.0;
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            let mut incoming: Option<BTreeSet<Arc<str>>> = if i == entry {
                Some(inputs.clone())
            } else {
                None
            };
            for &p in &preds[i] {
                if let Some(out) = &block_out[p] {
                    incoming = Some(match incoming {
                        None => out.clone(),
                        Some(acc) => acc.intersection(out).cloned().collect(),
                    });
                }
            }
            let Some(incoming) = incoming else { continue };
            let mut out = incoming.clone();
            for instr in &program.blocks[i].instrs {
                if let Instr::Assign { var, .. } = instr {
                    out.insert(var.clone());
                }
            }
            if block_in[i].as_ref() != Some(&incoming) {
                block_in[i] = Some(incoming);
                changed = true;
            }
            if block_out[i].as_ref() != Some(&out) {
                block_out[i] = Some(out);
                changed = true;
            }
        }
    }

    let mut reported = HashSet::new();
    for (i, b) in program.blocks.iter().enumerate() {
        let mut defined = block_in[i].clone();
        for instr in &b.instrs {
            let reads: Vec<&Arc<str>> = match instr {
                Instr::Assign { expr, .. } | Instr::Branch { cond: expr, .. } => {
                    let mut v = Vec::new();
                    expr.for_each_var(&mut |name| v.push(name));
                    v
                }
                _ => Vec::new(),
            };
            for name in reads {
                if !all_assigned.contains(name) {
                    if reported.insert(name.clone()) {
                        diags.push(Diagnostic::new(
                            Some(b.label.clone()),
                            format!("undefined variable '{name}'"),
                        ));
                    }
                } else if let Some(d) = &defined {
                    if !d.contains(name) && reported.insert(name.clone()) {
                        diags.push(Diagnostic::new(
                            Some(b.label.clone()),
                            format!("{name} possibly unassigned"),
                        ));
                    }
                }
            }
            if let (Instr::Assign { var, .. }, Some(d)) = (instr, defined.as_mut()) {
                d.insert(var.clone());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, BasicBlock, Expr, LangError, SymDecl};

    fn diags_of(src: &str) -> Vec<String> {
        match parse_program(src) {
            Ok(_) => Vec::new(),
            Err(LangError::Validation(d)) => d.iter().map(|d| d.message.clone()).collect(),
            Err(e) => panic!("syntax error {e}"),
        }
    }

    #[test]
    fn find_middle_passes() {
        let p = parse_program(include_str!("../../../../corpus/find_middle.tdp")).unwrap();
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn unassigned_on_one_path() {
        let d = diags_of(
            "program p;\nsym x in [0, 3];\nif (x < 1) { t = 1; }\nif (t > 0) { exit(1); }",
        );
        assert_eq!(d, vec!["t possibly unassigned".to_string()]);
    }

    #[test]
    fn assigned_on_both_paths_is_fine() {
        let d = diags_of(
            "program p;\nsym x in [0, 3];\nif (x < 1) { t = 1; } else { t = 2; }\nif (t > x) { exit(1); }",
        );
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn loop_body_assignment_is_not_definite_after_loop() {
        let d =
            diags_of("program p;\nsym x in [0, 3];\nwhile (x < 2) { t = 1; x = x + 1; }\ny = t;");
        assert_eq!(d, vec!["t possibly unassigned".to_string()]);
    }

    #[test]
    fn never_assigned_is_undefined() {
        let d = diags_of("program p;\nsym x in [0, 3];\ny = q + x;");
        assert_eq!(d, vec!["undefined variable 'q'".to_string()]);
    }

    #[test]
    fn empty_domain_and_cap() {
        let d = diags_of("program p;\nsym x in [3, 0];\nsym y in [0, 70000];\n");
        assert_eq!(d.len(), 2);
        assert!(d[0].contains("empty domain"));
        assert!(d[1].contains("exceeds cap"));
    }

    #[test]
    fn missing_terminator_and_bad_target() {
        let p = Program {
            name: "p".into(),
            inputs: vec![SymDecl::new("x", 0, 1)],
            blocks: vec![
                BasicBlock {
                    id: BlockId(0),
                    label: "a".into(),
                    instrs: vec![Instr::Branch {
                        cond: Expr::var("x"),
                        on_true: BlockId(1),
                        on_false: BlockId(7),
                    }],
                },
                BasicBlock {
                    id: BlockId(1),
                    label: "b".into(),
                    instrs: vec![],
                },
            ],
            entry: BlockId(0),
        };
        let d: Vec<String> = validate(&p).iter().map(ToString::to_string).collect();
        assert_eq!(
            d,
            vec![
                "block a: branch to undeclared block b7".to_string(),
                "block b: missing terminator".to_string()
            ]
        );
    }
}
