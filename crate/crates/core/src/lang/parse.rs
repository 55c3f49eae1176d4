use std::collections::HashMap;
use std::sync::Arc;

use super::{
    validate, BasicBlock, BinOp, BlockId, Diagnostic, Expr, Instr, LangError, Program, SymDecl,
    UnOp,
};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ";", ",", "=", "<", ">", "+",
    "-", "*", "!",
];

const KEYWORDS: &[&str] = &[
    "program", "sym", "in", "if", "else", "while", "exit", "error", "and", "or", "not", "block",
    "br", "goto", "entry",
];

fn syntax(line: usize, col: usize, message: impl Into<String>) -> LangError {
    LangError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>, LangError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<u64>()
                .map_err(|_| syntax(line, col, format!("integer literal {text} out of range")))?;
            col += i - start;
            out.push(Token {
                tok: Tok::Int(value),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c == '"' {
            i += 1;
            col += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(syntax(start_line, start_col, "unterminated string"))
                    }
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => s.push(e),
                            Some('n') => s.push('\n'),
                            _ => return Err(syntax(line, col, "invalid escape in string")),
                        }
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let p = PUNCT
            .iter()
            .find(|p| rest.starts_with(**p))
            .ok_or_else(|| syntax(line, col, format!("unexpected character '{c}'")))?;
        i += p.len();
        col += p.len();
        out.push(Token {
            tok: Tok::Punct(p),
            line: start_line,
            col: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

#[derive(Debug)]
enum Stmt {
    Assign(Arc<str>, Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    Exit(i64),
    Error(String),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, LangError> {
        let t = self.peek();
        Err(syntax(t.line, t.col, message))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), LangError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(format!("expected '{p}'"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), LangError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected '{kw}'"))
        }
    }

    fn ident(&mut self) -> Result<String, LangError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn int_literal(&mut self) -> Result<i64, LangError> {
        let negative = self.eat_punct("-");
        match self.peek().tok {
            Tok::Int(v) => {
                let value = if negative {
                    0i128 - v as i128
                } else {
                    v as i128
                };
                let value = i64::try_from(value);
                match value {
                    Ok(v) => {
                        self.next();
                        Ok(v)
                    }
                    Err(_) => self.err("integer literal out of range"),
                }
            }
            _ => self.err("expected integer literal"),
        }
    }

    fn program(&mut self) -> Result<Program, LangError> {
        if !self.is_kw("program") {
            return self.err("expected program header");
        }
        self.next();
        let name = self.ident()?;
        self.expect_punct(";")?;

        let mut inputs = Vec::new();
        while self.eat_kw("sym") {
            let name = self.ident()?;
            self.expect_kw("in")?;
            self.expect_punct("[")?;
            let lo = self.int_literal()?;
            self.expect_punct(",")?;
            let hi = self.int_literal()?;
            self.expect_punct("]")?;
            self.expect_punct(";")?;
            inputs.push(SymDecl {
                name: name.into(),
                lo,
                hi,
            });
        }

        let (blocks, entry) = if self.is_kw("block") || self.is_kw("entry") {
            self.block_body()?
        } else {
            let stmts = self.stmts_until_eof()?;
            (Lowerer::lower(&stmts), BlockId(0))
        };
        Ok(Program {
            name,
            inputs,
            blocks,
            entry,
        })
    }

    fn stmts_until_eof(&mut self) -> Result<Vec<Stmt>, LangError> {
        let mut out = Vec::new();
        while self.peek().tok != Tok::Eof {
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn braced_stmts(&mut self) -> Result<Vec<Stmt>, LangError> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            if self.peek().tok == Tok::Eof {
                return self.err("expected '}'");
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn paren_expr(&mut self) -> Result<Expr, LangError> {
        self.expect_punct("(")?;
        let e = self.expr()?;
        self.expect_punct(")")?;
        Ok(e)
    }

    fn stmt(&mut self) -> Result<Stmt, LangError> {
        if self.eat_kw("if") {
            return self.if_tail();
        }
        if self.eat_kw("while") {
            let cond = self.paren_expr()?;
            let body = self.braced_stmts()?;
            return Ok(Stmt::While(cond, body));
        }
        if let Some(term) = self.terminal_stmt()? {
            return Ok(term);
        }
        let var = self.ident()?;
        self.expect_punct("=")?;
        let e = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt::Assign(var.into(), e))
    }

    fn terminal_stmt(&mut self) -> Result<Option<Stmt>, LangError> {
        if self.eat_kw("exit") {
            self.expect_punct("(")?;
            let code = self.int_literal()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            return Ok(Some(Stmt::Exit(code)));
        }
        if self.eat_kw("error") {
            self.expect_punct("(")?;
            let Tok::Str(label) = self.peek().tok.clone() else {
                return self.err("expected string literal");
            };
            self.next();
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            return Ok(Some(Stmt::Error(label)));
        }
        Ok(None)
    }

    fn if_tail(&mut self) -> Result<Stmt, LangError> {
        let cond = self.paren_expr()?;
        let then = self.braced_stmts()?;
        let otherwise = if self.eat_kw("else") {
            if self.eat_kw("if") {
                vec![self.if_tail()?]
            } else {
                self.braced_stmts()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If(cond, then, otherwise))
    }

    fn block_body(&mut self) -> Result<(Vec<BasicBlock>, BlockId), LangError> {
        struct Raw {
            label: String,
            instrs: Vec<RawInstr>,
        }
        enum RawInstr {
            Done(Instr),
            Branch(Expr, String, String),
            Goto(String),
        }

        let entry_label = if self.eat_kw("entry") {
            let l = self.ident()?;
            self.expect_punct(";")?;
            Some(l)
        } else {
            None
        };

        let mut raw = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut diags = Vec::new();
        while self.eat_kw("block") {
            let label = self.ident()?;
            if index.insert(label.clone(), raw.len()).is_some() {
                diags.push(Diagnostic::new(None, format!("duplicate block '{label}'")));
            }
            self.expect_punct("{")?;
            let mut instrs = Vec::new();
            while !self.eat_punct("}") {
                if self.eat_kw("br") {
                    let cond = self.paren_expr()?;
                    let t = self.ident()?;
                    let f = self.ident()?;
                    self.expect_punct(";")?;
                    instrs.push(RawInstr::Branch(cond, t, f));
                } else if self.eat_kw("goto") {
                    let t = self.ident()?;
                    self.expect_punct(";")?;
                    instrs.push(RawInstr::Goto(t));
                } else if let Some(term) = self.terminal_stmt()? {
                    instrs.push(RawInstr::Done(match term {
                        Stmt::Exit(c) => Instr::Exit(c),
                        Stmt::Error(l) => Instr::Error(l),
                        _ => unreachable!(),
                    }));
                } else if self.peek().tok == Tok::Eof {
                    return self.err("expected '}'");
                } else {
                    let var = self.ident()?;
                    self.expect_punct("=")?;
                    let expr = self.expr()?;
                    self.expect_punct(";")?;
                    instrs.push(RawInstr::Done(Instr::Assign {
                        var: var.into(),
                        expr,
                    }));
                }
            }
            raw.push(Raw { label, instrs });
        }
        if self.peek().tok != Tok::Eof {
            return self.err("expected 'block' or end of input");
        }
        if raw.is_empty() {
            return self.err("expected at least one block");
        }

        let resolve = |label: &str, from: &str, diags: &mut Vec<Diagnostic>| {
            index.get(label).copied().map(BlockId).unwrap_or_else(|| {
                diags.push(Diagnostic::new(
                    Some(from.to_string()),
                    format!("branch to undeclared block '{label}'"),
                ));
                BlockId(usize::MAX)
            })
        };
        let mut blocks = Vec::with_capacity(raw.len());
        for (i, b) in raw.iter().enumerate() {
            let instrs = b
                .instrs
                .iter()
                .map(|ri| match ri {
                    RawInstr::Done(instr) => instr.clone(),
                    RawInstr::Branch(cond, t, f) => Instr::Branch {
                        cond: cond.clone(),
                        on_true: resolve(t, &b.label, &mut diags),
                        on_false: resolve(f, &b.label, &mut diags),
                    },
                    RawInstr::Goto(t) => Instr::Jump(resolve(t, &b.label, &mut diags)),
                })
                .collect();
            blocks.push(BasicBlock {
                id: BlockId(i),
                label: b.label.clone(),
                instrs,
            });
        }
        let entry = match entry_label {
            Some(l) => resolve(&l, "entry", &mut diags),
            None => BlockId(0),
        };
        if diags.is_empty() {
            Ok((blocks, entry))
        } else {
            Err(LangError::Validation(diags))
        }
    }

    fn expr(&mut self) -> Result<Expr, LangError> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> Result<Expr, LangError> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("or", BinOp::Or), ("||", BinOp::Or)],
            &[("and", BinOp::And), ("&&", BinOp::And)],
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[
                ("<=", BinOp::Le),
                (">=", BinOp::Ge),
                ("<", BinOp::Lt),
                (">", BinOp::Gt),
            ],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        'outer: loop {
            for (text, op) in LEVELS[level] {
                let hit = match &self.peek().tok {
                    Tok::Punct(p) => p == text,
                    Tok::Ident(s) => s == text,
                    _ => false,
                };
                if hit {
                    self.next();
                    let rhs = self.binary_level(level + 1)?;
                    lhs = Expr::binary(*op, lhs, rhs);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        if self.is_punct("-") {
            if matches!(self.toks[self.pos + 1].tok, Tok::Int(_)) {
                return Ok(Expr::Const(self.int_literal()?));
            }
            self.next();
            return Ok(Expr::unary(UnOp::Neg, self.unary()?));
        }
        if self.eat_punct("!") || self.eat_kw("not") {
            return Ok(Expr::unary(UnOp::Not, self.unary()?));
        }
        match self.peek().tok.clone() {
            Tok::Int(_) => Ok(Expr::Const(self.int_literal()?)),
            Tok::Punct("(") => self.paren_expr(),
            Tok::Ident(_) => Ok(Expr::Var(self.ident()?.into())),
            _ => self.err("expected expression"),
        }
    }
}

/// Lowers structured statements into basic blocks. Blocks are created
/// lazily, so code following `exit`/`error` only materializes a block when
/// a statement is actually emitted there.
struct Lowerer {
    blocks: Vec<BasicBlock>,
    current: Option<usize>,
}

impl Lowerer {
    fn lower(stmts: &[Stmt]) -> Vec<BasicBlock> {
        let mut l = Lowerer {
            blocks: Vec::new(),
            current: None,
        };
        l.stmts(stmts);
        if l.current.is_some() || l.blocks.is_empty() {
            l.terminate(Instr::Exit(0));
        }
        l.blocks
    }

    fn new_block(&mut self) -> usize {
        let id = self.blocks.len();
        self.blocks.push(BasicBlock {
            id: BlockId(id),
            label: format!("b{id}"),
            instrs: Vec::new(),
        });
        id
    }

    fn cur(&mut self) -> usize {
        match self.current {
            Some(b) => b,
            None => {
                let b = self.new_block();
                self.current = Some(b);
                b
            }
        }
    }

    fn emit(&mut self, instr: Instr) {
        let b = self.cur();
        self.blocks[b].instrs.push(instr);
    }

    fn terminate(&mut self, instr: Instr) {
        self.emit(instr);
        self.current = None;
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Assign(var, expr) => self.emit(Instr::Assign {
                var: var.clone(),
                expr: expr.clone(),
            }),
            Stmt::Exit(code) => self.terminate(Instr::Exit(*code)),
            Stmt::Error(label) => self.terminate(Instr::Error(label.clone())),
            Stmt::If(cond, then, otherwise) => {
                let head = self.cur();
                let then_block = self.new_block();
                let else_block = self.new_block();
                self.blocks[head].instrs.push(Instr::Branch {
                    cond: cond.clone(),
                    on_true: BlockId(then_block),
                    on_false: BlockId(else_block),
                });
                self.current = Some(then_block);
                self.stmts(then);
                let then_end = self.current.take();
                if otherwise.is_empty() {
                    // the empty else block doubles as the join point
                    if let Some(end) = then_end {
                        self.blocks[end]
                            .instrs
                            .push(Instr::Jump(BlockId(else_block)));
                    }
                    self.current = Some(else_block);
                    return;
                }
                self.current = Some(else_block);
                self.stmts(otherwise);
                let else_end = self.current.take();
                if then_end.is_some() || else_end.is_some() {
                    let join = self.new_block();
                    for end in [then_end, else_end].into_iter().flatten() {
                        self.blocks[end].instrs.push(Instr::Jump(BlockId(join)));
                    }
                    self.current = Some(join);
                }
            }
            Stmt::While(cond, body) => {
                let head = self.new_block();
                self.emit(Instr::Jump(BlockId(head)));
                let body_block = self.new_block();
                let exit_block = self.new_block();
                self.blocks[head].instrs.push(Instr::Branch {
                    cond: cond.clone(),
                    on_true: BlockId(body_block),
                    on_false: BlockId(exit_block),
                });
                self.current = Some(body_block);
                self.stmts(body);
                if let Some(end) = self.current.take() {
                    self.blocks[end].instrs.push(Instr::Jump(BlockId(head)));
                }
                self.current = Some(exit_block);
            }
        }
    }
}

/// Parses and validates a `.tdp` source text.
///
/// Two body forms are accepted: structured statements (`if`/`while`/
/// assignments), which are lowered to basic blocks, or explicit labeled
/// `block` definitions, which is also the form the pretty-printer emits.
pub fn parse_program(text: &str) -> Result<Program, LangError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let program = parser.program()?;
    let diags = validate(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(LangError::Validation(diags))
    }
}
