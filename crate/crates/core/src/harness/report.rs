//! Run reports: the CSV layout, the path digest and verification.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::PathVector;

pub const CSV_HEADER: [&str; 11] = [
    "row",
    "worker",
    "regions",
    "paths_completed",
    "frontier_states",
    "solver_queries",
    "cache_hits",
    "transfers_in",
    "transfers_out",
    "wall_ms",
    "detail",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerRow {
    pub worker: usize,
    pub regions: u64,
    pub paths_completed: u64,
    pub frontier_states: u64,
    pub solver_queries: u64,
    pub cache_hits: u64,
    pub transfers_in: u64,
    pub transfers_out: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    /// sha256 of the program's printed form.
    pub program: String,
    pub final_depth: u32,
    pub mode: String,
    pub workers: usize,
    pub search: String,
    pub rows: Vec<WorkerRow>,
    /// Sorted.
    pub completed: Vec<PathVector>,
    /// Sorted.
    pub frontier: Vec<PathVector>,
    pub transfers: u64,
    pub partial: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("report line {line}: {message}")]
    Format { line: u64, message: String },
}

impl RunReport {
    /// sha256 over the sorted lines `C:<bits>` and `F:<bits>`.
    pub fn path_digest(&self) -> String {
        let mut lines: Vec<String> = self
            .completed
            .iter()
            .map(|p| format!("C:{p}"))
            .chain(self.frontier.iter().map(|p| format!("F:{p}")))
            .collect();
        lines.sort();
        let mut h = Sha256::new();
        for l in &lines {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    fn summary_detail(&self) -> String {
        format!(
            "program={};final_depth={};mode={};workers={};search={};paths={};partial={}",
            self.program,
            self.final_depth,
            self.mode,
            self.workers,
            self.search,
            self.path_digest(),
            self.partial
        )
    }

    /// Writes the report. With `wall_time` false the wall_ms cells are
    /// left empty, which makes replayed runs byte-comparable.
    pub fn write_csv<W: io::Write>(&self, w: W, wall_time: bool) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        let wall = |ms: u64| {
            if wall_time {
                ms.to_string()
            } else {
                String::new()
            }
        };
        for r in &self.rows {
            out.write_record([
                "worker".to_string(),
                r.worker.to_string(),
                r.regions.to_string(),
                r.paths_completed.to_string(),
                r.frontier_states.to_string(),
                r.solver_queries.to_string(),
                r.cache_hits.to_string(),
                r.transfers_in.to_string(),
                r.transfers_out.to_string(),
                wall(r.wall_ms),
                String::new(),
            ])?;
        }
        let sum = |f: fn(&WorkerRow) -> u64| self.rows.iter().map(f).sum::<u64>().to_string();
        out.write_record([
            "summary".to_string(),
            String::new(),
            sum(|r| r.regions),
            self.completed.len().to_string(),
            self.frontier.len().to_string(),
            sum(|r| r.solver_queries),
            sum(|r| r.cache_hits),
            self.transfers.to_string(),
            self.transfers.to_string(),
            wall(self.wall_ms),
            self.summary_detail(),
        ])?;
        let paths = self
            .completed
            .iter()
            .map(|p| format!("C:{p}"))
            .chain(self.frontier.iter().map(|p| format!("F:{p}")));
        for detail in paths {
            let mut rec = vec![String::new(); CSV_HEADER.len()];
            rec[0] = "path".into();
            rec[10] = detail;
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, wall_time: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, wall_time)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<RunReport, ReportError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut report = RunReport::default();
        let mut saw_summary = false;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| ReportError::Format { line, message };
            if rec.len() != CSV_HEADER.len() {
                return Err(bad(format!("expected {} fields", CSV_HEADER.len())));
            }
            let num = |i: usize| -> Result<u64, ReportError> {
                let s = &rec[i];
                if s.is_empty() {
                    return Ok(0);
                }
                s.parse()
                    .map_err(|_| bad(format!("column {} is not a number: '{s}'", CSV_HEADER[i])))
            };
            match &rec[0] {
                "worker" => report.rows.push(WorkerRow {
                    worker: num(1)? as usize,
                    regions: num(2)?,
                    paths_completed: num(3)?,
                    frontier_states: num(4)?,
                    solver_queries: num(5)?,
                    cache_hits: num(6)?,
                    transfers_in: num(7)?,
                    transfers_out: num(8)?,
                    wall_ms: num(9)?,
                }),
                "summary" => {
                    saw_summary = true;
                    report.transfers = num(7)?;
                    report.wall_ms = num(9)?;
                    for kv in rec[10].split(';') {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| bad(format!("bad summary field '{kv}'")))?;
                        match k {
                            "program" => report.program = v.to_string(),
                            "final_depth" => {
                                report.final_depth = v
                                    .parse()
                                    .map_err(|_| bad(format!("bad final_depth '{v}'")))?
                            }
                            "mode" => report.mode = v.to_string(),
                            "workers" => {
                                report.workers =
                                    v.parse().map_err(|_| bad(format!("bad workers '{v}'")))?
                            }
                            "search" => report.search = v.to_string(),
                            "partial" => report.partial = v == "true",
                            _ => {}
                        }
                    }
                }
                "path" => {
                    let d = &rec[10];
                    let (kind, bits) = d
                        .split_once(':')
                        .ok_or_else(|| bad(format!("bad path '{d}'")))?;
                    let p = PathVector::from_str(bits).map_err(|e| bad(e.to_string()))?;
                    match kind {
                        "C" => report.completed.push(p),
                        "F" => report.frontier.push(p),
                        _ => return Err(bad(format!("bad path kind '{kind}'"))),
                    }
                }
                other => return Err(bad(format!("unknown row kind '{other}'"))),
            }
        }
        if !saw_summary {
            return Err(ReportError::Format {
                line: 0,
                message: "no summary row".into(),
            });
        }
        report.completed.sort();
        report.frontier.sort();
        Ok(report)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("reports are for different programs ({oracle} vs {candidate})")]
    ProgramMismatch { oracle: String, candidate: String },
    #[error("reports use different final depths ({oracle} vs {candidate})")]
    DepthMismatch { oracle: u32, candidate: u32 },
}

/// Path-level differences; `C:`/`F:` prefixed like the report rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
    pub duplicated: Vec<String>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty() && self.duplicated.is_empty()
    }
}

impl fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return f.write_str("verify: pass");
        }
        f.write_str("verify: FAIL")?;
        for (label, list) in [
            ("missing", &self.missing),
            ("unexpected", &self.unexpected),
            ("duplicated", &self.duplicated),
        ] {
            if !list.is_empty() {
                write!(f, "\n  {label}: {}", list.join(" "))?;
            }
        }
        Ok(())
    }
}

fn counts(r: &RunReport) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    let all = r
        .completed
        .iter()
        .map(|p| format!("C:{p}"))
        .chain(r.frontier.iter().map(|p| format!("F:{p}")));
    for k in all {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Passes when both reports hold the same path multiset and no path
/// occurs twice in the candidate.
pub fn verify(oracle: &RunReport, candidate: &RunReport) -> Result<VerifyOutcome, VerifyError> {
    if oracle.program != candidate.program {
        return Err(VerifyError::ProgramMismatch {
            oracle: oracle.program.clone(),
            candidate: candidate.program.clone(),
        });
    }
    if oracle.final_depth != candidate.final_depth {
        return Err(VerifyError::DepthMismatch {
            oracle: oracle.final_depth,
            candidate: candidate.final_depth,
        });
    }
    let want = counts(oracle);
    let got = counts(candidate);
    let mut out = VerifyOutcome::default();
    for (k, &n) in &want {
        if got.get(k).copied().unwrap_or(0) < n {
            out.missing.push(k.clone());
        }
    }
    for (k, &n) in &got {
        if n > 1 {
            out.duplicated.push(k.clone());
        }
        if !want.contains_key(k) {
            out.unexpected.push(k.clone());
        }
    }
    Ok(out)
}
