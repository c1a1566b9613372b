//! Reading and writing `job` and `resource_matrix` text files.
//!
//! Both formats are line oriented with whitespace-separated tokens. A `#`
//! starts a comment that runs to the end of the line; blank lines are
//! ignored. Output is canonical: single spaces, LF endings, tasks in ID order.
//!
//! Job file:
//!
//! ```text
//! job_name <name>
//! add_new_tasks <N>
//! <task_name> <task_id> <pred_id>* <HEAD|TAIL|BODY>     (N lines)
//! <task_name> <earliest_start_ms> <deadline_ms>         (N lines)
//! ```
//!
//! Resource matrix file, one block per processing element:
//!
//! ```text
//! add_new_resource <resource_id> <M>
//! <task_name> <execution_time_ms>                       (M lines)
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};

use indexmap::IndexMap;
use thiserror::Error;

use crate::model::{validate_job, JobSpec, Ms, Resource, ResourceMatrix, TaskId, TaskSpec, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Duplicate,
    MissingField,
    Range,
    InconsistentCount,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax",
            ParseErrorKind::Duplicate => "duplicate",
            ParseErrorKind::MissingField => "missing-field",
            ParseErrorKind::Range => "range",
            ParseErrorKind::InconsistentCount => "inconsistent-count",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}: {message}")]
pub struct ParseError {
    /// 1-based physical line number.
    pub line: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, kind: ParseErrorKind, message: impl Into<String>) -> Self {
        ParseError { line: line.max(1), kind, message: message.into() }
    }
}

/// A non-empty logical line: its 1-based physical number and its tokens.
struct Line<'a> {
    no: usize,
    tokens: Vec<&'a str>,
}

fn content_lines(text: &str) -> Vec<Line<'_>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = body.split_whitespace().collect();
            (!tokens.is_empty()).then_some(Line { no: i + 1, tokens })
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, ParseError> {
    tok.parse().map_err(|_| {
        ParseError::new(line, ParseErrorKind::Syntax, format!("{what}: expected a non-negative integer, got {tok:?}"))
    })
}

fn directive<'a>(line: Option<&'a Line<'a>>, keyword: &str, after: usize) -> Result<&'a Line<'a>, ParseError> {
    match line {
        Some(l) if l.tokens[0] == keyword => {
            if l.tokens.len() != 2 {
                return Err(ParseError::new(
                    l.no,
                    ParseErrorKind::Syntax,
                    format!("`{keyword}` takes exactly one argument"),
                ));
            }
            Ok(l)
        }
        Some(l) => Err(ParseError::new(l.no, ParseErrorKind::MissingField, format!("expected `{keyword}`"))),
        None => Err(ParseError::new(after + 1, ParseErrorKind::MissingField, format!("expected `{keyword}`"))),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flag {
    Head,
    Tail,
    Body,
}

pub fn parse_job(text: &str) -> Result<JobSpec, ParseError> {
    use ParseErrorKind::*;

    let lines = content_lines(text);
    let name_line = directive(lines.first(), "job_name", 0)?;
    let count_line = directive(lines.get(1), "add_new_tasks", name_line.no)?;
    let n: usize = parse_num(count_line.tokens[1], count_line.no, "add_new_tasks")?;
    if n == 0 {
        return Err(ParseError::new(count_line.no, Range, "a job needs at least one task"));
    }
    let body = &lines[2..];
    if body.len() != 2 * n {
        let at = body.get(2 * n).map_or(lines.last().map_or(1, |l| l.no), |l| l.no);
        return Err(ParseError::new(
            at,
            InconsistentCount,
            format!("add_new_tasks {n} needs {} structure and timing lines, found {}", 2 * n, body.len()),
        ));
    }
    let (structure, timing) = body.split_at(n);

    let mut slots: Vec<Option<(TaskSpec, Flag, usize)>> = (0..n).map(|_| None).collect();
    let mut by_name: HashMap<&str, TaskId> = HashMap::new();
    for l in structure {
        if l.tokens.len() < 3 {
            return Err(ParseError::new(
                l.no,
                MissingField,
                "expected `<task_name> <task_id> <pred_id>* <HEAD|TAIL|BODY>`",
            ));
        }
        let name = l.tokens[0];
        let id: TaskId = parse_num(l.tokens[1], l.no, "task id")?;
        let flag = match *l.tokens.last().expect("len checked") {
            "HEAD" => Flag::Head,
            "TAIL" => Flag::Tail,
            "BODY" => Flag::Body,
            other => {
                return Err(ParseError::new(
                    l.no,
                    Syntax,
                    format!("expected HEAD, TAIL or BODY as last token, got {other:?}"),
                ))
            }
        };
        let mut preds = BTreeSet::new();
        for tok in &l.tokens[2..l.tokens.len() - 1] {
            let p: TaskId = parse_num(tok, l.no, "predecessor id")?;
            if !preds.insert(p) {
                return Err(ParseError::new(l.no, Duplicate, format!("predecessor {p} listed twice")));
            }
        }
        if id >= n {
            return Err(ParseError::new(l.no, Range, format!("task id {id} outside 0..{n}")));
        }
        if slots[id].is_some() {
            return Err(ParseError::new(l.no, Duplicate, format!("task id {id} defined twice")));
        }
        if by_name.insert(name, id).is_some() {
            return Err(ParseError::new(l.no, Duplicate, format!("task name {name:?} defined twice")));
        }
        let task = TaskSpec {
            name: name.to_string(),
            id,
            predecessors: preds,
            is_head: false,
            is_tail: false,
            earliest_start: 0,
            deadline: 0,
        };
        slots[id] = Some((task, flag, l.no));
    }

    let mut timed = HashSet::new();
    for l in timing {
        if l.tokens.len() != 3 {
            return Err(ParseError::new(
                l.no,
                MissingField,
                "expected `<task_name> <earliest_start_ms> <deadline_ms>`",
            ));
        }
        let name = l.tokens[0];
        let Some(&id) = by_name.get(name) else {
            return Err(ParseError::new(l.no, Range, format!("timing line names unknown task {name:?}")));
        };
        if !timed.insert(id) {
            return Err(ParseError::new(l.no, Duplicate, format!("timing for task {name:?} given twice")));
        }
        let task = &mut slots[id].as_mut().expect("named task exists").0;
        task.earliest_start = parse_num(l.tokens[1], l.no, "earliest start")?;
        task.deadline = parse_num(l.tokens[2], l.no, "deadline")?;
    }

    let mut line_of = vec![0; n];
    let mut flags = Vec::with_capacity(n);
    let mut tasks = Vec::with_capacity(n);
    for (id, slot) in slots.into_iter().enumerate() {
        // n distinct in-range ids over n lines fill every slot.
        let (task, flag, no) = slot.expect("every id slot filled");
        line_of[id] = no;
        flags.push(flag);
        tasks.push(task);
    }
    let mut job = JobSpec { name: name_line.tokens[1].to_string(), tasks };
    job.derive_flags();

    for (t, flag) in job.tasks.iter().zip(&flags) {
        let expected = if t.is_head {
            Flag::Head
        } else if t.is_tail {
            Flag::Tail
        } else {
            Flag::Body
        };
        if *flag != expected {
            let want = match expected {
                Flag::Head => "HEAD",
                Flag::Tail => "TAIL",
                Flag::Body => "BODY",
            };
            return Err(ParseError::new(line_of[t.id], Syntax, format!("task {} must be flagged {want}", t.name)));
        }
    }

    if let Some(v) = validate_job(&job).into_iter().next() {
        let (line, kind) = match &v {
            Violation::DanglingPredecessor { task, .. }
            | Violation::SelfDependency { task }
            | Violation::Cycle { task } => (line_of[*task], Range),
            Violation::StartAfterDeadline { task } => {
                let no = timing.iter().find(|l| by_name[l.tokens[0]] == *task).map_or(1, |l| l.no);
                (no, Range)
            }
            _ => (count_line.no, Range),
        };
        return Err(ParseError::new(line, kind, v.to_string()));
    }
    Ok(job)
}

/// Parses a resource matrix and checks it is total over `job`'s tasks.
/// Blocks may appear in any resource-ID order; IDs must form `0..P`.
pub fn parse_resource_matrix(text: &str, job: &JobSpec) -> Result<ResourceMatrix, ParseError> {
    use ParseErrorKind::*;

    let lines = content_lines(text);
    let known: HashSet<&str> = job.tasks.iter().map(|t| t.name.as_str()).collect();
    let mut blocks: Vec<(usize, Resource)> = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut i = 0;
    while i < lines.len() {
        let header = &lines[i];
        if header.tokens[0] != "add_new_resource" {
            return Err(ParseError::new(
                header.no,
                Syntax,
                "expected `add_new_resource <resource_id> <number_of_tasks>`",
            ));
        }
        if header.tokens.len() != 3 {
            return Err(ParseError::new(
                header.no,
                MissingField,
                "`add_new_resource` takes a resource id and a task count",
            ));
        }
        let id: usize = parse_num(header.tokens[1], header.no, "resource id")?;
        let m: usize = parse_num(header.tokens[2], header.no, "task count")?;
        if !seen_ids.insert(id) {
            return Err(ParseError::new(header.no, Duplicate, format!("resource {id} defined twice")));
        }
        let entries = &lines[i + 1..];
        let available = entries.iter().take_while(|l| l.tokens[0] != "add_new_resource").count();
        if available != m {
            return Err(ParseError::new(
                header.no,
                InconsistentCount,
                format!("resource {id} declares {m} entries but has {available}"),
            ));
        }
        let mut perf: HashMap<&str, Ms> = HashMap::new();
        for l in &entries[..m] {
            if l.tokens.len() != 2 {
                return Err(ParseError::new(l.no, MissingField, "expected `<task_name> <execution_time_ms>`"));
            }
            let name = l.tokens[0];
            let e: Ms = parse_num(l.tokens[1], l.no, "execution time")?;
            if e == 0 {
                return Err(ParseError::new(l.no, Range, format!("execution time of {name:?} must be at least 1 ms")));
            }
            if !known.contains(name) {
                return Err(ParseError::new(l.no, Range, format!("unknown task {name:?}")));
            }
            if perf.insert(name, e).is_some() {
                return Err(ParseError::new(l.no, Duplicate, format!("task {name:?} listed twice for resource {id}")));
            }
        }
        let mut ordered = IndexMap::with_capacity(job.len());
        for t in &job.tasks {
            match perf.get(t.name.as_str()) {
                Some(&e) => {
                    ordered.insert(t.name.clone(), e);
                }
                None => {
                    return Err(ParseError::new(
                        header.no,
                        MissingField,
                        format!("resource {id} has no execution time for task {:?}", t.name),
                    ))
                }
            }
        }
        blocks.push((header.no, Resource { id, perf: ordered }));
        i += 1 + m;
    }
    if blocks.is_empty() {
        return Err(ParseError::new(1, MissingField, "no `add_new_resource` blocks"));
    }
    blocks.sort_by_key(|(_, r)| r.id);
    for (position, (no, r)) in blocks.iter().enumerate() {
        if r.id != position {
            return Err(ParseError::new(
                *no,
                Range,
                format!("resource ids must be 0..{}, found {}", blocks.len(), r.id),
            ));
        }
    }
    Ok(ResourceMatrix { resources: blocks.into_iter().map(|(_, r)| r).collect() })
}

pub fn write_job(job: &JobSpec) -> String {
    let mut tasks: Vec<&TaskSpec> = job.tasks.iter().collect();
    tasks.sort_by_key(|t| t.id);
    let mut out = String::new();
    let _ = writeln!(out, "job_name {}", job.name);
    let _ = writeln!(out, "add_new_tasks {}", tasks.len());
    for t in &tasks {
        out.push_str(&t.name);
        let _ = write!(out, " {}", t.id);
        for p in &t.predecessors {
            let _ = write!(out, " {p}");
        }
        out.push_str(if t.is_head {
            " HEAD\n"
        } else if t.is_tail {
            " TAIL\n"
        } else {
            " BODY\n"
        });
    }
    for t in &tasks {
        let _ = writeln!(out, "{} {} {}", t.name, t.earliest_start, t.deadline);
    }
    out
}

pub fn write_resource_matrix(rm: &ResourceMatrix) -> String {
    let mut out = String::new();
    for r in &rm.resources {
        let _ = writeln!(out, "add_new_resource {} {}", r.id, r.perf.len());
        for (name, e) in &r.perf {
            let _ = writeln!(out, "{name} {e}");
        }
    }
    out
}
