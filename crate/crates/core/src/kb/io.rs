//! CSV loading and writing.
//!
//! `instances.csv`: header `id,kind,direction,f1,...,fm`, kind in {csp,cop},
//! direction in {min,max,none}.
//!
//! `runtimes.csv`: a first line `#timeout=<T>`, an optional column header, then
//! rows `instance_id,solver_id,outcome,time_s,trace[,trace_with_bound]`. A trace
//! is a `;`-separated list of `t:v` pairs. The optional sixth column encodes a
//! bound-conditioned run as `bound|outcome|time_s|trace`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    BoundedRun, Direction, KbError, KnowledgeBase, ProblemInstance, ProblemKind, SolverRecord,
    TracePoint,
};

pub const INSTANCES_FILE: &str = "instances.csv";
pub const RUNTIMES_FILE: &str = "runtimes.csv";

fn read(path: &Path) -> Result<String, KbError> {
    fs::read_to_string(path).map_err(|source| KbError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> KbError {
    KbError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Loads `instances.csv` and `runtimes.csv` from a directory.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    let dir = dir.as_ref();
    load_kb(dir.join(INSTANCES_FILE), dir.join(RUNTIMES_FILE))
}

pub fn load_kb(
    instances_path: impl AsRef<Path>,
    runtimes_path: impl AsRef<Path>,
) -> Result<KnowledgeBase, KbError> {
    let instances = parse_instances(instances_path.as_ref())?;
    let (timeout, portfolio, records) = parse_runtimes(runtimes_path.as_ref())?;
    KnowledgeBase::new(instances, portfolio, records, timeout)
}

pub(crate) fn parse_instances(path: &Path) -> Result<Vec<ProblemInstance>, KbError> {
    let text = read(path)?;
    let mut rdr = reader(&text);
    let mut header_fields = None;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.iter().all(str::is_empty) {
            continue;
        }
        let Some(width) = header_fields else {
            if row.len() < 3 || &row[0] != "id" || &row[1] != "kind" || &row[2] != "direction" {
                return Err(parse_err(path, line, "expected header id,kind,direction,f1,..."));
            }
            header_fields = Some(row.len());
            continue;
        };
        if row.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} fields, found {}", row.len()),
            ));
        }
        let kind = match row[1].to_ascii_lowercase().as_str() {
            "csp" => ProblemKind::Csp,
            "cop" => ProblemKind::Cop,
            other => return Err(parse_err(path, line, format!("unknown kind {other:?}"))),
        };
        let direction = match row[2].to_ascii_lowercase().as_str() {
            "min" => Direction::Minimize,
            "max" => Direction::Maximize,
            "none" => Direction::None,
            other => return Err(parse_err(path, line, format!("unknown direction {other:?}"))),
        };
        let features = row
            .iter()
            .skip(3)
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, line, format!("bad feature value: {e}")))?;
        let inst = ProblemInstance::new(&row[0], kind, direction, features)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(inst);
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no instances"));
    }
    Ok(out)
}

fn parse_trace(s: &str) -> Result<Vec<TracePoint>, String> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|pair| {
            let (t, v) = pair
                .split_once(':')
                .ok_or_else(|| format!("trace entry {pair:?} is not t:v"))?;
            let t = t.trim().parse::<f64>().map_err(|e| format!("trace time: {e}"))?;
            let v = v.trim().parse::<f64>().map_err(|e| format!("trace value: {e}"))?;
            Ok(TracePoint { t, v })
        })
        .collect()
}

fn parse_bounded(s: &str) -> Result<BoundedRun, String> {
    let parts: Vec<&str> = s.split('|').collect();
    if parts.len() != 4 {
        return Err(format!("trace_with_bound {s:?} is not bound|outcome|time|trace"));
    }
    Ok(BoundedRun {
        bound: parts[0].trim().parse().map_err(|e| format!("bound: {e}"))?,
        outcome: parts[1].parse()?,
        time: parts[2].trim().parse().map_err(|e| format!("time: {e}"))?,
        trace: parse_trace(parts[3])?,
    })
}

type Runtimes = (f64, Vec<String>, Vec<(String, SolverRecord)>);

pub(crate) fn parse_runtimes(path: &Path) -> Result<Runtimes, KbError> {
    let text = read(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let timeout = first
        .trim()
        .strip_prefix("#timeout=")
        .ok_or_else(|| parse_err(path, 1, "expected first line #timeout=<T>"))?
        .trim()
        .parse::<f64>()
        .map_err(|e| parse_err(path, 1, format!("bad timeout: {e}")))?;
    if !(timeout > 0.0 && timeout.is_finite()) {
        return Err(parse_err(path, 1, "timeout must be positive"));
    }
    let mut portfolio: Vec<String> = Vec::new();
    let mut records = Vec::new();
    for row in reader(rest).records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + 1);
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize + 1);
        if row.iter().all(str::is_empty) || row[0].starts_with('#') {
            continue;
        }
        if &row[0] == "instance_id" {
            continue;
        }
        if !(4..=6).contains(&row.len()) {
            return Err(parse_err(
                path,
                line,
                format!("expected 4 to 6 fields, found {}", row.len()),
            ));
        }
        let outcome = row[2].parse().map_err(|e: String| parse_err(path, line, e))?;
        let time = row[3]
            .parse::<f64>()
            .map_err(|e| parse_err(path, line, format!("bad time: {e}")))?;
        let trace = match row.get(4) {
            Some(t) => parse_trace(t).map_err(|e| parse_err(path, line, e))?,
            None => Vec::new(),
        };
        let with_bound = match row.get(5) {
            Some(b) if !b.is_empty() => Some(parse_bounded(b).map_err(|e| parse_err(path, line, e))?),
            _ => None,
        };
        let solver = row[1].to_string();
        if !portfolio.contains(&solver) {
            portfolio.push(solver.clone());
        }
        records.push((
            row[0].to_string(),
            SolverRecord {
                solver,
                outcome,
                time,
                trace,
                with_bound,
            },
        ));
    }
    if records.is_empty() {
        return Err(parse_err(path, 1, "no runtime records"));
    }
    Ok((timeout, portfolio, records))
}

fn fmt_trace(trace: &[TracePoint]) -> String {
    trace
        .iter()
        .map(|p| format!("{}:{}", p.t, p.v))
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes `instances.csv` for the knowledge base.
pub fn write_instances(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), KbError> {
    let mut out = String::from("id,kind,direction");
    for j in 0..kb.dims() {
        let _ = write!(out, ",f{}", j + 1);
    }
    out.push('\n');
    for p in kb.instances() {
        let kind = match p.kind {
            ProblemKind::Csp => "csp",
            ProblemKind::Cop => "cop",
        };
        let dir = match p.direction {
            Direction::Minimize => "min",
            Direction::Maximize => "max",
            Direction::None => "none",
        };
        let _ = write!(out, "{},{kind},{dir}", p.id);
        for f in &p.features {
            let _ = write!(out, ",{f}");
        }
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

/// Writes `runtimes.csv` for the knowledge base.
pub fn write_runtimes(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), KbError> {
    let mut out = format!("#timeout={}\ninstance_id,solver_id,outcome,time_s,trace,trace_with_bound\n", kb.timeout());
    for (i, p) in kb.instances().iter().enumerate() {
        for rec in kb.records(i) {
            let bounded = rec.with_bound.as_ref().map_or(String::new(), |b| {
                format!(
                    "{}|{}|{}|{}",
                    b.bound,
                    b.outcome.to_string().to_lowercase(),
                    b.time,
                    fmt_trace(&b.trace)
                )
            });
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.id,
                rec.solver,
                rec.outcome.to_string().to_lowercase(),
                rec.time,
                fmt_trace(&rec.trace),
                bounded
            );
        }
    }
    write_file(path.as_ref(), &out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), KbError> {
    fs::write(path, contents).map_err(|source| KbError::Io {
        path: PathBuf::from(path),
        source,
    })
}
