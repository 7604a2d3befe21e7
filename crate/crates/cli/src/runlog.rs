//! Line-delimited run log. The first line is a JSON header holding the
//! resolved config, then one tab-separated line per commit, then a JSON
//! footer, or a truncation marker if the run stopped early.
//!
//! Body floats are printed with 17 significant digits, so they parse back
//! to the same bits. Wall-clock data lives only in the trailing
//! `wall_*` body columns and the footer's `wall` object; everything else
//! is deterministic for simulated runs.

use std::fmt::Write as _;
use std::io::Write;

use passm::cell::CellKind;
use passm::engine::Mode;
use passm::trace::{Trace, TraceRecord, WallClock};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const FORMAT: &str = "passm-runlog";

pub const COLUMNS: [&str; 15] = [
    "k",
    "core",
    "mode",
    "time",
    "dtau",
    "local_step",
    "gamma",
    "flops",
    "components",
    "delays",
    "batch",
    "y",
    "delta",
    "values",
    "view",
];

pub const WALL_COLUMNS: [&str; 5] = [
    "wall_read_ns",
    "wall_commit_ns",
    "wall_lock_acquired_ns",
    "wall_lock_released_ns",
    "wall_elapsed_s",
];

const ABSENT: &str = "-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Starting point as stored in the cells.
    pub x0: Vec<f64>,
    pub cell: CellKind,
    pub columns: Vec<String>,
    pub wall_columns: Vec<String>,
}

impl Header {
    pub fn new(config: RunConfig, x0: Vec<f64>, cell: CellKind) -> Self {
        Self {
            format: FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config,
            x0,
            cell,
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            wall_columns: WALL_COLUMNS.iter().map(|c| c.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSummary {
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub iterations: u64,
    pub final_x: Vec<f64>,
    pub final_loss: f64,
    pub final_gap: f64,
    pub block_gaps: Vec<f64>,
    /// `exact` or `sampled`.
    pub gap_method: String,
    /// Largest per-core virtual clock.
    pub virtual_time: f64,
    pub max_delay: u32,
    pub flags: Vec<String>,
    pub wall: WallSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Commits logged before the stop.
    pub after: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Marker {
    Header(Box<Header>),
    Footer(Footer),
    Truncated(Truncation),
}

fn float(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn floats(out: &mut String, vs: &[f64]) {
    for (i, &v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        float(out, v);
    }
}

fn ints<T: std::fmt::Display>(out: &mut String, vs: &[T]) {
    for (i, v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
}

fn opt(out: &mut String, v: Option<u64>) {
    match v {
        Some(v) => {
            let _ = write!(out, "{v}");
        }
        None => out.push_str(ABSENT),
    }
}

pub fn format_record(r: &TraceRecord) -> String {
    let mut s = String::new();
    let _ = write!(s, "{}\t{}\t{}\t", r.k, r.core, r.mode.as_str());
    float(&mut s, r.time);
    s.push('\t');
    float(&mut s, r.dtau);
    let _ = write!(s, "\t{}\t", r.local_step);
    float(&mut s, r.gamma);
    let _ = write!(s, "\t{}\t", r.flops);
    ints(&mut s, &r.components);
    s.push('\t');
    ints(&mut s, &r.delays);
    s.push('\t');
    ints(&mut s, &r.batch);
    s.push('\t');
    floats(&mut s, &r.y);
    s.push('\t');
    floats(&mut s, &r.delta);
    s.push('\t');
    floats(&mut s, &r.values);
    s.push('\t');
    match &r.view {
        Some(v) => floats(&mut s, v),
        None => s.push_str(ABSENT),
    }
    let w = r.wall;
    for v in [
        w.map(|w| w.read_ns),
        w.map(|w| w.commit_ns),
        w.and_then(|w| w.lock_acquired_ns),
        w.and_then(|w| w.lock_released_ns),
    ] {
        s.push('\t');
        opt(&mut s, v);
    }
    s.push('\t');
    match w {
        Some(w) => float(&mut s, w.elapsed_s),
        None => s.push_str(ABSENT),
    }
    s
}

fn parse_list<T: std::str::FromStr>(field: &str, name: &str) -> Result<Vec<T>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|v| v.parse().map_err(|_| CliError::Log(format!("bad {name} entry {v:?}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field.parse().map_err(|_| CliError::Log(format!("bad {name} {field:?}")))
}

fn parse_opt(field: &str, name: &str) -> Result<Option<u64>> {
    if field == ABSENT {
        Ok(None)
    } else {
        parse_one(field, name).map(Some)
    }
}

pub fn parse_record(line: &str) -> Result<TraceRecord> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != COLUMNS.len() + WALL_COLUMNS.len() {
        return Err(CliError::Log(format!("record has {} fields, expected {}", f.len(), COLUMNS.len() + WALL_COLUMNS.len())));
    }
    let mode = match f[2] {
        "assm" => Mode::Assm,
        "passm" => Mode::Passm,
        other => return Err(CliError::Log(format!("unknown mode {other:?}"))),
    };
    let wall = match parse_opt(f[15], "read time")? {
        None => None,
        Some(read_ns) => Some(WallClock {
            read_ns,
            commit_ns: parse_opt(f[16], "commit time")?.unwrap_or(read_ns),
            lock_acquired_ns: parse_opt(f[17], "lock time")?,
            lock_released_ns: parse_opt(f[18], "lock time")?,
            elapsed_s: parse_one(f[19], "elapsed time")?,
        }),
    };
    Ok(TraceRecord {
        k: parse_one(f[0], "k")?,
        core: parse_one(f[1], "core")?,
        mode,
        time: parse_one(f[3], "time")?,
        dtau: parse_one(f[4], "dtau")?,
        local_step: parse_one(f[5], "local step")?,
        gamma: parse_one(f[6], "gamma")?,
        flops: parse_one(f[7], "flops")?,
        components: parse_list(f[8], "components")?,
        delays: parse_list(f[9], "delays")?,
        batch: parse_list(f[10], "batch")?,
        y: parse_list(f[11], "y")?,
        delta: parse_list(f[12], "delta")?,
        values: parse_list(f[13], "values")?,
        view: if f[14] == ABSENT { None } else { Some(parse_list(f[14], "view")?) },
        wall,
    })
}

/// Streams a log; every line is flushed through one buffered writer.
pub struct LogWriter<W: Write> {
    out: W,
    records: u64,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: &Header) -> Result<Self> {
        write_json(&mut out, &Marker::Header(Box::new(header.clone())))?;
        Ok(Self { out, records: 0 })
    }

    pub fn record(&mut self, r: &TraceRecord) -> Result<()> {
        writeln!(self.out, "{}", format_record(r)).map_err(CliError::io("writing run log"))?;
        self.records += 1;
        Ok(())
    }

    pub fn footer(mut self, footer: &Footer) -> Result<W> {
        write_json(&mut self.out, &Marker::Footer(footer.clone()))?;
        self.finish()
    }

    pub fn truncate(mut self, reason: &str) -> Result<W> {
        let marker = Marker::Truncated(Truncation {
            after: self.records,
            reason: reason.into(),
        });
        write_json(&mut self.out, &marker)?;
        self.finish()
    }

    fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(CliError::io("flushing run log"))?;
        Ok(self.out)
    }
}

fn write_json<W: Write>(out: &mut W, marker: &Marker) -> Result<()> {
    let line = serde_json::to_string(marker).map_err(|e| CliError::Log(e.to_string()))?;
    writeln!(out, "{line}").map_err(CliError::io("writing run log"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ending {
    Footer(Footer),
    Truncated(Truncation),
    /// The writer died before either marker.
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: Header,
    pub records: Vec<TraceRecord>,
    pub ending: Ending,
}

impl RunLog {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = match lines.next().map(serde_json::from_str::<Marker>) {
            Some(Ok(Marker::Header(h))) => *h,
            _ => return Err(CliError::Log("first line is not a run-log header".into())),
        };
        if header.format != FORMAT {
            return Err(CliError::Log(format!("unknown format {:?}", header.format)));
        }
        let mut records = Vec::new();
        let mut ending = Ending::Missing;
        for (i, line) in lines.enumerate() {
            if ending != Ending::Missing {
                return Err(CliError::Log(format!("line {} follows the end marker", i + 2)));
            }
            if line.starts_with('{') {
                ending = match serde_json::from_str::<Marker>(line) {
                    Ok(Marker::Footer(f)) => Ending::Footer(f),
                    Ok(Marker::Truncated(t)) => Ending::Truncated(t),
                    _ => return Err(CliError::Log(format!("line {} is not a footer", i + 2))),
                };
            } else {
                records.push(parse_record(line).map_err(|e| CliError::Log(format!("line {}: {e}", i + 2)))?);
            }
        }
        Ok(Self { header, records, ending })
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        Self::parse(&text)
    }

    pub fn footer(&self) -> Option<&Footer> {
        match &self.ending {
            Ending::Footer(f) => Some(f),
            _ => None,
        }
    }

    pub fn trace(&self) -> Trace {
        let mut t = Trace {
            x0: self.header.x0.clone(),
            cell: self.header.cell,
            momentum: self.header.config.momentum,
            staleness: self.header.config.asynchrony.staleness,
            records: self.records.clone(),
            final_x: Vec::new(),
            wall_elapsed_s: None,
        };
        let mut x = t.x0.clone();
        t.for_each_iterate(|_, it| x.copy_from_slice(it));
        t.final_x = x;
        if let Some(f) = self.footer() {
            if self.header.config.executor == crate::config::Executor::Threaded {
                t.wall_elapsed_s = Some(f.wall.elapsed_s);
            }
        }
        t
    }
}

/// The log with every wall-clock field blanked, as the schema marks them.
/// Two runs of the same simulated config agree on this exactly.
pub fn replay_view(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        if line.starts_with('{') {
            let mut v: serde_json::Value = serde_json::from_str(line).map_err(|e| CliError::Log(e.to_string()))?;
            if let Some(f) = v.get_mut("footer").and_then(|f| f.as_object_mut()) {
                f.remove("wall");
            }
            out.push_str(&v.to_string());
        } else {
            let fields: Vec<&str> = line.split('\t').take(COLUMNS.len()).collect();
            out.push_str(&fields.join("\t"));
        }
        out.push('\n');
    }
    Ok(out)
}
