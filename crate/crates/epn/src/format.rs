//! On-disk formats.
//!
//! EPN v1 (text, deterministic):
//!
//! ```text
//! EPN v1 N=<types>
//! events <total event instances>
//! type <id> <name>            one per type, ids 1..=N in order
//! <from> <to> <count>         one per nonzero cell, sorted by (from, to)
//! ```
//!
//! Names are percent-escaped (`%`, whitespace and control characters).
//! Lines starting with `#` are comments.
//!
//! STORE v1: a header `STORE v1 N=<types> capacity=<c> events=<e>` followed
//! by one presence vector per line, oldest first, as 16-digit hex words with
//! the lowest word first.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use epn_core::{
    generate_graph, Algorithm, DeltaBucket, EpnSnapshot, EvaluationReport, EventType, FrequencyMatrix,
    PresenceSampleStore, PresenceVector, RankedPrediction, TypeRegistry,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn escape_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        if c == '%' || c.is_whitespace() || c.is_control() {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                let _ = write!(out, "%{b:02X}");
            }
        } else {
            out.push(c);
        }
    }
    if out.is_empty() {
        out.push_str("%00");
    }
    out
}

pub fn unescape_name(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            let b = u8::from_str_radix(hex, 16).ok()?;
            if b != 0 || s != "%00" {
                out.push(b);
            }
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

pub fn write_epn<W: Write>(mut w: W, snapshot: &EpnSnapshot) -> Result<()> {
    let n = snapshot.n_types();
    writeln!(w, "EPN v1 N={n}")?;
    writeln!(w, "events {}", snapshot.total_events())?;
    for (id, name) in snapshot.registry().iter() {
        writeln!(w, "type {} {}", id.0, escape_name(name))?;
    }
    for (i, j, c) in snapshot.frequencies().nonzero() {
        writeln!(w, "{} {} {c}", i.0, j.0)?;
    }
    w.flush()?;
    Ok(())
}

fn content_lines<R: BufRead>(r: R) -> impl Iterator<Item = Result<(usize, String)>> {
    r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) => {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#')).then(|| Ok((i + 1, t.to_owned())))
        }
        Err(e) => Some(Err(e.into())),
    })
}

fn header_field<'a>(fields: &[&'a str], key: &str, line: usize) -> Result<&'a str> {
    fields
        .iter()
        .find_map(|f| f.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::format(line, format!("header lacks `{key}=`")))
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(line, format!("bad {what} `{s}`")))
}

pub fn read_epn<R: BufRead>(r: R) -> Result<EpnSnapshot> {
    let mut lines = content_lines(r);
    let (hl, header) = lines.next().transpose()?.ok_or_else(|| Error::format(1, "empty EPN file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 2 || fields[0] != "EPN" || fields[1] != "v1" {
        return Err(Error::format(hl, "not an `EPN v1` file"));
    }
    let n: usize = num(header_field(&fields, "N", hl)?, hl, "type count")?;

    let mut registry = TypeRegistry::new();
    let mut freq = FrequencyMatrix::new(n);
    let mut total_events = 0u64;
    for item in lines {
        let (ln, line) = item?;
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["events", v] => total_events = num(v, ln, "event count")?,
            ["type", id, name] => {
                let id: u32 = num(id, ln, "type id")?;
                if id as usize != registry.len() + 1 || registry.len() == n {
                    return Err(Error::format(ln, format!("type {id} out of sequence")));
                }
                let name = unescape_name(name).ok_or_else(|| Error::format(ln, "bad name escape"))?;
                if registry.register(&name) != EventType(id) {
                    return Err(Error::format(ln, format!("duplicate type name `{name}`")));
                }
            }
            [a, b, c] => {
                let (a, b): (u32, u32) = (num(a, ln, "type id")?, num(b, ln, "type id")?);
                let c: u64 = num(c, ln, "count")?;
                if a == 0 || b == 0 || a as usize > n || b as usize > n || a == b {
                    return Err(Error::format(ln, format!("bad edge {a} -> {b}")));
                }
                freq.add(EventType(a), EventType(b), c)?;
            }
            _ => return Err(Error::format(ln, format!("unrecognised line `{line}`"))),
        }
    }
    if registry.len() != n {
        return Err(Error::format(hl, format!("expected {n} types, found {}", registry.len())));
    }
    Ok(generate_graph(freq, registry, total_events)?)
}

pub fn write_store<W: Write>(mut w: W, store: &PresenceSampleStore) -> Result<()> {
    writeln!(
        w,
        "STORE v1 N={} capacity={} events={}",
        store.n_types(),
        store.capacity(),
        store.n_events_total()
    )?;
    let mut line = String::new();
    for s in store.samples() {
        line.clear();
        for word in s.words() {
            let _ = write!(line, "{word:016x}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_store<R: BufRead>(r: R) -> Result<PresenceSampleStore> {
    let mut lines = content_lines(r);
    let (hl, header) = lines.next().transpose()?.ok_or_else(|| Error::format(1, "empty store file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 2 || fields[0] != "STORE" || fields[1] != "v1" {
        return Err(Error::format(hl, "not a `STORE v1` file"));
    }
    let n: usize = num(header_field(&fields, "N", hl)?, hl, "type count")?;
    let cap: usize = num(header_field(&fields, "capacity", hl)?, hl, "capacity")?;
    let events: u64 = num(header_field(&fields, "events", hl)?, hl, "event count")?;
    let n_words = n.div_ceil(64);

    let mut store = PresenceSampleStore::new(n, cap);
    for item in lines {
        let (ln, line) = item?;
        if line.len() != 16 * n_words || !line.is_ascii() {
            return Err(Error::format(ln, "sample width does not match N"));
        }
        let words = (0..n_words)
            .map(|i| u64::from_str_radix(&line[16 * i..16 * i + 16], 16))
            .collect::<std::result::Result<Vec<u64>, _>>()
            .map_err(|_| Error::format(ln, "bad hex sample"))?;
        let v = PresenceVector::from_words(n, words.clone());
        if v.words() != words.as_slice() {
            return Err(Error::format(ln, "sample has bits beyond N"));
        }
        store.push(v, 0);
    }
    store.set_events_total(events);
    Ok(store)
}

/// One line of `predict` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub algorithm: String,
    pub rank: usize,
    pub type_id: u32,
    pub type_name: String,
    pub score: f64,
    pub explored_count: usize,
    pub expanded_count: usize,
    /// Query time in seconds.
    pub elapsed: f64,
}

pub fn prediction_records(
    algorithm: Algorithm,
    p: &RankedPrediction,
    registry: &TypeRegistry,
    elapsed_s: f64,
) -> Vec<PredictionRecord> {
    p.entries
        .iter()
        .enumerate()
        .map(|(i, &(t, s))| PredictionRecord {
            algorithm: algorithm.name().to_owned(),
            rank: i + 1,
            type_id: t.0,
            type_name: registry.name(t).unwrap_or_default().to_owned(),
            score: s,
            explored_count: p.explored_count,
            expanded_count: p.expanded_count,
            elapsed: elapsed_s,
        })
        .collect()
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "algorithm",
    "k",
    "delta",
    "n_tests",
    "n_hits",
    "hit_or_miss",
    "weighted",
    "mean_query_elapsed_s",
    "mean_explored",
    "mean_expanded",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: String,
    pub k: usize,
    pub delta: String,
    pub n_tests: u64,
    pub n_hits: u64,
    pub hit_or_miss: f64,
    pub weighted: f64,
    pub mean_query_elapsed_s: f64,
    pub mean_explored: f64,
    pub mean_expanded: f64,
}

pub fn report_rows(report: &EvaluationReport) -> Vec<ReportRow> {
    report
        .cells
        .iter()
        .map(|(key, c)| ReportRow {
            algorithm: key.algorithm.name().to_owned(),
            k: key.k,
            delta: key.delta.to_string(),
            n_tests: c.n_tests,
            n_hits: c.n_hits,
            hit_or_miss: c.hit_or_miss(),
            weighted: c.weighted(),
            mean_query_elapsed_s: c.mean_elapsed_ns() * 1e-9,
            mean_explored: c.mean_explored(),
            mean_expanded: c.mean_expanded(),
        })
        .collect()
}

/// Tidy CSV, one row per cell, preceded by a `# config` comment line.
pub fn write_report_csv<W: Write>(w: W, report: &EvaluationReport, config: &serde_json::Value) -> Result<()> {
    let mut w = w;
    writeln!(w, "# config {config}")?;
    let mut out = csv::Writer::from_writer(w);
    for row in report_rows(report) {
        out.serialize(row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(e.to_string())
}

#[derive(Debug, Serialize)]
struct ReportJson<'a> {
    config: &'a serde_json::Value,
    test_points: u64,
    skipped: u64,
    unknown_types: u64,
    setup_elapsed_s: f64,
    cells: Vec<ReportRow>,
}

pub fn write_report_json<W: Write>(mut w: W, report: &EvaluationReport, config: &serde_json::Value) -> Result<()> {
    let doc = ReportJson {
        config,
        test_points: report.test_points,
        skipped: report.skipped,
        unknown_types: report.unknown_types,
        setup_elapsed_s: report.setup_elapsed_ns as f64 * 1e-9,
        cells: report_rows(report),
    };
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::Invalid(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

/// Parses a `delta` column back into a bucket.
pub fn parse_delta(s: &str) -> Option<DeltaBucket> {
    if s == "all" {
        Some(DeltaBucket::All)
    } else if let Some(d) = s.strip_suffix('+') {
        d.parse().ok().map(DeltaBucket::Overflow)
    } else {
        s.parse().ok().map(DeltaBucket::Exact)
    }
}
